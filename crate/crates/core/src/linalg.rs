//! Compressed sparse-row matrices and the solvers used by the implicit
//! scheme: Jacobi-preconditioned conjugate gradients, and direct
//! tridiagonal elimination for one-dimensional systems.

use crate::error::{Error, Result};

/// Square CSR matrix with sorted, de-duplicated column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    offsets: Vec<usize>,
    columns: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= n || c >= n) {
            return Err(Error::Dimension {
                expected: n,
                got: r.max(c) + 1,
            });
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut offsets = vec![0; n + 1];
        let mut columns = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            columns.push(c);
            values.push(v);
            offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Ok(SparseMatrix {
            n,
            offsets,
            columns,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            offsets: (0..=n).collect(),
            columns: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        SparseMatrix {
            n,
            offsets: vec![0; n + 1],
            columns: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.columns[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    /// `self * scale + diag(extra)`, keeping the sparsity pattern (plus the diagonal).
    pub fn scaled_plus_diagonal(&self, scale: f64, extra: &[f64]) -> Result<Self> {
        if extra.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: extra.len(),
            });
        }
        let mut offsets = Vec::with_capacity(self.n + 1);
        let mut columns = Vec::with_capacity(self.nnz() + self.n);
        let mut values = Vec::with_capacity(self.nnz() + self.n);
        offsets.push(0);
        for (i, &d) in extra.iter().enumerate() {
            let mut placed = false;
            for (j, v) in self.row(i) {
                if !placed && j > i {
                    columns.push(i);
                    values.push(d);
                    placed = true;
                }
                if j == i {
                    columns.push(j);
                    values.push(scale * v + d);
                    placed = true;
                } else {
                    columns.push(j);
                    values.push(scale * v);
                }
            }
            if !placed {
                columns.push(i);
                values.push(d);
            }
            offsets.push(columns.len());
        }
        Ok(SparseMatrix {
            n: self.n,
            offsets,
            columns,
            values,
        })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            self.row(i)
                .all(|(j, v)| (self.get(j, i) - v).abs() <= tol * v.abs().max(1.0))
        })
    }

    /// Half bandwidth; 1 means tridiagonal.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        if y.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: y.len(),
            });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveConfig {
    pub rel_tol: f64,
    /// Iteration budget; `None` means `10 * n`.
    pub max_iter: Option<usize>,
    pub jacobi: bool,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig {
            rel_tol: 1e-10,
            max_iter: None,
            jacobi: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for symmetric positive-definite `a`. Stops when
/// `|b - Ax| <= rel_tol * |b|`.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], cfg: &LinearSolveConfig) -> Result<CgOutcome> {
    cg_solve_logged(a, b, cfg, |_| {})
}

/// [`cg_solve`] that hands every iterate to `observer`.
pub fn cg_solve_logged<F: FnMut(&[f64])>(
    a: &SparseMatrix,
    b: &[f64],
    cfg: &LinearSolveConfig,
    mut observer: F,
) -> Result<CgOutcome> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: b.len(),
        });
    }
    if !(cfg.rel_tol > 0.0 && cfg.rel_tol < 1.0) {
        return Err(Error::Config(format!(
            "CG tolerance must lie in (0,1), got {}",
            cfg.rel_tol
        )));
    }
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    observer(&x);
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = if cfg.jacobi {
        a.diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect()
    } else {
        vec![1.0; n]
    };
    let max_iter = cfg.max_iter.unwrap_or(10 * n.max(1));
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for it in 1..=max_iter {
        a.spmv_into(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve(format!(
                "matrix not positive definite (p'Ap = {pap:e}) at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        observer(&x);
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= cfg.rel_tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Direct elimination for a tridiagonal matrix (bandwidth <= 1).
pub fn tridiagonal_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: b.len(),
        });
    }
    if a.bandwidth() > 1 {
        return Err(Error::LinearSolve("matrix is not tridiagonal".into()));
    }
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 0..n {
        let lower = if i > 0 { a.get(i, i - 1) } else { 0.0 };
        let upper = if i + 1 < n { a.get(i, i + 1) } else { 0.0 };
        let denom = a.get(i, i) - if i > 0 { lower * c_prime[i - 1] } else { 0.0 };
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::LinearSolve(format!("zero pivot at row {i}")));
        }
        c_prime[i] = upper / denom;
        d_prime[i] = (b[i] - if i > 0 { lower * d_prime[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = d_prime;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c_prime[i] * x[i + 1];
    }
    Ok(x)
}

/// Routes tridiagonal systems to direct elimination and the rest to CG.
pub fn solve(a: &SparseMatrix, b: &[f64], cfg: &LinearSolveConfig) -> Result<Vec<f64>> {
    if a.bandwidth() <= 1 {
        tridiagonal_solve(a, b)
    } else {
        cg_solve(a, b, cfg).map(|o| o.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, h: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, -2.0 / (h * h)));
            if i > 0 {
                t.push((i, i - 1, 1.0 / (h * h)));
            }
            if i + 1 < n {
                t.push((i, i + 1, 1.0 / (h * h)));
            }
        }
        SparseMatrix::from_triplets(n, t).unwrap()
    }

    #[test]
    fn spmv_basics() {
        let i3 = SparseMatrix::identity(3);
        assert_eq!(i3.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(
            SparseMatrix::zeros(3).spmv(&[1.0, 2.0, 3.0]).unwrap(),
            vec![0.0; 3]
        );
        assert!(matches!(i3.spmv(&[1.0]), Err(Error::Dimension { .. })));

        let h = 0.1;
        let a = laplacian_1d(8, h);
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * h).powi(2)).collect();
        let y = a.spmv(&x).unwrap();
        for v in &y[1..7] {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicate_triplets_summed_and_sorted() {
        let a =
            SparseMatrix::from_triplets(2, vec![(0, 1, 1.0), (0, 0, 2.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(a.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (1, 4.0)]);
        assert!(SparseMatrix::from_triplets(2, vec![(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn diagonal_shift_inserts_missing_entries() {
        let a =
            SparseMatrix::from_triplets(3, vec![(0, 1, 1.0), (1, 1, 2.0), (2, 0, 3.0)]).unwrap();
        let b = a.scaled_plus_diagonal(2.0, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(b.row(0).collect::<Vec<_>>(), vec![(0, 1.0), (1, 2.0)]);
        assert_eq!(b.row(1).collect::<Vec<_>>(), vec![(1, 5.0)]);
        assert_eq!(b.row(2).collect::<Vec<_>>(), vec![(0, 6.0), (2, 1.0)]);
        assert!(a.scaled_plus_diagonal(1.0, &[0.0]).is_err());
    }

    #[test]
    fn cg_small_systems() {
        let cfg = LinearSolveConfig::default();
        let b = vec![1.0, -2.0, 0.5];
        let x = cg_solve(&SparseMatrix::identity(3), &b, &cfg).unwrap().x;
        assert_eq!(x, b);

        let a = SparseMatrix::from_triplets(
            2,
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        )
        .unwrap();
        let x = cg_solve(&a, &[1.0, 2.0], &cfg).unwrap().x;
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn cg_rejects_indefinite() {
        let a = SparseMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let cfg = LinearSolveConfig {
            jacobi: false,
            ..Default::default()
        };
        assert!(matches!(
            cg_solve(&a, &[0.0, 1.0], &cfg),
            Err(Error::LinearSolve(_))
        ));
    }

    #[test]
    fn cg_budget_exhaustion_reports_residual() {
        let a = laplacian_1d(50, 1.0)
            .scaled_plus_diagonal(-1.0, &[0.0; 50])
            .unwrap();
        let cfg = LinearSolveConfig {
            rel_tol: 1e-12,
            max_iter: Some(2),
            jacobi: false,
        };
        match cg_solve(&a, &vec![1.0; 50], &cfg) {
            Err(Error::Convergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tridiagonal_matches_cg() {
        let a = laplacian_1d(20, 0.5)
            .scaled_plus_diagonal(-1.0, &[0.3; 20])
            .unwrap();
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let direct = tridiagonal_solve(&a, &b).unwrap();
        let iterative = cg_solve(
            &a,
            &b,
            &LinearSolveConfig {
                rel_tol: 1e-13,
                ..Default::default()
            },
        )
        .unwrap()
        .x;
        for (d, c) in direct.iter().zip(&iterative) {
            assert!((d - c).abs() < 1e-9);
        }
    }
}
