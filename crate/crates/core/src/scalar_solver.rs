//! Backward-Euler solver for `u_t = d * Laplace(phi(u)) + f(x, t, u)` with
//! mixed Dirichlet / zero-flux boundary conditions.
//!
//! The unknown is the Kirchhoff variable `w = phi(u)`. Each step solves
//!
//! ```text
//! beta(w) - u_prev + tau * (A w - load) - tau * f(beta(w)) = 0
//! ```
//!
//! by damped Newton, where `A = -d * Laplace_h` is the cell-centered flux
//! stencil with ghost-value Dirichlet rows. Since `beta` maps the whole real
//! line into the admissible interval, no iterate can leave it.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{
    BoundaryMap, DirichletData, Face, FaceTag, Field, FieldRole, Grid, NormKind,
};
use crate::linalg::{self, LinearSolveConfig, SparseMatrix};
use crate::nonlinearity::{PhiEvaluator, SLOPE_FLOOR};
use crate::reactions::{ScalarSource, Source, SourcePoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Tolerance on the max-norm increment (relative to `1 + |w|`).
    pub tol: f64,
    /// Target max-norm residual. Residuals below `tol` are also accepted when
    /// they stop decreasing, or when the line search stalls.
    pub residual_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Retry a failed step as two half steps (one level).
    pub retry_half_step: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-9,
            residual_tol: 1e-12,
            max_iter: 50,
            max_halvings: 30,
            retry_half_step: true,
        }
    }
}

/// Negative discrete Laplacian `-Laplace_h` on a tagged grid: 3-point (1D) or
/// 5-point (2D) flux stencil, zero flux across Neumann faces, and ghost value
/// `2 w_D - w_cell` across Dirichlet faces.
pub fn assemble_operator(grid: &Grid, map: &BoundaryMap) -> Result<SparseMatrix> {
    let n = grid.len();
    let [hx, hy] = grid.spacing();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut triplets = Vec::with_capacity(5 * n);
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.index(i, j);
            let mut diag = 0.0;
            let mut couple = |q: usize, c: f64, diag: &mut f64| {
                triplets.push((p, q, -c));
                *diag += c;
            };
            let cx = 1.0 / (hx * hx);
            if i > 0 {
                couple(grid.index(i - 1, j), cx, &mut diag);
            } else if map.tag_of(Face::Left) == FaceTag::Dirichlet {
                diag += 2.0 * cx;
            }
            if i + 1 < nx {
                couple(grid.index(i + 1, j), cx, &mut diag);
            } else if map.tag_of(Face::Right) == FaceTag::Dirichlet {
                diag += 2.0 * cx;
            }
            if grid.dim() == 2 {
                let cy = 1.0 / (hy * hy);
                if j > 0 {
                    couple(grid.index(i, j - 1), cy, &mut diag);
                } else if map.tag_of(Face::Bottom) == FaceTag::Dirichlet {
                    diag += 2.0 * cy;
                }
                if j + 1 < ny {
                    couple(grid.index(i, j + 1), cy, &mut diag);
                } else if map.tag_of(Face::Top) == FaceTag::Dirichlet {
                    diag += 2.0 * cy;
                }
            }
            triplets.push((p, p, diag));
        }
    }
    SparseMatrix::from_triplets(n, triplets)
}

/// Affine part of the Dirichlet rows: `2 g / h^2` at cells touching a
/// Dirichlet face, so that `-Laplace_h w = A w - load`.
pub fn dirichlet_load(grid: &Grid, map: &BoundaryMap, data: &DirichletData) -> Vec<f64> {
    let mut load = vec![0.0; grid.len()];
    for face in map.dirichlet_faces() {
        let h = grid.normal_spacing(face);
        for (&node, &g) in grid.face_nodes(face).iter().zip(data.face_values(face)) {
            load[node] += 2.0 * g / (h * h);
        }
    }
    load
}

/// Discrete Dirichlet integral `sum |grad_h z|^2 * vol`, with half-cell
/// gradients `(z - g) / (h/2)` across Dirichlet faces.
pub fn gradient_energy(grid: &Grid, map: &BoundaryMap, z: &[f64], data: &DirichletData) -> f64 {
    let [hx, hy] = grid.spacing();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut sum = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.index(i, j);
            if i + 1 < nx {
                sum += (z[grid.index(i + 1, j)] - z[p]).powi(2) / (hx * hx);
            }
            if grid.dim() == 2 && j + 1 < ny {
                sum += (z[grid.index(i, j + 1)] - z[p]).powi(2) / (hy * hy);
            }
        }
    }
    for face in map.dirichlet_faces() {
        let h = grid.normal_spacing(face);
        for (&node, &g) in grid.face_nodes(face).iter().zip(data.face_values(face)) {
            sum += 2.0 * (z[node] - g).powi(2) / (h * h);
        }
    }
    sum * grid.cell_volume()
}

/// Solves `-Laplace_h v = rhs` with Dirichlet data on the tagged faces and
/// zero flux elsewhere.
pub fn solve_mixed_poisson(
    grid: &Grid,
    map: &BoundaryMap,
    rhs: f64,
    data: &DirichletData,
    cfg: &LinearSolveConfig,
) -> Result<Vec<f64>> {
    if map.is_pure_neumann() {
        return Err(Error::Precondition(
            "mixed problem needs a Dirichlet part (singular otherwise)".into(),
        ));
    }
    let a = assemble_operator(grid, map)?;
    let load = dirichlet_load(grid, map, data);
    let b: Vec<f64> = load.iter().map(|l| rhs + l).collect();
    linalg::solve(&a, &b, cfg)
}

/// Auxiliary barrier: `-Laplace v = c1` in the domain, `v = c2` on the
/// Dirichlet part, zero flux elsewhere. Returns the field and `K = max v`.
pub fn solve_barrier(grid: &Grid, map: &BoundaryMap, c1: f64, c2: f64) -> Result<(Field, f64)> {
    if !(c1 >= 0.0) || !c2.is_finite() {
        return Err(Error::Precondition(format!(
            "barrier needs c1 >= 0 and finite c2 (got {c1}, {c2})"
        )));
    }
    let data = DirichletData::uniform(grid, map, c2);
    let cfg = LinearSolveConfig {
        rel_tol: 1e-12,
        ..Default::default()
    };
    let values = if c1 == 0.0 {
        if map.is_pure_neumann() {
            return Err(Error::Precondition("barrier needs a Dirichlet part".into()));
        }
        vec![c2; grid.len()]
    } else {
        solve_mixed_poisson(grid, map, c1, &data, &cfg)?
    };
    let k = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((grid.field(FieldRole::Auxiliary, values)?, k))
}

/// `M0 = max(beta(K), -beta(-K))`.
pub fn sup_bound_m0(phi: &PhiEvaluator, k: f64) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(Error::Precondition(format!(
            "K must be nonnegative, got {k}"
        )));
    }
    Ok(phi.phi_inverse(k)?.max(-phi.phi_inverse(-k)?))
}

#[derive(Debug, Clone)]
pub struct ScalarProblem {
    pub grid: Grid,
    pub boundary: BoundaryMap,
    pub phi: PhiEvaluator,
    pub source: Arc<dyn Source>,
    /// Dirichlet values of `u` on the tagged faces.
    pub dirichlet_u: DirichletData,
    pub u0: Field,
    pub horizon: f64,
    pub tau: f64,
    /// Diffusion coefficient scaling the Laplacian.
    pub diffusion: f64,
    pub newton: NewtonConfig,
    pub linear: LinearSolveConfig,
    pub start_time: f64,
    pub start_step: usize,
}

impl ScalarProblem {
    /// Problem with zero Dirichlet data, no reaction, unit diffusion.
    pub fn new(
        grid: Grid,
        boundary: BoundaryMap,
        phi: PhiEvaluator,
        u0: Field,
        horizon: f64,
        tau: f64,
    ) -> Self {
        let dirichlet_u = DirichletData::uniform(&grid, &boundary, 0.0);
        ScalarProblem {
            grid,
            boundary,
            phi,
            source: Arc::new(ScalarSource::none()),
            dirichlet_u,
            u0,
            horizon,
            tau,
            diffusion: 1.0,
            newton: NewtonConfig::default(),
            linear: LinearSolveConfig::default(),
            start_time: 0.0,
            start_step: 0,
        }
    }

    pub fn with_source(mut self, source: Arc<dyn Source>) -> Self {
        self.source = source;
        self
    }

    pub fn with_dirichlet(mut self, data: DirichletData) -> Self {
        self.dirichlet_u = data;
        self
    }

    pub fn with_diffusion(mut self, d: f64) -> Self {
        self.diffusion = d;
        self
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.tau).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite())
            || !(self.horizon > 0.0 && self.horizon.is_finite())
        {
            return Err(Error::Config(format!(
                "need positive horizon and step (T = {}, tau = {})",
                self.horizon, self.tau
            )));
        }
        if !(self.diffusion > 0.0) {
            return Err(Error::Config(format!(
                "diffusion must be positive, got {}",
                self.diffusion
            )));
        }
        if self.u0.values.len() != self.grid.len() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                got: self.u0.values.len(),
            });
        }
        for (n, &u) in self.u0.values.iter().enumerate() {
            if !self.phi.spec().interval.contains(u) {
                return Err(Error::Domain(format!(
                    "initial value {u} at node {n} outside the interval"
                )));
            }
        }
        for face in self.boundary.dirichlet_faces() {
            for &u in self.dirichlet_u.face_values(face) {
                if !self.phi.spec().interval.contains(u) {
                    return Err(Error::Domain(format!(
                        "Dirichlet value {u} on {} outside the interval",
                        face.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub l1_u: f64,
    pub l2_u: f64,
    pub linf_u: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// `sum Phi(u; u_D) * vol`.
    pub energy_rel: f64,
    /// Cumulative `sum_k tau * |grad_h w_k|^2`.
    pub dirichlet_integral: f64,
    /// Cumulative `sum_k tau * <A w_k - load, w_k - w_D> * vol`.
    pub cross_integral: f64,
    /// Cumulative `sum_k tau * <f_k, w_k - w_D> * vol`.
    pub reaction_work: f64,
    /// Cumulative `sum_k tau * sum f_k * vol`.
    pub reaction_mass: f64,
    /// Cumulative net outflow through the Dirichlet part.
    pub boundary_flux: f64,
    /// `<u_k - u_{k-1}, w_k - w_D> * vol` for this step (0 at step 0).
    pub chain_pairing: f64,
    /// Cumulative `sum_k <u_k - u_{k-1}, w_k - w_{k-1}> * vol`, an upper
    /// bound for the accumulated convexity gap.
    pub increment_pairing: f64,
    /// Cumulative `sum_k tau * |f_k|^2 * vol`.
    pub reaction_l2_sq: f64,
    /// Cumulative `sum_k tau * |w_k - w_D|^2 * vol`.
    pub deviation_l2_sq: f64,
    pub mass: f64,
    pub newton_iters: usize,
    pub max_residual: f64,
}

impl StepRecord {
    /// Adds the running totals of `base` to this record's cumulative fields,
    /// used when a run is pasted together from windows.
    pub fn offset_cumulative(&mut self, base: &StepRecord) {
        self.dirichlet_integral += base.dirichlet_integral;
        self.cross_integral += base.cross_integral;
        self.reaction_work += base.reaction_work;
        self.reaction_mass += base.reaction_mass;
        self.boundary_flux += base.boundary_flux;
        self.reaction_l2_sq += base.reaction_l2_sq;
        self.deviation_l2_sq += base.deviation_l2_sq;
        self.increment_pairing += base.increment_pairing;
    }
}

#[derive(Debug, Clone)]
pub struct SolutionTrace {
    pub grid: Grid,
    pub tau: f64,
    pub records: Vec<StepRecord>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    /// Nodal extension of the Dirichlet data, in `u` and in `w`.
    pub u_dirichlet: Vec<f64>,
    pub w_dirichlet: Vec<f64>,
    /// `|grad_h w_D|^2` of the extension (time independent).
    pub dirichlet_gradient_sq: f64,
}

impl SolutionTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last_u(&self) -> &[f64] {
        self.u.last().expect("trace is never empty")
    }

    pub fn u_field(&self, k: usize) -> Field {
        Field::new(self.grid, FieldRole::U, self.u[k].clone()).expect("trace fields are finite")
    }

    pub fn max_u(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.max_u)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_u(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.min_u)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_newton_iters(&self) -> usize {
        self.records.iter().map(|r| r.newton_iters).sum()
    }
}

/// Result of one implicit step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub newton_iters: usize,
    pub residual: f64,
}

/// Precomputed operator, load and Dirichlet extension for one problem.
#[derive(Debug, Clone)]
pub struct ScalarSolver<'a> {
    problem: &'a ScalarProblem,
    operator: SparseMatrix,
    load: Vec<f64>,
    dirichlet_w: DirichletData,
    w_ext: Vec<f64>,
    u_ext: Vec<f64>,
    coords: Vec<[f64; 2]>,
}

impl<'a> ScalarSolver<'a> {
    pub fn new(problem: &'a ScalarProblem) -> Result<Self> {
        problem.validate()?;
        let grid = &problem.grid;
        let map = &problem.boundary;
        let d = problem.diffusion;
        let base = assemble_operator(grid, map)?;
        let operator = base.scaled_plus_diagonal(d, &vec![0.0; grid.len()])?;
        let mut dirichlet_w = problem.dirichlet_u.clone();
        for face in map.dirichlet_faces() {
            for &u in problem.dirichlet_u.face_values(face) {
                problem.phi.phi(u)?;
            }
        }
        dirichlet_w = dirichlet_w.map(|u| problem.phi.phi(u).unwrap_or(0.0));
        let load: Vec<f64> = dirichlet_load(grid, map, &dirichlet_w)
            .iter()
            .map(|l| d * l)
            .collect();
        let w_ext = if map.is_pure_neumann() {
            vec![0.0; grid.len()]
        } else if let Some(c) = dirichlet_w.uniform_value() {
            vec![c; grid.len()]
        } else {
            let cfg = LinearSolveConfig {
                rel_tol: 1e-13,
                ..problem.linear
            };
            solve_mixed_poisson(grid, map, 0.0, &dirichlet_w, &cfg)?
        };
        let u_ext = w_ext
            .iter()
            .map(|&w| problem.phi.phi_inverse(w))
            .collect::<Result<Vec<_>>>()?;
        let coords = (0..grid.len()).map(|n| grid.coords(n)).collect();
        Ok(ScalarSolver {
            problem,
            operator,
            load,
            dirichlet_w,
            w_ext,
            u_ext,
            coords,
        })
    }

    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn w_extension(&self) -> &[f64] {
        &self.w_ext
    }

    fn point(&self, node: usize, t: f64, step: usize) -> SourcePoint {
        SourcePoint {
            node,
            x: self.coords[node],
            t,
            step,
        }
    }

    fn invert(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        for (u, &w) in out.iter_mut().zip(w) {
            *u = self.problem.phi.phi_inverse(w)?;
        }
        Ok(())
    }

    /// Residual `beta(w) - u_prev + tau (A w - load) - tau f(beta(w))`.
    fn residual(
        &self,
        w: &[f64],
        u: &[f64],
        u_prev: &[f64],
        tau: f64,
        t: f64,
        step: usize,
    ) -> Result<Vec<f64>> {
        let aw = self.operator.spmv(w)?;
        let src = &self.problem.source;
        Ok((0..w.len())
            .map(|i| {
                let f = src.value(&self.point(i, t, step), u[i]);
                u[i] - u_prev[i] + tau * (aw[i] - self.load[i]) - tau * f
            })
            .collect())
    }

    fn newton(
        &self,
        w_prev: &[f64],
        u_prev: &[f64],
        tau: f64,
        t: f64,
        step: usize,
    ) -> Result<StepOutcome> {
        let cfg = &self.problem.newton;
        let phi = &self.problem.phi;
        let src = &self.problem.source;
        let n = w_prev.len();
        let mut w = w_prev.to_vec();
        let mut u = u_prev.to_vec();
        self.invert(&w, &mut u)?;
        let mut r = self.residual(&w, &u, u_prev, tau, t, step)?;
        let mut rn = max_abs(&r);
        let mut last_inc = f64::INFINITY;
        let mut prev_rn = f64::INFINITY;
        let mut u_try = vec![0.0; n];
        for it in 0..=cfg.max_iter {
            let scale = 1.0 + max_abs(&w);
            // Below `tol`, a residual that has stopped decreasing is at the
            // round-off floor. Near degenerate zeros beta behaves like a root
            // of w, so progress there is only linear, not stalled.
            let floor = rn <= cfg.tol && rn > 0.9 * prev_rn;
            if rn == 0.0 || (last_inc <= cfg.tol * scale && (rn <= cfg.residual_tol || floor)) {
                return Ok(StepOutcome {
                    w,
                    u,
                    newton_iters: it,
                    residual: rn,
                });
            }
            if it == cfg.max_iter {
                break;
            }
            let mut diag = vec![0.0; n];
            for i in 0..n {
                let slope = 1.0 / phi.phi_prime_unchecked(u[i]).max(SLOPE_FLOOR);
                let fu = if src.is_zero() {
                    0.0
                } else {
                    src.derivative(&self.point(i, t, step), u[i])
                };
                diag[i] = slope * (1.0 - tau * fu);
            }
            let jac = self.operator.scaled_plus_diagonal(tau, &diag)?;
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = linalg::solve(&jac, &rhs, &self.problem.linear)?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=cfg.max_halvings {
                let w_try: Vec<f64> = w.iter().zip(&delta).map(|(w, d)| w + lambda * d).collect();
                self.invert(&w_try, &mut u_try)?;
                let r_try = self.residual(&w_try, &u_try, u_prev, tau, t, step)?;
                let rn_try = max_abs(&r_try);
                if rn_try.is_finite()
                    && (rn_try < (1.0 - 1e-4 * lambda) * rn || rn_try <= 0.1 * cfg.residual_tol)
                {
                    last_inc = lambda * max_abs(&delta);
                    prev_rn = rn;
                    w = w_try;
                    u.copy_from_slice(&u_try);
                    r = r_try;
                    rn = rn_try;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                if rn <= cfg.tol {
                    // Stalled at round-off level.
                    return Ok(StepOutcome {
                        w,
                        u,
                        newton_iters: it + 1,
                        residual: rn,
                    });
                }
                return Err(Error::NewtonDivergence { step, residual: rn });
            }
        }
        Err(Error::NewtonDivergence { step, residual: rn })
    }

    /// Advances `(w_prev, u_prev)` by one step of length `tau` to time `t_next`.
    /// A failed step is retried once as two half steps when configured.
    pub fn implicit_step(
        &self,
        w_prev: &[f64],
        u_prev: &[f64],
        t_next: f64,
        step: usize,
    ) -> Result<StepOutcome> {
        if w_prev.len() != self.problem.grid.len() || u_prev.len() != w_prev.len() {
            return Err(Error::Dimension {
                expected: self.problem.grid.len(),
                got: w_prev.len(),
            });
        }
        if let Some(i) = w_prev.iter().chain(u_prev).position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "non-finite previous state at entry {i}"
            )));
        }
        let tau = self.tau();
        match self.newton(w_prev, u_prev, tau, t_next, step) {
            Ok(out) => Ok(out),
            Err(
                e @ (Error::NewtonDivergence { .. }
                | Error::LinearSolve(_)
                | Error::Convergence { .. }),
            ) if self.problem.newton.retry_half_step => {
                let half = 0.5 * tau;
                let mid = self
                    .newton(w_prev, u_prev, half, t_next - half, step)
                    .map_err(|_| e.clone())?;
                let end = self
                    .newton(&mid.w, &mid.u, half, t_next, step)
                    .map_err(|_| e.clone())?;
                Ok(StepOutcome {
                    newton_iters: mid.newton_iters + end.newton_iters,
                    ..end
                })
            }
            Err(Error::NewtonDivergence { residual, .. }) => {
                Err(Error::NewtonDivergence { step, residual })
            }
            Err(e) => Err(e),
        }
    }

    pub fn tau(&self) -> f64 {
        self.problem.horizon / self.problem.steps() as f64
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        step: usize,
        t: f64,
        u: &[f64],
        w: &[f64],
        prev: Option<(&StepRecord, &[f64], &[f64])>,
        newton_iters: usize,
        residual: f64,
    ) -> StepRecord {
        let grid = &self.problem.grid;
        let vol = grid.cell_volume();
        let phi = &self.problem.phi;
        let energy_rel: f64 = u
            .iter()
            .zip(&self.u_ext)
            .map(|(&u, &ud)| phi.relative_energy_unchecked(phi.clamp_to_interval(u), ud))
            .sum::<f64>()
            * vol;
        let mut rec = StepRecord {
            step,
            t,
            l1_u: grid_norm(grid, u, NormKind::L1),
            l2_u: grid_norm(grid, u, NormKind::L2),
            linf_u: grid_norm(grid, u, NormKind::Linf),
            min_u: u.iter().cloned().fold(f64::INFINITY, f64::min),
            max_u: u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            energy_rel,
            mass: u.iter().sum::<f64>() * vol,
            newton_iters,
            max_residual: residual,
            ..Default::default()
        };
        if let Some((p, u_prev, w_prev)) = prev {
            let tau = self.tau();
            let dev: Vec<f64> = w.iter().zip(&self.w_ext).map(|(w, wd)| w - wd).collect();
            let aw = self.operator.spmv(w).expect("dimensions checked");
            let flux: Vec<f64> = aw.iter().zip(&self.load).map(|(a, l)| a - l).collect();
            let src = &self.problem.source;
            let f: Vec<f64> = (0..u.len())
                .map(|i| src.value(&self.point(i, t, step), u[i]))
                .collect();
            let grad = gradient_energy(grid, &self.problem.boundary, w, &self.dirichlet_w);
            rec.dirichlet_integral = p.dirichlet_integral + tau * grad;
            rec.cross_integral = p.cross_integral + tau * dot(&flux, &dev) * vol;
            rec.reaction_work = p.reaction_work + tau * dot(&f, &dev) * vol;
            rec.reaction_mass = p.reaction_mass + tau * f.iter().sum::<f64>() * vol;
            rec.boundary_flux = p.boundary_flux + tau * flux.iter().sum::<f64>() * vol;
            rec.reaction_l2_sq = p.reaction_l2_sq + tau * dot(&f, &f) * vol;
            rec.deviation_l2_sq = p.deviation_l2_sq + tau * dot(&dev, &dev) * vol;
            rec.increment_pairing = p.increment_pairing
                + u.iter()
                    .zip(u_prev)
                    .zip(w.iter().zip(w_prev))
                    .map(|((u, up), (w, wp))| (u - up) * (w - wp))
                    .sum::<f64>()
                    * vol;
            rec.chain_pairing = u
                .iter()
                .zip(u_prev)
                .zip(&dev)
                .map(|((u, up), d)| (u - up) * d)
                .sum::<f64>()
                * vol;
        }
        rec
    }

    /// Diagnostics of the initial state (no steps taken).
    pub fn initial_record(&self) -> StepRecord {
        let p = self.problem;
        let w0: Vec<f64> =
            p.u0.values
                .iter()
                .map(|&u| p.phi.phi_unchecked(p.phi.clamp_to_interval(u)))
                .collect();
        self.record(p.start_step, p.start_time, &p.u0.values, &w0, None, 0, 0.0)
    }

    /// Runs all steps; on failure returns the partial trace with the error.
    pub fn run(&self) -> (SolutionTrace, Option<Error>) {
        let out = self.run_steps();
        if self.problem.phi.spec().interval.is_bounded() {
            note_bounded_peak(out.0.max_u());
        }
        out
    }

    fn run_steps(&self) -> (SolutionTrace, Option<Error>) {
        let p = self.problem;
        let phi = &p.phi;
        let steps = p.steps();
        let tau = self.tau();
        let u0: Vec<f64> = p.u0.values.clone();
        let w0: Vec<f64> = u0
            .iter()
            .map(|&u| phi.phi_unchecked(phi.clamp_to_interval(u)))
            .collect();
        let mut trace = SolutionTrace {
            grid: p.grid,
            tau,
            records: Vec::with_capacity(steps + 1),
            u: Vec::with_capacity(steps + 1),
            w: Vec::with_capacity(steps + 1),
            u_dirichlet: self.u_ext.clone(),
            w_dirichlet: self.w_ext.clone(),
            dirichlet_gradient_sq: gradient_energy(
                &p.grid,
                &p.boundary,
                &self.w_ext,
                &self.dirichlet_w,
            ),
        };
        trace.records.push(self.initial_record());
        trace.u.push(u0);
        trace.w.push(w0);
        for k in 1..=steps {
            let t = p.start_time + k as f64 * tau;
            let step = p.start_step + k;
            let (w_prev, u_prev) = (trace.w.last().unwrap(), trace.u.last().unwrap());
            match self.implicit_step(w_prev, u_prev, t, step) {
                Ok(out) => {
                    let rec = self.record(
                        step,
                        t,
                        &out.u,
                        &out.w,
                        Some((trace.records.last().unwrap(), u_prev, w_prev)),
                        out.newton_iters,
                        out.residual,
                    );
                    trace.records.push(rec);
                    trace.u.push(out.u);
                    trace.w.push(out.w);
                }
                Err(e) => return (trace, Some(e)),
            }
        }
        (trace, None)
    }
}

static BOUNDED_PEAK: AtomicU64 = AtomicU64::new(0xfff0_0000_0000_0000);

fn note_bounded_peak(value: f64) {
    if value.is_nan() {
        return;
    }
    let _ = BOUNDED_PEAK.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
        (value > f64::from_bits(bits)).then(|| value.to_bits())
    });
}

/// Largest `u` produced by any run in this process whose nonlinearity lives
/// on a bounded interval; `-inf` before the first such run.
pub fn bounded_interval_peak() -> f64 {
    f64::from_bits(BOUNDED_PEAK.load(Ordering::Relaxed))
}

/// Solves the whole horizon.
pub fn solve_scalar(problem: &ScalarProblem) -> Result<SolutionTrace> {
    let solver = ScalarSolver::new(problem)?;
    match solver.run() {
        (trace, None) => Ok(trace),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`solve_scalar`] but keeps the partial trace on failure.
pub fn solve_scalar_partial(problem: &ScalarProblem) -> Result<(SolutionTrace, Option<Error>)> {
    let solver = ScalarSolver::new(problem)?;
    Ok(solver.run())
}

fn grid_norm(grid: &Grid, v: &[f64], kind: NormKind) -> f64 {
    crate::geometry::discrete_norm(grid, v, kind)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::PhiSpec;

    fn dense(a: &SparseMatrix) -> Vec<Vec<f64>> {
        (0..a.dim())
            .map(|i| (0..a.dim()).map(|j| a.get(i, j)).collect())
            .collect()
    }

    #[test]
    fn neumann_rows_sum_to_zero() {
        let g = Grid::line(1.0, 4).unwrap();
        let a = assemble_operator(&g, &BoundaryMap::pure_neumann(&g)).unwrap();
        assert!(a.row_sums().iter().all(|s| s.abs() < 1e-12));
        let d = dense(&a);
        assert_eq!(d[1], vec![-16.0, 32.0, -16.0, 0.0]);
        let g2 = Grid::rect(1.0, 3, 2.0, 4).unwrap();
        let a2 = assemble_operator(&g2, &BoundaryMap::pure_neumann(&g2)).unwrap();
        assert!(a2.row_sums().iter().all(|s| s.abs() < 1e-10));
        assert!(a2.is_symmetric(1e-14));
    }

    #[test]
    fn dirichlet_ghost_row() {
        let g = Grid::line(1.0, 4).unwrap();
        let m = BoundaryMap::tag(&g, &[Face::Right]).unwrap();
        let a = assemble_operator(&g, &m).unwrap();
        let d = dense(&a);
        assert_eq!(d[3], vec![0.0, 0.0, -16.0, 48.0]);
        let load = dirichlet_load(&g, &m, &DirichletData::uniform(&g, &m, 0.5));
        assert_eq!(load, vec![0.0, 0.0, 0.0, 16.0]);
    }

    #[test]
    fn barrier_empty_gamma_rejected() {
        let g = Grid::line(1.0, 8).unwrap();
        let m = BoundaryMap::pure_neumann(&g);
        assert!(matches!(
            solve_barrier(&g, &m, 1.0, 0.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn barrier_constant_when_no_load() {
        let g = Grid::rect(1.0, 5, 1.0, 5).unwrap();
        let m = BoundaryMap::tag(&g, &[Face::Top]).unwrap();
        let (v, k) = solve_barrier(&g, &m, 0.0, 0.7).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.7));
        assert_eq!(k, 0.7);
    }

    #[test]
    fn m0_bounds() {
        let lin = PhiEvaluator::new(PhiSpec::linear(1.0).unwrap());
        assert_eq!(sup_bound_m0(&lin, 0.5).unwrap(), 0.5);
        assert_eq!(sup_bound_m0(&lin, 0.0).unwrap(), 0.0);
        let sing = PhiEvaluator::new(PhiSpec::singular_power(1.0, 1.0).unwrap());
        assert_eq!(sup_bound_m0(&sing, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn nan_previous_state_rejected() {
        let g = Grid::line(1.0, 4).unwrap();
        let m = BoundaryMap::pure_neumann(&g);
        let phi = PhiEvaluator::new(PhiSpec::linear(1.0).unwrap());
        let p = ScalarProblem::new(g, m, phi, g.constant(FieldRole::U, 0.1), 0.1, 0.01);
        let s = ScalarSolver::new(&p).unwrap();
        let w = vec![0.1, f64::NAN, 0.1, 0.1];
        assert!(matches!(
            s.implicit_step(&w, &w, 0.01, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn invalid_initial_data_rejected() {
        let g = Grid::line(1.0, 4).unwrap();
        let m = BoundaryMap::pure_neumann(&g);
        let phi = PhiEvaluator::new(PhiSpec::singular_power(1.0, 1.0).unwrap());
        let p = ScalarProblem::new(g, m, phi, g.constant(FieldRole::U, 1.0), 0.1, 0.01);
        assert!(matches!(solve_scalar(&p), Err(Error::Domain(_))));
    }
}
