//! Oracles shared by the integration tests.

use degensim::geometry::{BoundaryMap, FieldRole, Grid};
use degensim::nonlinearity::{PhiEvaluator, PhiSpec};
use degensim::scalar_solver::{solve_scalar, ScalarProblem};

/// Self-similar source solution of `u_t = (u^2)_xx`, shifted by `t0`.
pub fn barenblatt(x: f64, t: f64, c: f64, t0: f64) -> f64 {
    let s = t + t0;
    s.powf(-1.0 / 3.0) * (c - x * x * s.powf(-2.0 / 3.0) / 12.0).max(0.0)
}

/// Cell average of the Barenblatt profile by composite Simpson.
pub fn barenblatt_cell_avg(a: f64, b: f64, t: f64) -> f64 {
    let n = 64;
    let h = (b - a) / n as f64;
    let mut s = barenblatt(a, t, 0.1, 0.01) + barenblatt(b, t, 0.1, 0.01);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * barenblatt(a + k as f64 * h, t, 0.1, 0.01);
    }
    s * h / 3.0 / (b - a)
}

/// L1 error at `t = 0.1` of the half-domain run on `[0, 1]` with `n` cells
/// (zero flux at the symmetry axis and far away), `tau = 0.1 h`.
pub fn barenblatt_error(n: usize) -> f64 {
    let grid = Grid::line(1.0, n).unwrap();
    let h = 1.0 / n as f64;
    let phi = PhiEvaluator::new(PhiSpec::porous_medium(2.0).unwrap());
    let u0: Vec<f64> = (0..n)
        .map(|i| barenblatt_cell_avg(i as f64 * h, (i + 1) as f64 * h, 0.0))
        .collect();
    let u0 = grid.field(FieldRole::U, u0).unwrap();
    let horizon = 0.1;
    let tau = 0.1 * h;
    let p = ScalarProblem::new(
        grid,
        BoundaryMap::pure_neumann(&grid),
        phi,
        u0,
        horizon,
        tau,
    );
    let trace = solve_scalar(&p).unwrap();
    let u = trace.last_u();
    (0..n)
        .map(|i| (u[i] - barenblatt_cell_avg(i as f64 * h, (i + 1) as f64 * h, horizon)).abs() * h)
        .sum()
}
