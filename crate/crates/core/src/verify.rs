//! Numerical certification of the solvers' qualitative properties.
//!
//! Each check runs small controlled experiments and records the worst
//! measured margin. Checks never fail by returning an error: a solver error
//! during a check is reported as a failed entry.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coupled_solver::{picard_solve, CoupledProblem, PicardConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    discrete_norm, fmt17, BoundaryMap, DirichletData, Face, Field, FieldRole, Grid, NormKind,
};
use crate::nonlinearity::{PhiEvaluator, PhiSpec};
use crate::reactions::{BiofilmKinetics, Equation, FrozenPartner, ReactionSpec, ScalarSource};
use crate::scalar_solver::{
    solve_barrier, solve_scalar, sup_bound_m0, ScalarProblem, SolutionTrace,
};

/// Multiplicative slack on contraction ratios.
pub const RATIO_TOL: f64 = 0.05;
/// Additive slack for quantities that vanish in exact arithmetic.
pub const ABS_TOL: f64 = 1e-8;
/// Constant used for the energy inequality.
pub const ENERGY_CONSTANT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub check: String,
    pub instance: String,
    pub passed: bool,
    /// Worst measured quantity (ratio, residual or factor, per check).
    pub margin: f64,
    pub seed: Option<u64>,
    pub runtime_s: f64,
}

impl ReportEntry {
    fn failed(check: &str, instance: &str, err: &Error, seed: Option<u64>, start: Instant) -> Self {
        ReportEntry {
            check: check.into(),
            instance: format!("{instance} (error: {err})"),
            passed: false,
            margin: f64::NAN,
            seed,
            runtime_s: start.elapsed().as_secs_f64(),
        }
    }

    fn from_result(
        check: &str,
        seed: Option<u64>,
        start: Instant,
        res: Result<(String, bool, f64)>,
    ) -> Self {
        match res {
            Ok((instance, passed, margin)) => ReportEntry {
                check: check.into(),
                instance,
                passed,
                margin,
                seed,
                runtime_s: start.elapsed().as_secs_f64(),
            },
            Err(e) => Self::failed(check, "", &e, seed, start),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub entries: Vec<ReportEntry>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn get(&self, check: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.check == check)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,instance,status,margin,seed,runtime_s\n");
        for e in &self.entries {
            let seed = e.seed.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.check,
                csv_escape(&e.instance),
                if e.passed { "pass" } else { "fail" },
                fmt17(e.margin),
                seed,
                fmt17(e.runtime_s)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn l1_diff(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    discrete_norm(grid, &d, NormKind::L1)
}

fn l1_positive_part(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).max(0.0)).collect();
    discrete_norm(grid, &d, NormKind::L1)
}

fn with_u0(problem: &ScalarProblem, u0: Field) -> ScalarProblem {
    ScalarProblem {
        u0,
        ..problem.clone()
    }
}

fn twin_solve(problem: &ScalarProblem, other: Field) -> Result<(SolutionTrace, SolutionTrace)> {
    let twin = with_u0(problem, other);
    let (a, b) = rayon::join(|| solve_scalar(problem), || solve_scalar(&twin));
    Ok((a?, b?))
}

/// Worst ratio `|u_a(t) - u_b(t)|_1 / (exp(L t) |u_a(0) - u_b(0)|_1)` over
/// stamps, and whether every stamp satisfied the bound with slack `tol`.
pub fn check_l1_contraction(problem: &ScalarProblem, u0_b: Field, tol: f64) -> Result<(bool, f64)> {
    let (a, b) = twin_solve(problem, u0_b)?;
    let grid = &problem.grid;
    let l = problem.source.lipschitz();
    let d0 = l1_diff(grid, &a.u[0], &b.u[0]);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (k, rec) in a.records.iter().enumerate() {
        let bound = (l * (rec.t - problem.start_time)).exp() * d0;
        let d = l1_diff(grid, &a.u[k], &b.u[k]);
        ok &= d <= bound * (1.0 + tol) + ABS_TOL;
        if bound > 0.0 {
            worst = worst.max(d / bound);
        }
    }
    Ok((ok, worst))
}

/// Worst `|(u_low(t) - u_high(t))_+|_1` over stamps, checked against
/// `ABS_TOL + 10 tau |u_high(0)|_1`.
pub fn check_comparison(problem_low: &ScalarProblem, u0_high: Field) -> Result<(bool, f64)> {
    let grid = &problem_low.grid;
    if problem_low
        .u0
        .values
        .iter()
        .zip(&u0_high.values)
        .any(|(l, h)| l > h)
    {
        return Err(Error::Precondition(
            "comparison needs u0_low <= u0_high nodally".into(),
        ));
    }
    let (low, high) = twin_solve(problem_low, u0_high)?;
    let threshold = ABS_TOL + 10.0 * low.tau * discrete_norm(grid, &high.u[0], NormKind::L1);
    let worst = low
        .u
        .iter()
        .zip(&high.u)
        .map(|(l, h)| l1_positive_part(grid, l, h))
        .fold(0.0, f64::max);
    Ok((worst <= threshold, worst))
}

/// Residual of the discrete energy identity at each stamp:
/// `E_n - E_0 + sum tau <A w - load, w - w_D> - sum tau <f, w - w_D>`.
pub fn energy_identity_residuals(trace: &SolutionTrace) -> Vec<f64> {
    let e0 = trace.records[0].energy_rel;
    trace
        .records
        .iter()
        .map(|r| r.energy_rel - e0 + r.cross_integral - r.reaction_work)
        .collect()
}

/// Scale against which identity residuals are measured.
pub fn energy_scale(trace: &SolutionTrace) -> f64 {
    let last = trace.records.last().unwrap();
    trace
        .records
        .iter()
        .map(|r| r.energy_rel)
        .fold(
            last.cross_integral.abs().max(last.reaction_work.abs()),
            f64::max,
        )
        .max(f64::MIN_POSITIVE)
}

/// The identity residual is minus the accumulated convexity gap, so by
/// convexity of the energy it lies in `[-sum <du, dw> vol, 0]` at every
/// stamp. Checks that enclosure (with `ABS_TOL` per step for the nonlinear
/// solver) and returns the worst relative residual `max |res| / scale`.
pub fn check_energy_identity(trace: &SolutionTrace) -> (bool, f64) {
    let res = energy_identity_residuals(trace);
    let scale = energy_scale(trace);
    let worst = res.iter().fold(0.0_f64, |m, r| m.max(r.abs())) / scale;
    let enclosed = res
        .iter()
        .zip(&trace.records)
        .enumerate()
        .all(|(k, (&r, rec))| {
            let slack = ABS_TOL * (k as f64 + 1.0);
            r <= slack && r >= -rec.increment_pairing - slack
        });
    (enclosed, worst)
}

/// Both sides of the energy inequality:
/// `sup_n E_n + sum tau |grad w|^2` and
/// `C (E_0 + T |grad w_D|^2 + |f|_{L2} |w - w_D|_{L2})`.
pub fn energy_estimate_sides(trace: &SolutionTrace) -> (f64, f64) {
    let first = &trace.records[0];
    let last = trace.records.last().unwrap();
    let horizon = last.t - first.t;
    let sup_e = trace
        .records
        .iter()
        .map(|r| r.energy_rel)
        .fold(0.0, f64::max);
    let lhs = sup_e + last.dirichlet_integral;
    let rhs = ENERGY_CONSTANT
        * (first.energy_rel
            + horizon * trace.dirichlet_gradient_sq
            + last.reaction_l2_sq.sqrt() * last.deviation_l2_sq.sqrt());
    (lhs, rhs)
}

pub fn check_energy_estimate(trace: &SolutionTrace) -> (bool, f64) {
    let (lhs, rhs) = energy_estimate_sides(trace);
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= ABS_TOL {
        0.0
    } else {
        f64::INFINITY
    };
    (lhs <= rhs + ABS_TOL, ratio)
}

/// Per-step chain-rule defects `|E_n - E_{n-1} - <u_n - u_{n-1}, w_n - w_D>| / tau`.
pub fn chain_rule_defects(trace: &SolutionTrace) -> Vec<f64> {
    trace
        .records
        .windows(2)
        .map(|r| ((r[1].energy_rel - r[0].energy_rel) - r[1].chain_pairing).abs() / trace.tau)
        .collect()
}

/// Checks the initial energy against an independent evaluation of
/// `sum Phi(u0; u_D) vol`, the one-sided sign of every defect, and returns
/// the worst defect relative to `max |dE/dt|`.
pub fn check_chain_rule(trace: &SolutionTrace, phi: &PhiEvaluator) -> Result<(bool, f64)> {
    let exact_start = initial_energy(trace, phi)? == trace.records[0].energy_rel;
    let sign_ok = trace
        .records
        .windows(2)
        .all(|r| r[1].energy_rel - r[0].energy_rel <= r[1].chain_pairing + ABS_TOL);
    let rate = trace
        .records
        .windows(2)
        .map(|r| (r[1].energy_rel - r[0].energy_rel).abs() / trace.tau)
        .fold(0.0, f64::max);
    let worst = chain_rule_defects(trace).into_iter().fold(0.0, f64::max);
    let rel = if rate > 0.0 { worst / rate } else { worst };
    Ok((exact_start && sign_ok && rel <= 0.05, rel))
}

/// `max_{k <= window} |u_k - u_0|_1`.
pub fn early_deviation(trace: &SolutionTrace, window: usize) -> f64 {
    trace
        .u
        .iter()
        .take(window + 1)
        .map(|u| l1_diff(&trace.grid, u, &trace.u[0]))
        .fold(0.0, f64::max)
}

/// Ratio of a quantity measured at `tau` and at `tau / 2`.
pub fn halving_factor<F>(build: F, tau: f64, measure: fn(&SolutionTrace) -> f64) -> Result<f64>
where
    F: Fn(f64) -> ScalarProblem,
{
    let coarse = measure(&solve_scalar(&build(tau))?);
    let fine = measure(&solve_scalar(&build(0.5 * tau))?);
    Ok(if fine > 0.0 {
        coarse / fine
    } else {
        f64::INFINITY
    })
}

/// Runs the problem, computes the barrier constants and checks
/// `max u <= M0 + ABS_TOL`. Returns `(passed, M0, max u)`.
pub fn check_barrier_bound(problem: &ScalarProblem, theta: f64) -> Result<(bool, f64, f64)> {
    let phi = &problem.phi;
    let c1 = problem
        .source
        .sup_abs()
        .ok_or_else(|| Error::Precondition("barrier check needs a bounded source".into()))?
        / problem.diffusion;
    let max_u0 = problem.u0.max();
    let hi = phi.spec().interval.hi;
    if hi.is_finite() && max_u0 > hi - theta {
        return Err(Error::Precondition(format!(
            "initial data exceed 1 - theta = {}",
            hi - theta
        )));
    }
    let top = if hi.is_finite() { hi - theta } else { max_u0 };
    let mut c2 = phi.phi(top)?;
    for face in problem.boundary.dirichlet_faces() {
        for &u in problem.dirichlet_u.face_values(face) {
            c2 = c2.max(phi.phi(u)?.abs());
        }
    }
    let (_, k) = solve_barrier(&problem.grid, &problem.boundary, c1, c2)?;
    let m0 = sup_bound_m0(phi, k)?;
    let trace = solve_scalar(problem)?;
    let max_u = trace.max_u();
    let singular_ok = !hi.is_finite() || m0 < hi;
    Ok((
        max_u <= m0 + ABS_TOL && singular_ok && max_u < hi,
        m0,
        max_u,
    ))
}

/// Worst `|mass_n - mass_0 - sum tau sum f vol|` over stamps, relative to the
/// initial mass (absolute when the mass vanishes).
pub fn mass_drift(trace: &SolutionTrace) -> f64 {
    let m0 = trace.records[0].mass;
    let scale = if m0.abs() > 0.0 { m0.abs() } else { 1.0 };
    trace
        .records
        .iter()
        .map(|r| (r.mass - m0 - r.reaction_mass).abs() / scale)
        .fold(0.0, f64::max)
}

/// Backward Steklov average `(1/h) int_{t-h}^t u(s) ds` of the piecewise-linear
/// interpolant of `(times, values)`, extended by the first value before
/// `times[0]`, evaluated at every stamp.
pub fn steklov_average(times: &[f64], values: &[f64], h: f64) -> Result<Vec<f64>> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: values.len(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::Precondition(format!(
            "averaging width must be positive, got {h}"
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "stamps must be strictly increasing".into(),
        ));
    }
    let integral_to = |t: f64| -> f64 {
        // Integral of the interpolant from times[0] to t (t >= times[0]).
        let mut acc = 0.0;
        for k in 1..times.len() {
            let (a, b) = (times[k - 1], times[k]);
            if t <= a {
                break;
            }
            let e = t.min(b);
            let slope = (values[k] - values[k - 1]) / (b - a);
            let ve = values[k - 1] + slope * (e - a);
            acc += 0.5 * (values[k - 1] + ve) * (e - a);
            if t <= b {
                break;
            }
        }
        acc
    };
    let t0 = times[0];
    let primitive = |t: f64| -> f64 {
        if t <= t0 {
            values[0] * (t - t0)
        } else {
            integral_to(t)
        }
    };
    Ok(times
        .iter()
        .map(|&t| (primitive(t) - primitive(t - h)) / h)
        .collect())
}

/// Scalar presets used by the randomized checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `phi(u) = |u|^{m-1} u` with `m = 2`, no reaction, zero flux.
    PorousMedium,
    /// Singular `phi` with `a = b = 1`, biofilm kinetics with `v = 1`,
    /// homogeneous Dirichlet data on the right (1D) or top (2D) face.
    BiofilmScalar,
    /// Porous medium `m = 2` with `f = u (1 - u)`, zero flux.
    PorousFischer,
}

impl Preset {
    pub const ALL: [Preset; 3] = [
        Preset::PorousMedium,
        Preset::BiofilmScalar,
        Preset::PorousFischer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PorousMedium => "porous_medium",
            Preset::BiofilmScalar => "biofilm_scalar",
            Preset::PorousFischer => "porous_fischer",
        }
    }

    fn max_value(self) -> f64 {
        match self {
            Preset::BiofilmScalar => 0.9,
            _ => 1.0,
        }
    }

    /// Problem with the preset's `phi`, source and boundary, initial data `u0`.
    pub fn problem(self, grid: Grid, u0: Field, horizon: f64, tau: f64) -> Result<ScalarProblem> {
        let top = if grid.dim() == 2 {
            Face::Top
        } else {
            Face::Right
        };
        Ok(match self {
            Preset::PorousMedium => ScalarProblem::new(
                grid,
                BoundaryMap::pure_neumann(&grid),
                PhiEvaluator::new(PhiSpec::porous_medium(2.0)?),
                u0,
                horizon,
                tau,
            ),
            Preset::BiofilmScalar => {
                let source = FrozenPartner::constant(
                    ReactionSpec::biofilm(BiofilmKinetics::default()),
                    Equation::U,
                    1.0,
                );
                ScalarProblem::new(
                    grid,
                    BoundaryMap::tag(&grid, &[top])?,
                    PhiEvaluator::new(PhiSpec::singular_power(1.0, 1.0)?),
                    u0,
                    horizon,
                    tau,
                )
                .with_source(Arc::new(source))
            }
            Preset::PorousFischer => ScalarProblem::new(
                grid,
                BoundaryMap::pure_neumann(&grid),
                PhiEvaluator::new(PhiSpec::porous_medium(2.0)?),
                u0,
                horizon,
                tau,
            )
            .with_source(Arc::new(ScalarSource::new(ReactionSpec::porous_fischer())?)),
        })
    }
}

/// Sum of `count` smooth bumps `height * cos^2(pi r / (2 radius))` with random
/// centres, clipped to `max`.
pub fn random_bumps(grid: &Grid, rng: &mut ChaCha8Rng, count: usize, max: f64) -> Field {
    let bumps: Vec<([f64; 2], f64, f64)> = (0..count)
        .map(|_| {
            let c = [
                rng.gen_range(0.15..0.85) * grid.axis(0).length,
                if grid.dim() == 2 {
                    rng.gen_range(0.15..0.85) * grid.axis(1).length
                } else {
                    0.0
                },
            ];
            (c, rng.gen_range(0.08..0.2), rng.gen_range(0.2..0.8))
        })
        .collect();
    grid.sample(FieldRole::U, |x| {
        let s: f64 = bumps
            .iter()
            .map(|&(c, r, h)| {
                let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
                if d < r {
                    h * (std::f64::consts::FRAC_PI_2 * d / r).cos().powi(2)
                } else {
                    0.0
                }
            })
            .sum();
        s.min(max)
    })
}

/// Perturbs about 10% of the cells by `+-amplitude`, keeping values in `[0, max]`.
pub fn perturb(
    field: &Field,
    rng: &mut ChaCha8Rng,
    amplitude: f64,
    max: f64,
    signed: bool,
) -> Field {
    let mut out = field.clone();
    for v in out.values.iter_mut() {
        if rng.gen_bool(0.1) {
            let s = if signed && rng.gen_bool(0.5) {
                -1.0
            } else {
                1.0
            };
            *v = (*v + s * amplitude).clamp(0.0, max);
        }
    }
    out
}

/// Grid of instance `i`: alternates 64 cells in 1D and 32 x 32 in 2D.
pub fn instance_grid(i: usize) -> Grid {
    if i.is_multiple_of(2) {
        Grid::line(1.0, 64).expect("valid grid")
    } else {
        Grid::rect(1.0, 32, 1.0, 32).expect("valid grid")
    }
}

fn instance_rng(seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(i as u64),
    )
}

/// Settings shared by the randomized twin checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinSettings {
    pub instances: usize,
    pub horizon: f64,
    pub tau: f64,
}

impl Default for TwinSettings {
    fn default() -> Self {
        TwinSettings {
            instances: 20,
            horizon: 0.5,
            tau: 1e-3,
        }
    }
}

/// Randomized L1 contraction over `settings.instances` twins of a preset.
pub fn contraction_suite(preset: Preset, seed: u64, settings: TwinSettings) -> ReportEntry {
    let start = Instant::now();
    let check = format!("l1_contraction.{}", preset.name());
    let results: Vec<Result<(bool, f64)>> = (0..settings.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(seed, i);
            let grid = instance_grid(i);
            let count = rng.gen_range(1..=4);
            let a = random_bumps(&grid, &mut rng, count, preset.max_value());
            let b = perturb(&a, &mut rng, 0.05, preset.max_value(), true);
            let p = preset.problem(grid, a, settings.horizon, settings.tau)?;
            check_l1_contraction(&p, b, RATIO_TOL)
        })
        .collect();
    aggregate(&check, seed, start, settings.instances, results)
}

/// Randomized comparison principle over ordered twins of a preset.
pub fn comparison_suite(preset: Preset, seed: u64, settings: TwinSettings) -> ReportEntry {
    let start = Instant::now();
    let check = format!("comparison.{}", preset.name());
    let results: Vec<Result<(bool, f64)>> = (0..settings.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(seed ^ 0xc0ffee, i);
            let grid = instance_grid(i);
            let count = rng.gen_range(1..=4);
            let high = random_bumps(&grid, &mut rng, count, preset.max_value());
            let mut low = perturb(&high, &mut rng, 0.1, preset.max_value(), false);
            // Subtracting instead of adding keeps the order.
            for (l, h) in low.values.iter_mut().zip(&high.values) {
                *l = (2.0 * h - *l).max(0.0).min(*h);
            }
            let p = preset.problem(grid, low, settings.horizon, settings.tau)?;
            check_comparison(&p, high)
        })
        .collect();
    aggregate(&check, seed, start, settings.instances, results)
}

fn aggregate(
    check: &str,
    seed: u64,
    start: Instant,
    n: usize,
    results: Vec<Result<(bool, f64)>>,
) -> ReportEntry {
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for r in &results {
        match r {
            Ok((ok, m)) => {
                worst = worst.max(*m);
                failures += usize::from(!ok);
            }
            Err(e) => {
                return ReportEntry::failed(check, &format!("{n} instances"), e, Some(seed), start)
            }
        }
    }
    ReportEntry {
        check: check.into(),
        instance: format!("{n} instances, {failures} failures"),
        passed: failures == 0,
        margin: worst,
        seed: Some(seed),
        runtime_s: start.elapsed().as_secs_f64(),
    }
}

/// Linear `phi`, no reaction, zero Dirichlet data at both ends of [0, 1],
/// `u0 = sin(pi x)`, 64 cells.
pub fn linear_dirichlet_problem(horizon: f64, tau: f64) -> Result<ScalarProblem> {
    let grid = Grid::line(1.0, 64)?;
    let map = BoundaryMap::tag(&grid, &[Face::Left, Face::Right])?;
    let u0 = grid.sample(FieldRole::U, |x| (std::f64::consts::PI * x[0]).sin());
    Ok(ScalarProblem::new(
        grid,
        map,
        PhiEvaluator::new(PhiSpec::linear(1.0)?),
        u0,
        horizon,
        tau,
    ))
}

/// Porous medium `m = 2` with a single smooth bump, zero flux, 64 cells.
pub fn degenerate_bump_problem(horizon: f64, tau: f64) -> Result<ScalarProblem> {
    let grid = Grid::line(1.0, 64)?;
    let u0 = grid.sample(FieldRole::U, |x| {
        let d = (x[0] - 0.5).abs();
        if d < 0.25 {
            0.8 * (2.0 * std::f64::consts::PI * d).cos().powi(2)
        } else {
            0.0
        }
    });
    Ok(ScalarProblem::new(
        grid,
        BoundaryMap::pure_neumann(&grid),
        PhiEvaluator::new(PhiSpec::porous_medium(2.0)?),
        u0,
        horizon,
        tau,
    ))
}

/// Time steps of the energy and chain-rule refinement studies.
pub const REFINEMENT_TAUS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Worst identity residual for each step in [`REFINEMENT_TAUS`] and the two
/// successive halving factors.
pub fn energy_refinement() -> Result<(Vec<f64>, Vec<f64>)> {
    let residuals = REFINEMENT_TAUS
        .par_iter()
        .map(|&tau| {
            let trace = solve_scalar(&linear_dirichlet_problem(0.1, tau)?)?;
            Ok(energy_identity_residuals(&trace)
                .iter()
                .fold(0.0_f64, |m, r| m.max(r.abs())))
        })
        .collect::<Result<Vec<f64>>>()?;
    let factors = residuals.windows(2).map(|r| r[0] / r[1]).collect();
    Ok((residuals, factors))
}

/// Worst per-step chain-rule defect for each step in [`REFINEMENT_TAUS`] and
/// the halving factors.
pub fn chain_rule_refinement() -> Result<(Vec<f64>, Vec<f64>)> {
    let defects = REFINEMENT_TAUS
        .par_iter()
        .map(|&tau| {
            let trace = solve_scalar(&linear_dirichlet_problem(0.1, tau)?)?;
            Ok(chain_rule_defects(&trace).into_iter().fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let factors = defects.windows(2).map(|r| r[0] / r[1]).collect();
    Ok((defects, factors))
}

/// Early-window deviation at `tau` and `tau / 2` on the degenerate bump.
pub fn initial_attainment_factor(tau: f64) -> Result<f64> {
    halving_factor(
        |t| degenerate_bump_problem(20.0 * tau, t).expect("valid preset"),
        tau,
        |tr| early_deviation(tr, 10),
    )
}

/// Biofilm scalar preset on [0, 1] with `Gamma = {1}` and `u0 <= 1 - theta`.
pub fn barrier_problem(cells: usize, theta: f64, horizon: f64, tau: f64) -> Result<ScalarProblem> {
    let grid = Grid::line(1.0, cells)?;
    let u0 = grid.sample(FieldRole::U, |x| if x[0] < 0.5 { 1.0 - theta } else { 0.2 });
    Preset::BiofilmScalar.problem(grid, u0, horizon, tau)
}

/// Coupled biofilm problem: `u` bumps, `v = 1` initially and on the
/// Dirichlet face, unit kinetics.
pub fn coupled_biofilm_problem(
    grid: Grid,
    seed: u64,
    horizon: f64,
    tau: f64,
) -> Result<CoupledProblem> {
    let top = if grid.dim() == 2 {
        Face::Top
    } else {
        Face::Right
    };
    let bu = BoundaryMap::tag(&grid, &[top])?;
    let bv = BoundaryMap::tag(&grid, &[top])?;
    let mut rng = instance_rng(seed, 0);
    let u0 = random_bumps(&grid, &mut rng, 3, 0.9);
    let mut p = CoupledProblem::new(
        grid,
        bu,
        bv.clone(),
        PhiEvaluator::new(PhiSpec::singular_power(1.0, 1.0)?),
        ReactionSpec::biofilm(BiofilmKinetics::default()),
        u0,
        grid.constant(FieldRole::V, 1.0),
        horizon,
        tau,
    );
    p.dirichlet_v = DirichletData::uniform(&grid, &bv, 1.0);
    Ok(p)
}

/// Picard statistics: worst sweep count, worst asymptotic ratio, and the
/// ranges of `u` and `v`. Ratios count once the previous distance is above
/// `10 * tol` (below that the solver's own tolerance dominates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardStats {
    pub max_sweeps: usize,
    pub worst_ratio: f64,
    pub u_range: (f64, f64),
    pub v_range: (f64, f64),
}

pub fn picard_stats(problem: &CoupledProblem, cfg: &PicardConfig) -> Result<PicardStats> {
    let tr = picard_solve(problem, cfg)?;
    let worst_ratio = tr
        .windows
        .iter()
        .flat_map(|w| {
            w.distances
                .windows(2)
                .filter(|d| d[0] > 10.0 * cfg.tol)
                .map(|d| d[1] / d[0])
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    Ok(PicardStats {
        max_sweeps: tr.max_sweeps(),
        worst_ratio,
        u_range: tr.u_range(),
        v_range: tr.v_range(),
    })
}

impl PicardStats {
    pub fn passes(&self, cfg: &PicardConfig) -> bool {
        self.max_sweeps <= 10
            && self.worst_ratio <= cfg.safety + 0.1
            && self.u_range.0 >= -ABS_TOL
            && self.u_range.1 < 1.0
            && self.v_range.0 >= -ABS_TOL
            && self.v_range.1 <= 1.0 + ABS_TOL
    }
}

/// Which group of checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Contraction,
    Energy,
    Barrier,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "contraction" => Ok(Suite::Contraction),
            "energy" => Ok(Suite::Energy),
            "barrier" => Ok(Suite::Barrier),
            other => Err(Error::Config(format!(
                "unknown suite '{other}' (expected all, contraction, energy or barrier)"
            ))),
        }
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

fn timed<F>(check: &str, seed: Option<u64>, f: F) -> ReportEntry
where
    F: FnOnce() -> Result<(String, bool, f64)>,
{
    let start = Instant::now();
    ReportEntry::from_result(check, seed, start, f())
}

fn contraction_checks(seed: u64) -> Vec<ReportEntry> {
    let settings = TwinSettings::default();
    let mut out = Vec::new();
    for preset in Preset::ALL {
        out.push(contraction_suite(preset, seed, settings));
    }
    for preset in Preset::ALL {
        out.push(comparison_suite(preset, seed, settings));
    }
    out.push(timed("picard_contraction.biofilm", Some(seed), || {
        let cfg = PicardConfig::default();
        let mut worst = 0.0_f64;
        let mut ok = true;
        for grid in [Grid::line(1.0, 64)?, Grid::rect(1.0, 32, 1.0, 32)?] {
            let s = picard_stats(&coupled_biofilm_problem(grid, seed, 1.0, 1e-2)?, &cfg)?;
            ok &= s.passes(&cfg);
            worst = worst.max(s.worst_ratio);
        }
        Ok(("1D 64 and 2D 32x32, T = 1, tau = 1e-2".into(), ok, worst))
    }));
    out
}

fn energy_checks(seed: u64) -> Vec<ReportEntry> {
    vec![
        timed("energy_identity.refinement", None, || {
            let (_, factors) = energy_refinement()?;
            let ok = factors.iter().all(|f| (1.5..=2.5).contains(f));
            Ok((
                "linear phi, Dirichlet, tau 1e-2/5e-3/2.5e-3".into(),
                ok,
                factors.iter().cloned().fold(f64::INFINITY, f64::min),
            ))
        }),
        timed("energy_estimate.presets", Some(seed), || {
            let mut worst = 0.0_f64;
            let mut ok = true;
            for preset in Preset::ALL {
                for i in 0..2 {
                    let mut rng = instance_rng(seed, i);
                    let grid = instance_grid(i);
                    let u0 = random_bumps(&grid, &mut rng, 3, preset.max_value());
                    let trace = solve_scalar(&preset.problem(grid, u0, 0.5, 1e-3)?)?;
                    let (pass_est, ratio) = check_energy_estimate(&trace);
                    let (pass_id, _) = check_energy_identity(&trace);
                    ok &= pass_est && pass_id;
                    worst = worst.max(ratio);
                }
            }
            Ok(("3 presets x (1D, 2D), C = 4".into(), ok, worst))
        }),
        timed("chain_rule.refinement", None, || {
            let (_, factors) = chain_rule_refinement()?;
            let trace = solve_scalar(&linear_dirichlet_problem(0.1, REFINEMENT_TAUS[2])?)?;
            let exact = trace.records[0].energy_rel
                == initial_energy(&trace, &PhiEvaluator::new(PhiSpec::linear(1.0)?))?;
            let ok = exact && factors.iter().all(|&f| f >= 1.4);
            Ok((
                "linear phi, Dirichlet".into(),
                ok,
                factors.iter().cloned().fold(f64::INFINITY, f64::min),
            ))
        }),
        timed("initial_attainment.degenerate_bump", None, || {
            let f = initial_attainment_factor(1e-3)?;
            Ok(("porous medium m = 2, tau 1e-3 vs 5e-4".into(), f >= 1.4, f))
        }),
        timed("mass_balance.neumann", Some(seed), || {
            let mut rng = instance_rng(seed, 0);
            let grid = Grid::rect(1.0, 32, 1.0, 32)?;
            let u0 = random_bumps(&grid, &mut rng, 3, 1.0);
            let trace = solve_scalar(&Preset::PorousMedium.problem(grid, u0, 0.1, 1e-3)?)?;
            let d = mass_drift(&trace);
            Ok(("porous medium 32x32, 100 steps".into(), d <= 1e-9, d))
        }),
        timed("steklov_average.ramp", None, || {
            let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
            let avg = steklov_average(&times, &times, 0.2)?;
            let worst = times
                .iter()
                .zip(&avg)
                .filter(|(t, _)| **t >= 0.2 - 1e-12)
                .map(|(t, a)| (a - (t - 0.1)).abs())
                .fold(0.0, f64::max);
            Ok(("u(t) = t, h = 0.2".into(), worst <= 1e-12, worst))
        }),
    ]
}

/// `sum Phi(u0; u_D) vol`, evaluated independently of the solver's records.
pub fn initial_energy(trace: &SolutionTrace, phi: &PhiEvaluator) -> Result<f64> {
    let mut e = 0.0;
    for (&u, &ud) in trace.u[0].iter().zip(&trace.u_dirichlet) {
        e += phi.energy_primitive(phi.clamp_to_interval(u), ud)?;
    }
    Ok(e * trace.grid.cell_volume())
}

fn barrier_checks() -> Vec<ReportEntry> {
    vec![
        timed("barrier_bound.biofilm_1d", None, || {
            let (ok, m0, max_u) = check_barrier_bound(&barrier_problem(100, 0.1, 1.0, 1e-2)?, 0.1)?;
            Ok((
                format!("theta = 0.1, M0 = {m0:.6}, max u = {max_u:.6}"),
                ok,
                m0 - max_u,
            ))
        }),
        timed("barrier_oracle.closed_form", None, || {
            let grid = Grid::line(1.0, 100)?;
            let map = BoundaryMap::tag(&grid, &[Face::Right])?;
            let (c1, c2) = (1.0, 0.25);
            let (v, _) = solve_barrier(&grid, &map, c1, c2)?;
            let mut err: f64 = 0.0;
            let mut above = true;
            for (n, &val) in v.values.iter().enumerate() {
                let x = grid.coords(n)[0];
                err = err.max((val - (c2 + c1 * (1.0 - x * x) / 2.0)).abs());
                above &= val >= c2;
            }
            Ok((
                "[0,1], Gamma = {1}, n = 100".into(),
                err <= 1e-3 && above,
                err,
            ))
        }),
        timed("range_safety.near_one", None, || {
            let grid = Grid::line(1.0, 64)?;
            let u0 = grid.sample(FieldRole::U, |x| if x[0] < 0.5 { 1.0 - 1e-6 } else { 0.0 });
            let trace = solve_scalar(&Preset::BiofilmScalar.problem(grid, u0, 0.2, 1e-3)?)?;
            let max_u = trace.max_u();
            Ok(("u0 touching 1 - 1e-6".into(), max_u < 1.0, 1.0 - max_u))
        }),
    ]
}

/// Runs a suite. Independent checks run concurrently.
pub fn run_suite(suite: Suite, seed: u64) -> VerificationReport {
    let (mut a, (mut b, mut c)) = rayon::join(
        || {
            if suite.includes(Suite::Contraction) {
                contraction_checks(seed)
            } else {
                Vec::new()
            }
        },
        || {
            rayon::join(
                || {
                    if suite.includes(Suite::Energy) {
                        energy_checks(seed)
                    } else {
                        Vec::new()
                    }
                },
                || {
                    if suite.includes(Suite::Barrier) {
                        barrier_checks()
                    } else {
                        Vec::new()
                    }
                },
            )
        },
    );
    a.append(&mut b);
    a.append(&mut c);
    VerificationReport { entries: a }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steklov_constant_and_shift() {
        let times: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let five = vec![5.0; 20];
        assert!(steklov_average(&times, &five, 0.35)
            .unwrap()
            .iter()
            .all(|&x| (x - 5.0).abs() < 1e-14));
        let ramp = steklov_average(&times, &times, 0.2).unwrap();
        for (t, a) in times.iter().zip(&ramp).skip(2) {
            assert!((a - (t - 0.1)).abs() < 1e-12);
        }
        // Before the first stamp the series is extended by its first value.
        assert!((ramp[0] - 0.0).abs() < 1e-15);
        assert!((ramp[1] - 0.1 * 0.05 / 0.2).abs() < 1e-15);
    }

    #[test]
    fn steklov_rejects_bad_input() {
        assert!(steklov_average(&[0.0, 1.0], &[1.0], 0.1).is_err());
        assert!(steklov_average(&[0.0, 1.0], &[1.0, 2.0], 0.0).is_err());
        assert!(steklov_average(&[1.0, 0.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn identical_twins_pass_trivially() {
        let grid = Grid::line(1.0, 16).unwrap();
        let u0 = grid.sample(FieldRole::U, |x| 0.5 * x[0]);
        let p = Preset::PorousMedium
            .problem(grid, u0.clone(), 0.02, 1e-3)
            .unwrap();
        let (ok, ratio) = check_l1_contraction(&p, u0.clone(), RATIO_TOL).unwrap();
        assert!(ok);
        assert_eq!(ratio, 0.0);
        let (ok, worst) = check_comparison(&p, u0).unwrap();
        assert!(ok);
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn comparison_rejects_unordered_data() {
        let grid = Grid::line(1.0, 4).unwrap();
        let p = Preset::PorousMedium
            .problem(grid, grid.constant(FieldRole::U, 0.5), 0.01, 1e-3)
            .unwrap();
        assert!(check_comparison(&p, grid.constant(FieldRole::U, 0.1)).is_err());
    }

    #[test]
    fn stationary_energy_terms_vanish() {
        let grid = Grid::line(1.0, 8).unwrap();
        let map = BoundaryMap::tag(&grid, &[Face::Right]).unwrap();
        let phi = PhiEvaluator::new(PhiSpec::linear(1.0).unwrap());
        let p = ScalarProblem::new(
            grid,
            map.clone(),
            phi,
            grid.constant(FieldRole::U, 0.3),
            0.05,
            0.01,
        )
        .with_dirichlet(DirichletData::uniform(&grid, &map, 0.3));
        let trace = solve_scalar(&p).unwrap();
        assert!(energy_identity_residuals(&trace)
            .iter()
            .all(|r| r.abs() < 1e-15));
        assert!(chain_rule_defects(&trace).iter().all(|d| *d < 1e-12));
        assert_eq!(early_deviation(&trace, 10), 0.0);
        let (ok, _) = check_energy_estimate(&trace);
        assert!(ok);
    }

    #[test]
    fn mass_balance_zero_and_constant_source() {
        let grid = Grid::line(1.0, 20).unwrap();
        let u0 = grid.sample(FieldRole::U, |x| x[0]);
        let p = Preset::PorousMedium
            .problem(grid, u0.clone(), 0.1, 1e-3)
            .unwrap();
        assert!(mass_drift(&solve_scalar(&p).unwrap()) <= 1e-9);
        let p = p.with_source(Arc::new(crate::reactions::ConstantSource(1.0)));
        let tr = solve_scalar(&p).unwrap();
        assert!(mass_drift(&tr) <= 1e-9);
        assert!((tr.records.last().unwrap().mass - tr.records[0].mass - 0.1).abs() < 1e-9);
    }

    #[test]
    fn barrier_trivial_case_without_source() {
        let grid = Grid::line(1.0, 20).unwrap();
        let map = BoundaryMap::tag(&grid, &[Face::Right]).unwrap();
        let phi = PhiEvaluator::new(PhiSpec::singular_power(1.0, 1.0).unwrap());
        let u0 = grid.sample(FieldRole::U, |x| 0.9 * (1.0 - x[0]));
        let p = ScalarProblem::new(grid, map, phi, u0, 0.1, 1e-2);
        let (ok, m0, max_u) = check_barrier_bound(&p, 0.1).unwrap();
        assert!(ok);
        assert!((m0 - 0.9).abs() < 1e-9, "{m0}");
        assert!(max_u <= 0.9 + 1e-12);
    }

    #[test]
    fn report_csv_layout() {
        let r = VerificationReport {
            entries: vec![ReportEntry {
                check: "x".into(),
                instance: "a, b".into(),
                passed: false,
                margin: 0.5,
                seed: Some(3),
                runtime_s: 0.0,
            }],
        };
        let csv = r.to_csv();
        assert!(csv.starts_with("check,instance,status,margin,seed,runtime_s\n"));
        assert!(csv.contains("x,\"a, b\",fail,5.0000000000000000e-1,3,"));
        assert!(!r.all_passed());
        assert!(Suite::parse("nope").is_err());
    }
}
