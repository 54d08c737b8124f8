//! Coupled system
//!
//! ```text
//! u_t = d1 * Laplace(phi(u)) + f(x, t, u, v)
//! v_t = d2 * Laplace(v)      + g(x, t, u, v)
//! ```
//!
//! solved by fixed-point iteration: on each time window, `v` is solved with
//! `u` frozen, then `u` with the new `v` frozen, until the iterates stop
//! moving. The window length is chosen so that the composed map contracts.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{
    discrete_norm, BoundaryMap, DirichletData, Field, FieldRole, Grid, NormKind,
};
use crate::linalg::LinearSolveConfig;
use crate::nonlinearity::{PhiEvaluator, PhiSpec};
use crate::reactions::{Equation, FrozenPartner, Partner, ReactionSpec};
use crate::scalar_solver::{
    solve_scalar, NewtonConfig, ScalarProblem, ScalarSolver, SolutionTrace, StepRecord,
};

#[derive(Debug, Clone)]
pub struct CoupledProblem {
    pub grid: Grid,
    pub boundary_u: BoundaryMap,
    pub boundary_v: BoundaryMap,
    pub phi: PhiEvaluator,
    pub reaction: ReactionSpec,
    pub dirichlet_u: DirichletData,
    pub dirichlet_v: DirichletData,
    pub u0: Field,
    pub v0: Field,
    pub horizon: f64,
    pub tau: f64,
    pub diffusion_u: f64,
    pub diffusion_v: f64,
    pub newton: NewtonConfig,
    pub linear: LinearSolveConfig,
}

impl CoupledProblem {
    /// Problem with zero Dirichlet data for both unknowns and unit diffusion.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid,
        boundary_u: BoundaryMap,
        boundary_v: BoundaryMap,
        phi: PhiEvaluator,
        reaction: ReactionSpec,
        u0: Field,
        v0: Field,
        horizon: f64,
        tau: f64,
    ) -> Self {
        let dirichlet_u = DirichletData::uniform(&grid, &boundary_u, 0.0);
        let dirichlet_v = DirichletData::uniform(&grid, &boundary_v, 0.0);
        CoupledProblem {
            grid,
            boundary_u,
            boundary_v,
            phi,
            reaction,
            dirichlet_u,
            dirichlet_v,
            u0,
            v0,
            horizon,
            tau,
            diffusion_u: 1.0,
            diffusion_v: 1.0,
            newton: NewtonConfig::default(),
            linear: LinearSolveConfig::default(),
        }
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.tau).round() as usize).max(1)
    }

    /// Effective step `T / steps`.
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !self.reaction.is_coupled() {
            return Err(Error::Config(
                "coupled run needs coupled kinetics (biofilm or custom)".into(),
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite())
            || !(self.horizon > 0.0 && self.horizon.is_finite())
        {
            return Err(Error::Config(format!(
                "need positive horizon and step (T = {}, tau = {})",
                self.horizon, self.tau
            )));
        }
        for (name, f) in [("u0", &self.u0), ("v0", &self.v0)] {
            if f.values.len() != self.grid.len() {
                return Err(Error::Dimension {
                    expected: self.grid.len(),
                    got: f.values.len(),
                });
            }
            let bad = if name == "u0" {
                f.values.iter().position(|u| !(0.0..1.0).contains(u))
            } else {
                f.values.iter().position(|v| !(0.0..=1.0).contains(v))
            };
            if let Some(n) = bad {
                return Err(Error::Domain(format!(
                    "{name} = {} at node {n} outside its range",
                    f.values[n]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    /// Target value of `L dT exp(L dT)`; must lie in (0, 1).
    pub safety: f64,
    /// Tolerance on the max-over-stamps L1 distance between sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            safety: 0.5,
            tol: 1e-8,
            max_sweeps: 60,
        }
    }
}

/// Largest `dT` with `L dT exp(L dT) <= safety`; the whole horizon when
/// `L = 0`.
pub fn choose_subinterval(lipschitz: f64, safety: f64, horizon: f64) -> Result<f64> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::Config(format!(
            "safety must lie in (0, 1), got {safety}"
        )));
    }
    if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
        return Err(Error::Config(format!(
            "Lipschitz constant must be finite and >= 0, got {lipschitz}"
        )));
    }
    if lipschitz == 0.0 {
        return Ok(horizon);
    }
    let (mut lo, mut hi) = (0.0_f64, safety);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() <= safety {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo / lipschitz)
}

/// A run of consecutive steps `[start_step, start_step + steps]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start_step: usize,
    pub steps: usize,
}

fn window_problem(
    problem: &CoupledProblem,
    window: Window,
    equation: Equation,
    frozen: Arc<Vec<Vec<f64>>>,
    start: Vec<f64>,
) -> Result<ScalarProblem> {
    let tau = problem.step_size();
    if frozen.len() != window.steps + 1 || frozen.iter().any(|f| f.len() != problem.grid.len()) {
        return Err(Error::Dimension {
            expected: window.steps + 1,
            got: frozen.len(),
        });
    }
    let source = FrozenPartner {
        spec: problem.reaction.clone(),
        equation,
        partner: Partner::Trace(frozen),
        step_offset: window.start_step,
    };
    let (boundary, phi, data, diffusion, role) = match equation {
        Equation::U => (
            problem.boundary_u.clone(),
            problem.phi.clone(),
            problem.dirichlet_u.clone(),
            problem.diffusion_u,
            FieldRole::U,
        ),
        Equation::V => (
            problem.boundary_v.clone(),
            PhiEvaluator::new(PhiSpec::linear(1.0)?),
            problem.dirichlet_v.clone(),
            problem.diffusion_v,
            FieldRole::V,
        ),
    };
    let mut p = ScalarProblem::new(
        problem.grid,
        boundary,
        phi,
        problem.grid.field(role, start)?,
        window.steps as f64 * tau,
        tau,
    )
    .with_source(Arc::new(source))
    .with_dirichlet(data)
    .with_diffusion(diffusion);
    p.newton = problem.newton;
    p.linear = problem.linear;
    p.start_time = window.start_step as f64 * tau;
    p.start_step = window.start_step;
    Ok(p)
}

/// Solves the `v` equation on a window with `u` frozen (one field per stamp).
pub fn half_step_solve_v(
    u_frozen: Arc<Vec<Vec<f64>>>,
    v_start: Vec<f64>,
    window: Window,
    problem: &CoupledProblem,
) -> Result<SolutionTrace> {
    solve_scalar(&window_problem(
        problem,
        window,
        Equation::V,
        u_frozen,
        v_start,
    )?)
}

/// Solves the `u` equation on a window with `v` frozen (one field per stamp).
pub fn half_step_solve_u(
    v_frozen: Arc<Vec<Vec<f64>>>,
    u_start: Vec<f64>,
    window: Window,
    problem: &CoupledProblem,
) -> Result<SolutionTrace> {
    solve_scalar(&window_problem(
        problem,
        window,
        Equation::U,
        v_frozen,
        u_start,
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowLog {
    pub window: Window,
    /// Max-over-stamps L1 distance between successive `u` iterates.
    pub distances: Vec<f64>,
}

impl WindowLog {
    pub fn sweeps(&self) -> usize {
        self.distances.len()
    }

    /// Ratios of successive distances.
    pub fn ratios(&self) -> Vec<f64> {
        self.distances
            .windows(2)
            .filter(|d| d[0] > 0.0)
            .map(|d| d[1] / d[0])
            .collect()
    }

    pub fn last_ratio(&self) -> Option<f64> {
        self.ratios().last().copied()
    }
}

#[derive(Debug, Clone)]
pub struct CoupledTrace {
    pub grid: Grid,
    pub tau: f64,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub u_records: Vec<StepRecord>,
    pub v_records: Vec<StepRecord>,
    pub windows: Vec<WindowLog>,
    /// Window index of each step (step 0 belongs to window 0).
    pub window_of_step: Vec<usize>,
}

impl CoupledTrace {
    pub fn times(&self) -> Vec<f64> {
        self.u_records.iter().map(|r| r.t).collect()
    }

    pub fn max_sweeps(&self) -> usize {
        self.windows
            .iter()
            .map(WindowLog::sweeps)
            .max()
            .unwrap_or(0)
    }

    pub fn u_range(&self) -> (f64, f64) {
        range(&self.u)
    }

    pub fn v_range(&self) -> (f64, f64) {
        range(&self.v)
    }
}

fn range(fields: &[Vec<f64>]) -> (f64, f64) {
    fields
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn sup_l1_distance(grid: &Grid, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            discrete_norm(grid, &d, NormKind::L1)
        })
        .fold(0.0, f64::max)
}

/// Partition of `[0, steps]` into windows of at most `per_window` steps.
pub fn windows(steps: usize, per_window: usize) -> Vec<Window> {
    let per_window = per_window.max(1);
    (0..steps)
        .step_by(per_window)
        .map(|s| Window {
            start_step: s,
            steps: per_window.min(steps - s),
        })
        .collect()
}

/// Fixed-point iteration on successive windows, pasted at window ends.
pub fn picard_solve(problem: &CoupledProblem, cfg: &PicardConfig) -> Result<CoupledTrace> {
    match picard_solve_partial(problem, cfg)? {
        (trace, None) => Ok(trace),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`picard_solve`], but a window that fails to converge ends the run
/// and the windows completed before it are returned with the error.
pub fn picard_solve_partial(
    problem: &CoupledProblem,
    cfg: &PicardConfig,
) -> Result<(CoupledTrace, Option<Error>)> {
    problem.validate()?;
    if !(cfg.tol > 0.0) || cfg.max_sweeps == 0 {
        return Err(Error::Config(
            "Picard tolerance and sweep budget must be positive".into(),
        ));
    }
    let tau = problem.step_size();
    let steps = problem.steps();
    let dt = choose_subinterval(
        problem.reaction.lipschitz_bound(),
        cfg.safety,
        problem.horizon,
    )?;
    // Small slack so that an exact multiple of tau is not lost to rounding.
    let per_window = ((dt / tau) * (1.0 + 1e-12)).floor().max(1.0) as usize;

    let mut trace = CoupledTrace {
        grid: problem.grid,
        tau,
        u: vec![problem.u0.values.clone()],
        v: vec![problem.v0.values.clone()],
        u_records: Vec::with_capacity(steps + 1),
        v_records: Vec::with_capacity(steps + 1),
        windows: Vec::new(),
        window_of_step: vec![0],
    };

    let schedule = windows(steps, per_window);
    if let Some(&first) = schedule.first() {
        let frozen = |f: &Field| Arc::new(vec![f.values.clone(); first.steps + 1]);
        let pv = window_problem(
            problem,
            first,
            Equation::V,
            frozen(&problem.u0),
            problem.v0.values.clone(),
        )?;
        let pu = window_problem(
            problem,
            first,
            Equation::U,
            frozen(&problem.v0),
            problem.u0.values.clone(),
        )?;
        trace
            .u_records
            .push(ScalarSolver::new(&pu)?.initial_record());
        trace
            .v_records
            .push(ScalarSolver::new(&pv)?.initial_record());
    }
    for (wi, window) in schedule.into_iter().enumerate() {
        let u_start = trace.u.last().unwrap().clone();
        let v_start = trace.v.last().unwrap().clone();
        let mut u_iter = Arc::new(vec![u_start.clone(); window.steps + 1]);
        let mut log = WindowLog {
            window,
            distances: Vec::new(),
        };
        let mut stalled = 0;
        let sweep = |u_iter: Arc<Vec<Vec<f64>>>| -> Result<(SolutionTrace, SolutionTrace)> {
            let v_tr = half_step_solve_v(u_iter, v_start.clone(), window, problem)?;
            let u_tr =
                half_step_solve_u(Arc::new(v_tr.u.clone()), u_start.clone(), window, problem)?;
            Ok((u_tr, v_tr))
        };
        let (u_tr, v_tr) = loop {
            let (u_tr, v_tr) = match sweep(u_iter.clone()) {
                Ok(pair) => pair,
                Err(e) => return Ok((trace, Some(e))),
            };
            let dist = sup_l1_distance(&problem.grid, &u_tr.u, &u_iter);
            if let Some(&prev) = log.distances.last() {
                stalled = if dist >= prev { stalled + 1 } else { 0 };
            }
            log.distances.push(dist);
            if dist <= cfg.tol {
                break (u_tr, v_tr);
            }
            if stalled >= 3 || log.distances.len() >= cfg.max_sweeps {
                let e = Error::PicardDivergence {
                    window_start: window.start_step,
                    sweeps: log.distances.len(),
                    distance: dist,
                };
                trace.windows.push(log);
                return Ok((trace, Some(e)));
            }
            u_iter = Arc::new(u_tr.u);
        };

        let (base_u, base_v) = (
            *trace.u_records.last().unwrap(),
            *trace.v_records.last().unwrap(),
        );
        for k in 1..=window.steps {
            let mut ru = u_tr.records[k];
            let mut rv = v_tr.records[k];
            ru.offset_cumulative(&base_u);
            rv.offset_cumulative(&base_v);
            trace.u_records.push(ru);
            trace.v_records.push(rv);
            trace.window_of_step.push(wi);
        }
        trace.u.extend(u_tr.u.into_iter().skip(1));
        trace.v.extend(v_tr.u.into_iter().skip(1));
        trace.windows.push(log);
    }
    Ok((trace, None))
}
