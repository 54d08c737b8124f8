//! Run orchestration behind the command line: problem assembly from a
//! [`RunConfig`], trace and snapshot output, and refinement studies.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialShape, RunConfig};
use crate::coupled_solver::{picard_solve_partial, CoupledProblem, CoupledTrace, PicardConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    discrete_norm, fmt17, BoundaryMap, DirichletData, Face, Field, FieldRole, Grid, NormKind,
};
use crate::nonlinearity::PhiEvaluator;
use crate::reactions::ScalarSource;
use crate::scalar_solver::{
    solve_scalar, solve_scalar_partial, ScalarProblem, SolutionTrace, StepRecord,
};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_ENV: &str = "DEGENSIM_OUT";

pub const SCALAR_TRACE_HEADER: &str =
    "step,t,l1_u,l2_u,linf_u,min_u,max_u,energy_rel,dirichlet_integral,newton_iters";
pub const COUPLED_TRACE_COLUMNS: &str = "l1_v,linf_v,picard_sweeps,picard_last_ratio";

pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output.clone(),
    }
}

/// Initial `u` on `grid`: a constant, seeded cosine-squared bumps on top of
/// the background value, or a snapshot file.
pub fn initial_u(cfg: &RunConfig, grid: &Grid) -> Result<Field> {
    match &cfg.ic.shape {
        InitialShape::Constant => Ok(grid.constant(FieldRole::U, cfg.ic.u)),
        InitialShape::Bumps {
            count,
            radius,
            height,
            seed,
        } => Ok(bump_field(grid, *count, *radius, *height, cfg.ic.u, *seed)),
        InitialShape::File(path) => read_snapshot(path, grid),
    }
}

/// `background + min(height, sum of height * cos^2(pi r / (2 radius)))` with
/// centres drawn uniformly from the domain.
pub fn bump_field(
    grid: &Grid,
    count: usize,
    radius: f64,
    height: f64,
    background: f64,
    seed: u64,
) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<[f64; 2]> = (0..count)
        .map(|_| {
            let x = rng.gen_range(0.0..1.0) * grid.axis(0).length;
            let y = if grid.dim() == 2 {
                rng.gen_range(0.0..1.0) * grid.axis(1).length
            } else {
                0.0
            };
            [x, y]
        })
        .collect();
    grid.sample(FieldRole::U, |p| {
        let s: f64 = centres
            .iter()
            .map(|c| {
                let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
                if d < radius {
                    height * (std::f64::consts::FRAC_PI_2 * d / radius).cos().powi(2)
                } else {
                    0.0
                }
            })
            .sum();
        background + s.min(height)
    })
}

/// Reads a snapshot CSV (`x[,y],value`, row-major) onto `grid`.
pub fn read_snapshot(path: &Path, grid: &Grid) -> Result<Field> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or("");
    let expected = if grid.dim() == 2 {
        "x,y,value"
    } else {
        "x,value"
    };
    if header.trim() != expected {
        return Err(Error::Config(format!(
            "{}: header `{}` (expected `{expected}`)",
            path.display(),
            header.trim()
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in lines.enumerate() {
        let last = line.rsplit(',').next().unwrap_or("").trim();
        let v: f64 = last.parse().map_err(|_| {
            Error::Config(format!(
                "{}: bad value `{last}` on data row {}",
                path.display(),
                i + 1
            ))
        })?;
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(Error::Config(format!(
            "{}: {} rows for a grid of {} cells",
            path.display(),
            values.len(),
            grid.len()
        )));
    }
    grid.field(FieldRole::U, values)
}

fn dirichlet_data(
    grid: &Grid,
    map: &BoundaryMap,
    uniform: f64,
    overrides: &[(Face, f64)],
) -> Result<DirichletData> {
    let values: Vec<(Face, f64)> = map
        .dirichlet_faces()
        .into_iter()
        .map(|f| {
            let v = overrides
                .iter()
                .find(|(g, _)| *g == f)
                .map_or(uniform, |&(_, v)| v);
            (f, v)
        })
        .collect();
    DirichletData::per_face(grid, map, &values)
}

pub fn scalar_problem(cfg: &RunConfig) -> Result<ScalarProblem> {
    scalar_problem_on(cfg, cfg.domain.grid()?, cfg.time.tau)
}

fn scalar_problem_on(cfg: &RunConfig, grid: Grid, tau: f64) -> Result<ScalarProblem> {
    if cfg.is_coupled() {
        return Err(Error::Config(
            "reaction.kind describes a coupled system".into(),
        ));
    }
    let map = BoundaryMap::tag(&grid, &cfg.bc.dirichlet_u)?;
    let data = dirichlet_data(&grid, &map, cfg.bc.u, &cfg.bc.u_faces)?;
    let u0 = initial_u(cfg, &grid)?;
    let source = ScalarSource::new(cfg.reaction.spec.clone())?;
    let problem = ScalarProblem::new(
        grid,
        map,
        PhiEvaluator::new(cfg.phi),
        u0,
        cfg.time.horizon,
        tau,
    )
    .with_source(Arc::new(source))
    .with_dirichlet(data)
    .with_diffusion(cfg.reaction.d1);
    problem.validate()?;
    Ok(problem)
}

pub fn coupled_problem(cfg: &RunConfig) -> Result<CoupledProblem> {
    if !cfg.is_coupled() {
        return Err(Error::Config(
            "reaction.kind describes a scalar equation".into(),
        ));
    }
    let grid = cfg.domain.grid()?;
    let map_u = BoundaryMap::tag(&grid, &cfg.bc.dirichlet_u)?;
    let map_v = BoundaryMap::tag(&grid, &cfg.bc.dirichlet_v)?;
    let mut p = CoupledProblem::new(
        grid,
        map_u.clone(),
        map_v.clone(),
        PhiEvaluator::new(cfg.phi),
        cfg.reaction.spec.clone(),
        initial_u(cfg, &grid)?,
        grid.constant(FieldRole::V, cfg.ic.v),
        cfg.time.horizon,
        cfg.time.tau,
    );
    p.dirichlet_u = dirichlet_data(&grid, &map_u, cfg.bc.u, &cfg.bc.u_faces)?;
    p.dirichlet_v = dirichlet_data(&grid, &map_v, cfg.bc.v, &cfg.bc.v_faces)?;
    p.diffusion_u = cfg.reaction.d1;
    p.diffusion_v = cfg.reaction.d2;
    p.validate()?;
    Ok(p)
}

/// What a run produced. `failure` is set when the solver stopped early; the
/// trace then covers the steps completed before it.
#[derive(Debug)]
pub struct RunSummary {
    pub directory: PathBuf,
    pub steps: usize,
    pub completed: usize,
    pub max_u: f64,
    pub failure: Option<Error>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, Error::exit_code)
    }
}

/// Solves the configured problem and writes `trace.csv` plus
/// `snapshot_<step>.csv` files (and `snapshot_v_<step>.csv` for coupled runs).
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    let every = cfg.time.snapshot_every;
    if cfg.is_coupled() {
        let problem = coupled_problem(cfg)?;
        let (trace, failure) = picard_solve_partial(&problem, &PicardConfig::default())?;
        fs::write(dir.join("trace.csv"), coupled_trace_csv(&trace))?;
        let completed = trace.u.len() - 1;
        for k in snapshot_steps(completed, every) {
            problem
                .grid
                .field(FieldRole::U, trace.u[k].clone())?
                .write_csv(&dir.join(format!("snapshot_{k}.csv")))?;
            problem
                .grid
                .field(FieldRole::V, trace.v[k].clone())?
                .write_csv(&dir.join(format!("snapshot_v_{k}.csv")))?;
        }
        Ok(RunSummary {
            directory: dir,
            steps: problem.steps(),
            completed,
            max_u: trace.u_range().1,
            failure,
        })
    } else {
        let problem = scalar_problem(cfg)?;
        let (trace, failure) = solve_scalar_partial(&problem)?;
        fs::write(dir.join("trace.csv"), scalar_trace_csv(&trace))?;
        let completed = trace.u.len() - 1;
        for k in snapshot_steps(completed, every) {
            trace
                .u_field(k)
                .write_csv(&dir.join(format!("snapshot_{k}.csv")))?;
        }
        Ok(RunSummary {
            directory: dir,
            steps: problem.steps(),
            completed,
            max_u: trace.max_u(),
            failure,
        })
    }
}

/// Step 0, every `every`-th step, and the last one.
fn snapshot_steps(last: usize, every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = if every == 0 {
        vec![0]
    } else {
        (0..=last).step_by(every).collect()
    };
    if steps.last() != Some(&last) {
        steps.push(last);
    }
    steps
}

fn scalar_columns(r: &StepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.step,
        fmt17(r.t),
        fmt17(r.l1_u),
        fmt17(r.l2_u),
        fmt17(r.linf_u),
        fmt17(r.min_u),
        fmt17(r.max_u),
        fmt17(r.energy_rel),
        fmt17(r.dirichlet_integral),
        r.newton_iters
    )
}

pub fn scalar_trace_csv(trace: &SolutionTrace) -> String {
    let mut out = String::from(SCALAR_TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&scalar_columns(r));
        out.push('\n');
    }
    out
}

/// The scalar columns for `u`, then `v` norms and the Picard log of the
/// window each step belongs to. The ratio is blank when the window needed a
/// single sweep.
pub fn coupled_trace_csv(trace: &CoupledTrace) -> String {
    let mut out = format!("{SCALAR_TRACE_HEADER},{COUPLED_TRACE_COLUMNS}\n");
    for (k, (ru, rv)) in trace.u_records.iter().zip(&trace.v_records).enumerate() {
        let (sweeps, ratio) = if k == 0 {
            (0, None)
        } else {
            let log = &trace.windows[trace.window_of_step[k]];
            (log.sweeps(), log.last_ratio())
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            scalar_columns(ru),
            fmt17(rv.l1_u),
            fmt17(rv.linf_u),
            sweeps,
            ratio.map(fmt17).unwrap_or_default()
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub tau: f64,
    pub l1_error: f64,
    /// `log2` of the error ratio to the previous (coarser) level.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// `h,tau,l1_error[,order]`; the order column is omitted for one level.
    pub fn to_csv(&self) -> String {
        let with_order = self.rows.len() > 1;
        let mut out = String::from(if with_order {
            "h,tau,l1_error,order\n"
        } else {
            "h,tau,l1_error\n"
        });
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", fmt17(r.h), fmt17(r.tau), fmt17(r.l1_error));
            if with_order {
                out.push(',');
                if let Some(p) = r.order {
                    out.push_str(&fmt17(p));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Refinement study on a scalar configuration. Level `k` halves both the
/// cell size and the step `k` times; errors are L1 distances at the final
/// time to a run one level finer than the finest, averaged onto each grid.
pub fn convergence(cfg: &RunConfig, levels: usize) -> Result<ConvergenceTable> {
    if levels == 0 {
        return Err(Error::Config("need at least one level".into()));
    }
    let level_grid = |k: usize| -> Result<Grid> {
        let extents: Vec<(f64, usize)> = cfg
            .domain
            .lengths
            .iter()
            .zip(&cfg.domain.cells)
            .map(|(&l, &n)| (l, n << k))
            .collect();
        Grid::new(&extents)
    };
    let solve_level = |k: usize| -> Result<(Grid, f64, Vec<f64>)> {
        let grid = level_grid(k)?;
        let tau = cfg.time.tau / (1u64 << k) as f64;
        let problem = scalar_problem_on(cfg, grid, tau)?;
        let trace = solve_scalar(&problem)?;
        Ok((grid, tau, trace.last_u().to_vec()))
    };
    let (ref_grid, _, reference) = solve_level(levels)?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for k in 0..levels {
        let (grid, tau, u) = solve_level(k)?;
        let projected = restrict(&ref_grid, &reference, &grid, levels - k);
        let diff: Vec<f64> = u.iter().zip(&projected).map(|(a, b)| a - b).collect();
        let l1_error = discrete_norm(&grid, &diff, NormKind::L1);
        let order = rows.last().map(|prev| (prev.l1_error / l1_error).log2());
        rows.push(ConvergenceRow {
            h: grid.spacing()[0],
            tau,
            l1_error,
            order,
        });
    }
    Ok(ConvergenceTable { rows })
}

/// Cell averages of a field given on a grid refined `2^shift` times per axis.
fn restrict(fine: &Grid, values: &[f64], coarse: &Grid, shift: usize) -> Vec<f64> {
    let r = 1usize << shift;
    let ry = if coarse.dim() == 2 { r } else { 1 };
    let mut out = vec![0.0; coarse.len()];
    for j in 0..coarse.ny() {
        for i in 0..coarse.nx() {
            let mut s = 0.0;
            for b in 0..ry {
                for a in 0..r {
                    s += values[fine.index(i * r + a, j * ry + b)];
                }
            }
            out[coarse.index(i, j)] = s / (r * ry) as f64;
        }
    }
    out
}
