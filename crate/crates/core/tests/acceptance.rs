//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use degensim::coupled_solver::PicardConfig;
use degensim::geometry::{BoundaryMap, Face, Grid};
use degensim::nonlinearity::{PhiEvaluator, PhiSpec};
use degensim::scalar_solver::{bounded_interval_peak, solve_barrier, solve_scalar};
use degensim::verify::{
    chain_rule_refinement, check_barrier_bound, check_energy_estimate, check_energy_identity,
    comparison_suite, contraction_suite, coupled_biofilm_problem, energy_refinement,
    initial_attainment_factor, initial_energy, instance_grid, linear_dirichlet_problem, mass_drift,
    picard_stats, random_bumps, Preset, TwinSettings, REFINEMENT_TAUS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::barenblatt_error;

const SEED: u64 = 7;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

fn settings() -> TwinSettings {
    TwinSettings {
        instances: 20,
        horizon: 0.5,
        tau: 1e-3,
    }
}

fn l1_contraction() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for preset in Preset::ALL {
        let e = contraction_suite(preset, SEED, settings());
        ok &= e.passed;
        worst = worst.max(e.margin);
        parts.push(format!("{} {:.4}", preset.name(), e.margin));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        ok && worst <= 1.05 && secs < 180.0,
        format!("worst ratio {worst:.4} ({}), {secs:.1}s", parts.join(", ")),
    )
}

fn comparison() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for preset in Preset::ALL {
        let e = comparison_suite(preset, SEED, settings());
        ok &= e.passed;
        parts.push(format!("{}: {}", preset.name(), e.instance));
    }
    Outcome::new(ok, parts.join("; "))
}

fn barrier_bound() -> Outcome {
    let p = match degensim::verify::barrier_problem(100, 0.1, 1.0, 1e-2) {
        Ok(p) => p,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    match check_barrier_bound(&p, 0.1) {
        Ok((ok, m0, max_u)) => Outcome::new(
            ok && m0 < 1.0 && max_u <= m0 + 1e-8,
            format!("M0 = {m0:.6}, max u = {max_u:.6}"),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn range_safety() -> Outcome {
    let peak = bounded_interval_peak();
    Outcome::new(
        peak < 1.0,
        format!("largest u over every bounded-interval run: {peak:.12}"),
    )
}

fn energy() -> Outcome {
    let factors = match energy_refinement() {
        Ok((_, f)) => f,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let refine_ok = factors.iter().all(|f| (1.5..=2.5).contains(f));
    let mut est_ok = true;
    let mut worst = 0.0_f64;
    for preset in Preset::ALL {
        for i in 0..2 {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED.wrapping_add(i as u64));
            let grid = instance_grid(i);
            let cap = if preset == Preset::BiofilmScalar {
                0.9
            } else {
                1.0
            };
            let u0 = random_bumps(&grid, &mut rng, 3, cap);
            let trace = match preset
                .problem(grid, u0, 0.5, 1e-3)
                .and_then(|p| solve_scalar(&p))
            {
                Ok(t) => t,
                Err(e) => return Outcome::new(false, e.to_string()),
            };
            let (est, ratio) = check_energy_estimate(&trace);
            let (ident, _) = check_energy_identity(&trace);
            est_ok &= est && ident;
            worst = worst.max(ratio);
        }
    }
    Outcome::new(
        refine_ok && est_ok,
        format!("halving factors {factors:.3?}, estimate lhs/rhs worst {worst:.4}"),
    )
}

fn chain_rule() -> Outcome {
    let run = || -> degensim::Result<(Vec<f64>, bool)> {
        let (_, factors) = chain_rule_refinement()?;
        let trace = solve_scalar(&linear_dirichlet_problem(0.1, REFINEMENT_TAUS[2])?)?;
        let e0 = initial_energy(&trace, &PhiEvaluator::new(PhiSpec::linear(1.0)?))?;
        Ok((factors, trace.records[0].energy_rel == e0))
    };
    match run() {
        Ok((factors, exact)) => Outcome::new(
            exact && factors.iter().all(|&f| f >= 1.4),
            format!("halving factors {factors:.3?}, initial energy exact: {exact}"),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn initial_attainment() -> Outcome {
    match initial_attainment_factor(1e-3) {
        Ok(f) => Outcome::new(f >= 1.4, format!("halving factor {f:.3}")),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn picard() -> Outcome {
    let cfg = PicardConfig::default();
    let run = || -> degensim::Result<Vec<String>> {
        let mut lines = Vec::new();
        for grid in [Grid::line(1.0, 64)?, Grid::rect(1.0, 32, 1.0, 32)?] {
            let s = picard_stats(&coupled_biofilm_problem(grid, SEED, 1.0, 1e-2)?, &cfg)?;
            let ok = s.max_sweeps <= 10
                && s.worst_ratio <= 0.6
                // u near 0 carries the square root of the roundoff in w.
                && s.u_range.0 >= -1e-8
                && s.u_range.1 < 1.0
                && s.v_range.0 >= -1e-8
                && s.v_range.1 <= 1.0 + 1e-8;
            lines.push(format!(
                "{}{}D sweeps {} ratio {:.3e} u [{:.3e}, {:.6}] v [{:.3e}, {:.6}]",
                if ok { "" } else { "!" },
                grid.dim(),
                s.max_sweeps,
                s.worst_ratio,
                s.u_range.0,
                s.u_range.1,
                s.v_range.0,
                s.v_range.1
            ));
        }
        Ok(lines)
    };
    match run() {
        Ok(lines) => Outcome::new(
            cfg.safety == 0.5 && lines.iter().all(|l| !l.starts_with('!')),
            lines.join("; "),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn barenblatt() -> Outcome {
    let start = Instant::now();
    let errors: Vec<f64> = [100, 200, 400]
        .iter()
        .map(|&n| barenblatt_error(n))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let orders: Vec<f64> = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    let monotone = errors.windows(2).all(|e| e[1] < e[0]);
    Outcome::new(
        monotone && orders.iter().all(|&o| o >= 0.8) && secs < 60.0,
        format!(
            "errors {}, orders {orders:.3?}, {secs:.1}s",
            errors
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn barrier_closed_form() -> Outcome {
    let run = || -> degensim::Result<(f64, bool)> {
        let grid = Grid::line(1.0, 100)?;
        let map = BoundaryMap::tag(&grid, &[Face::Right])?;
        let (c1, c2) = (1.0, 0.25);
        let (v, _) = solve_barrier(&grid, &map, c1, c2)?;
        let mut err = 0.0_f64;
        let mut above = true;
        for (n, &val) in v.values.iter().enumerate() {
            let x = grid.coords(n)[0];
            err = err.max((val - (c2 + c1 * (1.0 - x * x) / 2.0)).abs());
            above &= val >= c2;
        }
        Ok((err, above))
    };
    match run() {
        Ok((err, above)) => Outcome::new(
            err <= 1e-3 && above,
            format!("max error {err:.3e}, v >= c2: {above}"),
        ),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn conservation() -> Outcome {
    let run = || -> degensim::Result<f64> {
        let grid = Grid::rect(1.0, 32, 1.0, 32)?;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let u0 = random_bumps(&grid, &mut rng, 3, 1.0);
        let trace = solve_scalar(&Preset::PorousMedium.problem(grid, u0, 0.1, 1e-3)?)?;
        assert_eq!(trace.records.len(), 101);
        Ok(mass_drift(&trace))
    };
    match run() {
        Ok(d) => Outcome::new(d <= 1e-9, format!("relative drift {d:.3e} over 100 steps")),
        Err(e) => Outcome::new(false, e.to_string()),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 l1 contraction", l1_contraction),
        ("2 comparison", comparison),
        ("4 energy identity and estimate", energy),
        ("5 chain rule", chain_rule),
        ("6 initial attainment", initial_attainment),
        ("7 picard contraction", picard),
        ("8 barenblatt convergence", barenblatt),
        ("9 barrier closed form", barrier_closed_form),
        ("10 conservation", conservation),
        // Last, so the range check sees every run above.
        ("3 boundedness", || {
            let bound = barrier_bound();
            let range = range_safety();
            Outcome::new(
                bound.passed && range.passed,
                format!("{}; {}", bound.detail, range.detail),
            )
        }),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let out = check();
        println!(
            "{} criterion {name}: {} [{:.1}s]",
            if out.passed { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!out.passed);
    }
    if failed == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
