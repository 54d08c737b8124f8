use std::sync::Arc;

use degensim::coupled_solver::{
    half_step_solve_u, half_step_solve_v, picard_solve, CoupledProblem, PicardConfig, Window,
};
use degensim::geometry::{BoundaryMap, DirichletData, Face, FieldRole, Grid};
use degensim::nonlinearity::{PhiEvaluator, PhiSpec};
use degensim::reactions::{BiofilmKinetics, CustomReaction, ReactionSpec};

fn biofilm_problem(grid: Grid, horizon: f64, tau: f64) -> CoupledProblem {
    let top = if grid.dim() == 2 {
        Face::Top
    } else {
        Face::Right
    };
    let bu = BoundaryMap::tag(&grid, &[top]).unwrap();
    let bv = BoundaryMap::tag(&grid, &[top]).unwrap();
    let phi = PhiEvaluator::new(PhiSpec::singular_power(1.0, 1.0).unwrap());
    let u0 = grid.sample(FieldRole::U, |x| {
        let r2 = (x[0] - 0.3).powi(2)
            + if grid.dim() == 2 {
                (x[1] - 0.2).powi(2)
            } else {
                0.0
            };
        if r2 < 0.04 {
            0.5
        } else {
            0.0
        }
    });
    let v0 = grid.constant(FieldRole::V, 1.0);
    let mut p = CoupledProblem::new(
        grid,
        bu.clone(),
        bv.clone(),
        phi,
        ReactionSpec::biofilm(BiofilmKinetics::default()),
        u0,
        v0,
        horizon,
        tau,
    );
    p.dirichlet_v = DirichletData::uniform(&grid, &bv, 1.0);
    p.diffusion_v = 1.0;
    p
}

#[test]
fn v_half_step_matches_backward_euler_ode() {
    // u frozen at 1-, K1 = K4 = 1, v0 = 1, Neumann: v' = -v / (1 + v).
    let grid = Grid::line(1.0, 8).unwrap();
    let map = BoundaryMap::pure_neumann(&grid);
    let phi = PhiEvaluator::new(PhiSpec::singular_power(1.0, 1.0).unwrap());
    let p = CoupledProblem::new(
        grid,
        map.clone(),
        map,
        phi,
        ReactionSpec::biofilm(BiofilmKinetics::default()),
        grid.constant(FieldRole::U, 0.0),
        grid.constant(FieldRole::V, 1.0),
        0.1,
        0.1,
    );
    let frozen = Arc::new(vec![vec![1.0 - 1e-14; 8]; 2]);
    let tr = half_step_solve_v(
        frozen,
        vec![1.0; 8],
        Window {
            start_step: 0,
            steps: 1,
        },
        &p,
    )
    .unwrap();
    // Oracle: solve v + tau v / (1 + v) = 1 by bisection.
    let tau = 0.1;
    let u = 1.0 - 1e-14;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + tau * u * mid / (1.0 + mid) < 1.0 {
            lo = mid
        } else {
            hi = mid
        }
    }
    for &v in &tr.u[1] {
        assert!((v - lo).abs() < 1e-9, "{v} vs {lo}");
    }
}

#[test]
fn u_half_step_zero_stays_zero() {
    let grid = Grid::line(1.0, 8).unwrap();
    let p = biofilm_problem(grid, 0.1, 0.01);
    let frozen = Arc::new(vec![vec![1.0; 8]; 11]);
    let tr = half_step_solve_u(
        frozen,
        vec![0.0; 8],
        Window {
            start_step: 0,
            steps: 10,
        },
        &p,
    )
    .unwrap();
    assert!(tr.u.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn decoupled_system_converges_in_two_sweeps() {
    let grid = Grid::line(1.0, 16).unwrap();
    let map = BoundaryMap::pure_neumann(&grid);
    let phi = PhiEvaluator::new(PhiSpec::porous_medium(2.0).unwrap());
    let custom = CustomReaction::coupled(|_, _, u, _| 0.5 * u * (1.0 - u), |_, _, _, v| -0.5 * v);
    let u0 = grid.sample(FieldRole::U, |x| 0.5 * (1.0 - x[0]));
    let p = CoupledProblem::new(
        grid,
        map.clone(),
        map,
        phi,
        ReactionSpec::custom(custom),
        u0,
        grid.constant(FieldRole::V, 0.7),
        0.2,
        0.01,
    );
    let tr = picard_solve(&p, &PicardConfig::default()).unwrap();
    assert!(tr.max_sweeps() <= 2, "{:?}", tr.windows);
}

#[test]
fn zero_biomass_full_substrate_is_fixed_point() {
    let grid = Grid::rect(1.0, 6, 1.0, 6).unwrap();
    let mut p = biofilm_problem(grid, 0.2, 0.02);
    p.u0 = grid.constant(FieldRole::U, 0.0);
    let tr = picard_solve(&p, &PicardConfig::default()).unwrap();
    assert!(tr.u.iter().flatten().all(|&x| x == 0.0));
    assert!(tr.v.iter().flatten().all(|&x| (x - 1.0).abs() < 1e-12));
}

#[test]
fn biofilm_run_contracts_and_stays_in_range() {
    let grid = Grid::line(1.0, 64).unwrap();
    let p = biofilm_problem(grid, 1.0, 1e-2);
    let tr = picard_solve(&p, &PicardConfig::default()).unwrap();
    assert!(tr.max_sweeps() <= 10, "{}", tr.max_sweeps());
    let (ulo, uhi) = tr.u_range();
    let (vlo, vhi) = tr.v_range();
    assert!(ulo >= -1e-8 && uhi < 1.0);
    assert!(vlo >= -1e-8 && vhi <= 1.0 + 1e-8);
    for w in &tr.windows {
        assert!(w.ratios().iter().all(|&r| r <= 0.6), "{:?}", w.distances);
    }
    assert_eq!(tr.u.len(), 101);
}
