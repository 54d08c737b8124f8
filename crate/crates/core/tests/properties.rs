use degensim::geometry::{discrete_norm, BoundaryMap, Face, FieldRole, Grid, NormKind};
use degensim::linalg::{cg_solve, LinearSolveConfig, SparseMatrix};
use degensim::nonlinearity::{PhiEvaluator, PhiSpec};
use degensim::reactions::{BiofilmKinetics, ReactionSpec};
use degensim::scalar_solver::{assemble_operator, solve_scalar};
use degensim::verify::{mass_drift, steklov_average, Preset};
use proptest::prelude::*;

fn phi_specs() -> impl Strategy<Value = PhiSpec> {
    prop_oneof![
        (1.0..3.0_f64, 0.5..2.0_f64).prop_map(|(a, b)| PhiSpec::singular_power(a, b).unwrap()),
        (1.1..4.0_f64).prop_map(|m| PhiSpec::porous_medium(m).unwrap()),
        (0.1..10.0_f64).prop_map(|s| PhiSpec::linear(s).unwrap()),
    ]
}

/// Points strictly inside the admissible range of `spec`.
fn inside(spec: &PhiSpec, t: f64) -> f64 {
    if spec.interval.is_bounded() {
        0.995 * (2.0 * t - 1.0)
    } else {
        4.0 * (2.0 * t - 1.0)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_is_increasing(spec in phi_specs(), s in 0.0..1.0_f64, t in 0.0..1.0_f64) {
        let phi = PhiEvaluator::new(spec);
        let (x, y) = (inside(&spec, s.min(t)), inside(&spec, s.max(t)));
        prop_assume!(x < y);
        prop_assert!(phi.phi(x).unwrap() < phi.phi(y).unwrap());
        prop_assert!(phi.phi_prime(x).unwrap() >= 0.0);
    }

    #[test]
    fn inverse_round_trips(spec in phi_specs(), s in 0.0..1.0_f64) {
        let phi = PhiEvaluator::new(spec);
        let z = inside(&spec, s);
        let back = phi.phi_inverse(phi.phi(z).unwrap()).unwrap();
        prop_assert!((back - z).abs() <= 1e-9 * (1.0 + z.abs()), "{z} -> {back}");
    }

    #[test]
    fn relative_energy_is_enclosed(spec in phi_specs(), s in 0.0..1.0_f64, t in 0.0..1.0_f64) {
        // Convexity of the primitive squeezes the relative energy between 0
        // and the secant pairing.
        let phi = PhiEvaluator::new(spec);
        let (z, zbar) = (inside(&spec, s), inside(&spec, t));
        let e = phi.energy_primitive(z, zbar).unwrap();
        let pairing = (phi.phi(z).unwrap() - phi.phi(zbar).unwrap()) * (z - zbar);
        prop_assert!(e >= 0.0);
        prop_assert!(e <= pairing * (1.0 + 1e-8) + 1e-12, "{e} > {pairing}");
    }

    #[test]
    fn norms_are_ordered(values in prop::collection::vec(-10.0..10.0_f64, 1..200)) {
        // On a unit-volume grid: L1 <= L2 <= Linf.
        let grid = Grid::line(1.0, values.len()).unwrap();
        let l1 = discrete_norm(&grid, &values, NormKind::L1);
        let l2 = discrete_norm(&grid, &values, NormKind::L2);
        let linf = discrete_norm(&grid, &values, NormKind::Linf);
        prop_assert!(l1 <= l2 * (1.0 + 1e-12) + 1e-300);
        prop_assert!(l2 <= linf * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn spmv_is_linear(
        entries in prop::collection::vec((0..12usize, 0..12usize, -5.0..5.0_f64), 0..60),
        x in prop::collection::vec(-3.0..3.0_f64, 12),
        y in prop::collection::vec(-3.0..3.0_f64, 12),
        a in -2.0..2.0_f64,
    ) {
        let m = SparseMatrix::from_triplets(12, entries).unwrap();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let lhs = m.spmv(&combo).unwrap();
        let (mx, my) = (m.spmv(&x).unwrap(), m.spmv(&y).unwrap());
        for i in 0..12 {
            let rhs = a * mx[i] + my[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn cg_solves_shifted_laplacians(
        n in 4..40usize,
        shift in 0.0..5.0_f64,
        b in prop::collection::vec(-1.0..1.0_f64, 40),
    ) {
        let grid = Grid::line(1.0, n).unwrap();
        let map = BoundaryMap::tag(&grid, &[Face::Right]).unwrap();
        let a = assemble_operator(&grid, &map)
            .unwrap()
            .scaled_plus_diagonal(1.0, &vec![shift; n])
            .unwrap();
        let rhs = &b[..n];
        let cfg = LinearSolveConfig { rel_tol: 1e-12, ..Default::default() };
        let out = cg_solve(&a, rhs, &cfg).unwrap();
        let r = a.spmv(&out.x).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let res: Vec<f64> = r.iter().zip(rhs).map(|(p, q)| p - q).collect();
        prop_assert!(norm(&res) <= 1e-9 * (1.0 + norm(rhs)));
    }

    #[test]
    fn steklov_average_commutes_with_shifts(c in -5.0..5.0_f64, h in 0.05..0.5_f64) {
        let times: Vec<f64> = (0..=60).map(|k| k as f64 * 0.02).collect();
        let base: Vec<f64> = times.iter().map(|t| (3.0 * t).sin()).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + c).collect();
        let a = steklov_average(&times, &base, h).unwrap();
        let b = steklov_average(&times, &shifted, h).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((q - p - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn biofilm_quotients_respect_bound(
        k in (0.0..3.0_f64, 0.0..3.0_f64, 0.0..3.0_f64, 0.1..3.0_f64),
        p in (0.0..0.99_f64, 0.0..1.0_f64),
        q in (0.0..0.99_f64, 0.0..1.0_f64),
    ) {
        let kin = BiofilmKinetics::new(k.0, k.1, k.2, k.3).unwrap();
        let dist = (p.0 - q.0).abs() + (p.1 - q.1).abs();
        prop_assume!(dist > 1e-9);
        let change = (kin.f(p.0, p.1) - kin.f(q.0, q.1)).abs()
            + (kin.g(p.0, p.1) - kin.g(q.0, q.1)).abs();
        let bound = ReactionSpec::biofilm(kin).lipschitz_bound();
        prop_assert!(change <= bound * dist * (1.0 + 1e-9) + 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ordered_data_stay_ordered(
        low in prop::collection::vec(0.0..0.6_f64, 24),
        gap in prop::collection::vec(0.0..0.3_f64, 24),
    ) {
        let grid = Grid::line(1.0, 24).unwrap();
        let high: Vec<f64> = low.iter().zip(&gap).map(|(l, g)| l + g).collect();
        let run = |v: Vec<f64>| {
            let u0 = grid.field(FieldRole::U, v).unwrap();
            solve_scalar(&Preset::PorousFischer.problem(grid, u0, 0.02, 2e-3).unwrap()).unwrap()
        };
        let (a, b) = (run(low), run(high));
        for (ua, ub) in a.u.iter().zip(&b.u) {
            prop_assert!(ua.iter().zip(ub).all(|(x, y)| x <= &(y + 1e-10)));
        }
    }

    #[test]
    fn zero_flux_conserves_mass(values in prop::collection::vec(0.0..1.0_f64, 30)) {
        let grid = Grid::line(1.0, 30).unwrap();
        let u0 = grid.field(FieldRole::U, values).unwrap();
        let trace =
            solve_scalar(&Preset::PorousMedium.problem(grid, u0, 0.02, 2e-3).unwrap()).unwrap();
        prop_assert!(mass_drift(&trace) <= 1e-9);
    }
}
