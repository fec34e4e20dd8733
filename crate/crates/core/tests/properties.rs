use approx::assert_relative_eq;
use proptest::prelude::*;

use prep_control::adjoint::{grad_hamiltonian_x, hamiltonian, AdjointState};
use prep_control::budget::{relative_residual, search_multiplier};
use prep_control::forward::{diffusion, drift, step, ControlPath, TimeGrid};
use prep_control::model::{force_of_infection, CostWeights, ModelParams, StateVector};
use prep_control::montecarlo::{ensemble, EnsembleAccumulator};
use prep_control::sweep::candidate_control;

const N_REF: f64 = 10_200.0;

fn state() -> impl Strategy<Value = StateVector> {
    (
        0.0..20_000.0f64,
        0.0..5_000.0f64,
        0.0..5_000.0f64,
        0.0..2_000.0f64,
        0.0..10_000.0f64,
    )
        .prop_map(|(s, i, c, a, e)| StateVector::new(s, i, c, a, e))
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.0..1.0f64, 0.0..0.2f64, 0.0..2.0f64).prop_map(|(psi, theta, d)| ModelParams {
        psi,
        theta,
        d,
        ..ModelParams::baseline(N_REF)
    })
}

fn adjoint() -> impl Strategy<Value = AdjointState> {
    (prop::array::uniform5(-500.0..500.0f64), prop::array::uniform5(-500.0..500.0f64))
        .prop_map(|(p, q)| AdjointState { p, q })
}

proptest! {
    #[test]
    fn force_of_infection_is_linear(x in state(), y in state(), k in 0.0..10.0f64) {
        let p = ModelParams::baseline(N_REF);
        assert_relative_eq!(
            force_of_infection(&(x + y), &p),
            force_of_infection(&x, &p) + force_of_infection(&y, &p),
            max_relative = 1e-12
        );
        assert_relative_eq!(force_of_infection(&(x * k), &p), k * force_of_infection(&x, &p), max_relative = 1e-12);
    }

    #[test]
    fn drift_sums_to_net_inflow(x in state(), u in 0.0..=1.0f64, p in params()) {
        let f = drift(&x, u, &p).to_array();
        let expected = p.lambda_recruit - p.mu * x.total() - p.d * x.a;
        let scale = f.iter().map(|v| v.abs()).sum::<f64>().max(expected.abs()).max(1.0);
        prop_assert!((f.iter().sum::<f64>() - expected).abs() <= 1e-12 * scale);
    }

    #[test]
    fn noise_only_moves_s_and_i(x in state(), p in params()) {
        let g = diffusion(&x, &p);
        prop_assert_eq!(g.s, -g.i);
        prop_assert_eq!((g.c, g.a, g.e), (0.0, 0.0, 0.0));
    }

    #[test]
    fn step_output_is_nonnegative(x in state(), u in 0.0..=1.0f64, dw in -50.0..50.0f64, p in params()) {
        let out = step(&x, u, dw, 1e-3, &p).unwrap();
        prop_assert!(out.state.is_nonnegative());
        prop_assert!(out.clamped <= 5);
    }

    #[test]
    fn controls_outside_unit_interval_are_rejected(v in prop::collection::vec(-2.0..3.0f64, 1..50)) {
        let admissible = v.iter().all(|u| (0.0..=1.0).contains(u));
        prop_assert_eq!(ControlPath::new(v).is_ok(), admissible);
    }

    #[test]
    fn candidate_control_is_admissible(
        s in 0.0..20_000.0f64,
        p1 in -1e4..1e4f64,
        p5 in -1e4..1e4f64,
        lambda in 0.0..100.0f64,
        c in 0.0..5.0f64,
    ) {
        let u = candidate_control(s, p1, p5, 3060.0, lambda, c);
        prop_assert!((0.0..=1.0).contains(&u));
    }

    #[test]
    fn grid_spacing_is_consistent(t_end in 0.1..100.0f64, n in 1usize..100_000) {
        let g = TimeGrid::new(t_end, n).unwrap();
        prop_assert_eq!(g.n_points(), n + 1);
        prop_assert_eq!(g.t(0), 0.0);
        assert_relative_eq!(g.t(n), t_end, max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences(
        x in state(),
        u in 0.0..=1.0f64,
        adj in adjoint(),
        lambda in prop_oneof![Just(0.0), 0.1..50.0f64],
        c in 0.5..2.0f64,
        p in params(),
    ) {
        let w = CostWeights::baseline(N_REF);
        let g = grad_hamiltonian_x(&x, u, &adj, &w, lambda, c, &p);
        let xa = x.to_array();
        for j in 0..5 {
            let h = 1e-4 * xa[j].abs().max(1.0);
            let (mut up, mut down) = (xa, xa);
            up[j] += h;
            down[j] -= h;
            let fd = (hamiltonian(&up.into(), u, &adj, &w, lambda, c, &p)
                - hamiltonian(&down.into(), u, &adj, &w, lambda, c, &p))
                / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "component {}: fd {} vs {}", j, fd, g[j]);
        }
    }

    #[test]
    fn ensemble_merge_matches_sequential(
        rows in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 4), 2..40),
        split in 0usize..40,
    ) {
        let split = split.min(rows.len());
        let mut left = EnsembleAccumulator::new(4);
        let mut right = EnsembleAccumulator::new(4);
        for r in &rows[..split] {
            left.push(r).unwrap();
        }
        for r in &rows[split..] {
            right.push(r).unwrap();
        }
        left.merge(&right).unwrap();
        let merged = left.finish(0);
        let direct = ensemble(&rows, 0).unwrap();
        for k in 0..4 {
            assert_relative_eq!(merged.mean[k], direct.mean[k], epsilon = 1e-9, max_relative = 1e-9);
            assert_relative_eq!(merged.variance[k], direct.variance[k], epsilon = 1e-7, max_relative = 1e-9);
        }
    }

    #[test]
    fn multiplier_search_meets_tolerance(scale in 1.0..1e4f64, frac in 0.05..0.95f64, l0 in 0.01..10.0f64) {
        let g = |l: f64| Ok((scale / (1.0 + l), ()));
        let cap = frac * scale;
        let r = search_multiplier(g, cap, 0.01, l0).unwrap();
        prop_assert!(r.binding && r.lambda > 0.0);
        prop_assert!(r.budget <= cap * 1.01);
        prop_assert!(relative_residual(r.lambda, r.budget, cap) <= 0.01);
    }
}
