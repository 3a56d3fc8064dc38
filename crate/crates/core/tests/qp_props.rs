mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use quadtrack::qp::{kkt_residual, solve_box_qp, solve_box_qp_with, BoxQp, QpSettings, QpStatus};
use rand::{Rng, SeedableRng};

/// Random strictly convex box QP with `n ≤ 6`: `H = MᵀM + I`, some bounds infinite.
fn random_qp() -> impl Strategy<Value = BoxQp> {
    (1usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n * n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-2.0f64..0.5, n),
            prop::collection::vec(0.0f64..3.0, n),
            prop::collection::vec(0u8..10, n),
        )
            .prop_map(move |(m, g, lo, width, open)| {
                let m = DMatrix::from_vec(n, n, m);
                let h = m.transpose() * &m + DMatrix::identity(n, n);
                let lb = DVector::from_fn(n, |i, _| if open[i] == 0 { f64::NEG_INFINITY } else { lo[i] });
                let ub = DVector::from_fn(n, |i, _| if open[i] == 1 { f64::INFINITY } else { lo[i] + width[i] });
                BoxQp::new(h, DVector::from_vec(g), lb, ub).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn matches_projected_gradient_oracle(qp in random_qp()) {
        let sol = solve_box_qp(&qp, &QpSettings::default());
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        prop_assert!(qp.contains(&sol.z));
        prop_assert!(sol.kkt_residual <= 1e-8);
        let oracle = common::projected_gradient_oracle(qp.h(), qp.g(), qp.lower(), qp.upper());
        prop_assert!((&sol.z - &oracle).amax() <= 1e-6, "solver {} oracle {}", sol.z, oracle);
    }

    #[test]
    fn iterates_feasible_and_monotone(qp in random_qp()) {
        let mut values = Vec::new();
        let mut feasible = true;
        let mut observe = |z: &DVector<f64>, f: f64| {
            feasible &= qp.contains(z);
            values.push(f);
        };
        let sol = solve_box_qp_with(&qp, &QpSettings::default(), None, Some(&mut observe));
        prop_assert!(feasible);
        prop_assert!(!values.is_empty());
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(qp.contains(&sol.z));
    }

    #[test]
    fn no_random_feasible_point_does_better(qp in random_qp(), seed in any::<u64>()) {
        let sol = solve_box_qp(&qp, &QpSettings::default());
        let best = qp.objective(&sol.z);
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let n = qp.dim();
        for _ in 0..10_000 {
            let z = DVector::from_fn(n, |i, _| {
                let lo = qp.lower()[i].max(-10.0);
                let hi = qp.upper()[i].min(10.0);
                rng.random_range(lo..=hi)
            });
            prop_assert!(qp.objective(&z) >= best - 1e-9);
        }
    }
}

#[test]
fn kkt_residual_vanishes_only_at_the_solution() {
    let qp = BoxQp::new(
        DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]),
        DVector::from_vec(vec![-2.0, -2.0]),
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![0.5, 0.5]),
    )
    .unwrap();
    let z = DVector::from_vec(vec![0.5, 0.5]);
    assert_eq!(kkt_residual(qp.h(), qp.g(), qp.lower(), qp.upper(), &z), 0.0);
    let z = DVector::from_vec(vec![0.2, 0.5]);
    assert!(kkt_residual(qp.h(), qp.g(), qp.lower(), qp.upper(), &z) > 0.1);
}
