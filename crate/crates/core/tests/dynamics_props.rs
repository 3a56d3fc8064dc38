mod common;

use nalgebra::{Matrix3, Vector3, Vector4};
use proptest::prelude::*;
use quadtrack::dynamics::{
    allocation_inverse, control_allocation, coriolis_matrix, dynamics_rhs, hover_input, inertia_jacobian,
    rotation_matrix, Disturbance, QuadParams, RotorInput, State12, Vector12,
};
use quadtrack::numerics::{linearize, quad_step};

fn angle() -> impl Strategy<Value = f64> {
    -1.3f64..1.3
}

fn any_eta() -> impl Strategy<Value = Vector3<f64>> {
    (angle(), angle(), -std::f64::consts::PI..std::f64::consts::PI).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn any_rates() -> impl Strategy<Value = Vector3<f64>> {
    (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn any_input() -> impl Strategy<Value = RotorInput> {
    prop::array::uniform4(0.0f64..10.0).prop_map(|a| RotorInput(Vector4::from(a)))
}

fn any_state() -> impl Strategy<Value = State12> {
    (
        prop::array::uniform3(-3.0f64..3.0),
        any_eta(),
        prop::array::uniform3(-2.0f64..2.0),
        any_rates(),
    )
        .prop_map(|(p, eta, v, w)| State12::from_parts(Vector3::from(p), eta, Vector3::from(v), w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rotation_is_orthonormal(eta in any_eta()) {
        let r = rotation_matrix(&eta);
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() <= 1e-10);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn coriolis_matches_lagrangian(eta in any_eta(), rates in any_rates()) {
        let p = QuadParams::default();
        let ours = coriolis_matrix(&eta, &rates, &p) * rates;
        let oracle = common::lagrangian_coriolis_term(&eta, &rates, &p);
        // Relative to the size of the inertial terms so near-zero cases are not amplified.
        let scale = oracle.norm().max(p.inertia_zz * rates.norm_squared()).max(1e-12);
        prop_assert!((ours - oracle).norm() <= 1e-5 * scale, "ours {ours:?} oracle {oracle:?}");
    }

    #[test]
    fn inertia_is_symmetric_positive_definite(eta in any_eta()) {
        let j = inertia_jacobian(&eta, &QuadParams::default());
        prop_assert!((j - j.transpose()).amax() <= 1e-15);
        prop_assert!(j.cholesky().is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn allocation_is_linear(u in any_input(), w in any_input(), a in 0.0f64..2.0) {
        let p = QuadParams::default();
        let (t1, tau1) = control_allocation(&u, &p).unwrap();
        let (t2, tau2) = control_allocation(&w, &p).unwrap();
        let (t, tau) = control_allocation(&RotorInput(u.0 * a + w.0), &p).unwrap();
        prop_assert!((t - (a * t1 + t2)).abs() <= 1e-12 * (1.0 + t.abs()));
        prop_assert!((tau - (tau1 * a + tau2)).amax() <= 1e-12);
    }

    #[test]
    fn allocation_inverse_round_trip(u in any_input()) {
        // Feasible (T, τ) pairs are exactly the images of nonnegative inputs.
        let p = QuadParams::default();
        let (t, tau) = control_allocation(&u, &p).unwrap();
        let back = allocation_inverse(t, &tau, &p);
        let (t2, tau2) = control_allocation(&back, &p).unwrap_or_else(|_| {
            // Round-off can push an exact zero slightly negative.
            let clipped = RotorInput(back.0.map(|v| v.max(0.0)));
            control_allocation(&clipped, &p).unwrap()
        });
        prop_assert!((t - t2).abs() <= 1e-10);
        prop_assert!((tau - tau2).amax() <= 1e-10);
    }

    #[test]
    fn linearization_matches_directional_derivatives(x in any_state(), u in any_input(), v in prop::array::uniform12(-1.0f64..1.0)) {
        let p = QuadParams::default();
        let f = |x: &State12, u: &RotorInput, fe: &Disturbance| dynamics_rhs(x, u, fe, &p);
        let (a, b, _) = linearize(f, &x, &u).unwrap();
        let v = Vector12::from_column_slice(&v);
        let eps = 1e-5;
        let fd = (f(&State12(x.0 + v * eps), &u, &Disturbance::zero()).unwrap()
            - f(&State12(x.0 - v * eps), &u, &Disturbance::zero()).unwrap())
            / (2.0 * eps);
        prop_assert!((fd - a * v).norm() <= 1e-5 * fd.norm().max(1.0));
        let w = Vector4::new(v[0], v[1], v[2], v[3]);
        let fd = (f(&x, &RotorInput(u.0 + w * eps), &Disturbance::zero()).unwrap()
            - f(&x, &RotorInput(u.0 - w * eps), &Disturbance::zero()).unwrap())
            / (2.0 * eps);
        prop_assert!((fd - b * w).norm() <= 1e-5 * fd.norm().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn torque_free_rotation_conserves_energy(eta in (-0.8f64..0.8, -0.8f64..0.8, -1.0f64..1.0), rates in any_rates()) {
        // Equal rotor inputs produce no torque; the attitude subsystem is then a free
        // Lagrangian system and ½η̇ᵀJη̇ is a constant of motion.
        let p = QuadParams::default();
        let eta = Vector3::new(eta.0, eta.1, eta.2);
        let mut x = State12::from_parts(Vector3::zeros(), eta, Vector3::zeros(), rates * 0.5);
        let e0 = common::rotational_energy(&x.attitude(), &x.rates(), &p);
        let u = hover_input(&p);
        for _ in 0..200 {
            x = match quad_step(&x, &u, &Disturbance::zero(), &p, 1e-3) {
                Ok(next) => next,
                Err(_) => return Ok(()),
            };
            if x.attitude()[1].abs() > 1.4 {
                return Ok(());
            }
        }
        let e1 = common::rotational_energy(&x.attitude(), &x.rates(), &p);
        prop_assert!((e1 - e0).abs() <= 1e-6 * e0.max(1e-9), "e0 {e0} e1 {e1}");
    }
}

#[test]
fn hover_equilibrium_residual() {
    let p = QuadParams::default();
    let x = State12::hover_at(Vector3::new(1.0, -2.0, 3.0));
    let xdot = dynamics_rhs(&x, &hover_input(&p), &Disturbance::zero(), &p).unwrap();
    assert!(xdot.amax() <= 1e-10);
}
