//! Rigid-body quadrotor model in Euler angles.
//!
//! State ordering is `[x, y, z, φ, θ, ψ, ẋ, ẏ, ż, φ̇, θ̇, ψ̇]`, the input is the vector of squared
//! rotor speeds `[ω₁², ω₂², ω₃², ω₄²]` and the external disturbance is a world-frame force that
//! enters the translational equation only.

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};

use crate::error::{Error, Result};

pub type Vector12 = SVector<f64, 12>;
pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Matrix12x4 = SMatrix<f64, 12, 4>;
pub type Matrix12x3 = SMatrix<f64, 12, 3>;

/// Steady rotor input the thrust coefficient is calibrated against.
pub const HOVER_TARGET_INPUT: f64 = 4.9;

/// Attitudes with |cos θ| at or below this value are rejected.
pub const SINGULARITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadParams {
    pub mass: f64,
    pub gravity: f64,
    pub inertia_xx: f64,
    pub inertia_yy: f64,
    pub inertia_zz: f64,
    pub thrust_coeff: f64,
    pub drag_coeff: f64,
    pub arm_length: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        let mass = 1.0;
        let gravity = 9.81;
        Self {
            mass,
            gravity,
            inertia_xx: 5e-3,
            inertia_yy: 5e-3,
            inertia_zz: 9e-3,
            thrust_coeff: calibrated_thrust_coeff(mass, gravity),
            drag_coeff: 1e-2,
            arm_length: 0.25,
        }
    }
}

/// Thrust coefficient for which four equal rotors at [`HOVER_TARGET_INPUT`] carry the weight.
pub fn calibrated_thrust_coeff(mass: f64, gravity: f64) -> f64 {
    mass * gravity / (4.0 * HOVER_TARGET_INPUT)
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("inertia_xx", self.inertia_xx),
            ("inertia_yy", self.inertia_yy),
            ("inertia_zz", self.inertia_zz),
            ("thrust_coeff", self.thrust_coeff),
            ("drag_coeff", self.drag_coeff),
            ("arm_length", self.arm_length),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be finite and strictly positive, got {value}"),
                });
            }
        }
        if (self.inertia_xx - self.inertia_yy).abs() > 1e-12 * self.inertia_xx.max(self.inertia_yy) {
            return Err(Error::InvalidParameter {
                field: "inertia_yy",
                reason: format!(
                    "must equal inertia_xx ({} != {})",
                    self.inertia_yy, self.inertia_xx
                ),
            });
        }
        Ok(())
    }

    pub fn inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(
            self.inertia_xx,
            self.inertia_yy,
            self.inertia_zz,
        ))
    }

    /// Maps `u` to `[T, τ_φ, τ_θ, τ_ψ]` (plus configuration).
    pub fn allocation_matrix(&self) -> Matrix4<f64> {
        let k = self.thrust_coeff;
        let lk = self.arm_length * k;
        let b = self.drag_coeff;
        Matrix4::new(
            k, k, k, k, //
            0.0, -lk, 0.0, lk, //
            -lk, 0.0, lk, 0.0, //
            b, -b, b, -b,
        )
    }
}

/// Full 12-dimensional state `{ξ, η, ξ̇, η̇}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State12(pub Vector12);

impl State12 {
    pub fn zeros() -> Self {
        Self(Vector12::zeros())
    }

    pub fn from_parts(
        position: Vector3<f64>,
        attitude: Vector3<f64>,
        velocity: Vector3<f64>,
        rates: Vector3<f64>,
    ) -> Self {
        let mut v = Vector12::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&position);
        v.fixed_rows_mut::<3>(3).copy_from(&attitude);
        v.fixed_rows_mut::<3>(6).copy_from(&velocity);
        v.fixed_rows_mut::<3>(9).copy_from(&rates);
        Self(v)
    }

    /// Level, motionless state at `position`.
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self::from_parts(position, Vector3::zeros(), Vector3::zeros(), Vector3::zeros())
    }

    pub fn position(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn attitude(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(6).into_owned()
    }

    pub fn rates(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(9).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Roll and pitch strictly inside (−π/2, π/2) and every entry finite. Yaw is kept unwrapped.
    pub fn is_valid(&self) -> bool {
        let eta = self.attitude();
        self.is_finite()
            && eta[0].abs() < std::f64::consts::FRAC_PI_2
            && eta[1].abs() < std::f64::consts::FRAC_PI_2
    }
}

/// Squared rotor speeds `[ω₁², ω₂², ω₃², ω₄²]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorInput(pub Vector4<f64>);

impl RotorInput {
    pub fn splat(value: f64) -> Self {
        Self(Vector4::repeat(value))
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        match self.0.iter().position(|v| *v < 0.0) {
            Some(index) => Err(Error::NegativeInput {
                index,
                value: self.0[index],
            }),
            None => Ok(()),
        }
    }
}

/// External force `α_T = (A_x, A_y, A_z)` in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Disturbance(pub Vector3<f64>);

impl Disturbance {
    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }
}

/// Body-to-world rotation `R_z(ψ) R_y(θ) R_x(φ)`.
pub fn rotation_matrix(eta: &Vector3<f64>) -> Matrix3<f64> {
    let (sphi, cphi) = eta[0].sin_cos();
    let (sth, cth) = eta[1].sin_cos();
    let (spsi, cpsi) = eta[2].sin_cos();
    Matrix3::new(
        cpsi * cth,
        cpsi * sth * sphi - spsi * cphi,
        cpsi * sth * cphi + spsi * sphi,
        spsi * cth,
        spsi * sth * sphi + cpsi * cphi,
        spsi * sth * cphi - cpsi * sphi,
        -sth,
        cth * sphi,
        cth * cphi,
    )
}

fn guard_pitch(theta: f64) -> Result<f64> {
    let c = theta.cos();
    if c.abs() <= SINGULARITY_TOLERANCE {
        Err(Error::SingularAttitude { cos_theta: c })
    } else {
        Ok(c)
    }
}

/// `W_η`, mapping Euler-angle rates to body rates `(p, q, r)`.
pub fn euler_rate_matrix(eta: &Vector3<f64>) -> Result<Matrix3<f64>> {
    guard_pitch(eta[1])?;
    Ok(euler_rate_matrix_unchecked(eta))
}

fn euler_rate_matrix_unchecked(eta: &Vector3<f64>) -> Matrix3<f64> {
    let (sphi, cphi) = eta[0].sin_cos();
    let (sth, cth) = eta[1].sin_cos();
    Matrix3::new(
        1.0,
        0.0,
        -sth,
        0.0,
        cphi,
        cth * sphi,
        0.0,
        -sphi,
        cth * cphi,
    )
}

/// `W_η⁻¹`, mapping body rates back to Euler-angle rates.
pub fn inverse_euler_rate_matrix(eta: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let cth = guard_pitch(eta[1])?;
    let (sphi, cphi) = eta[0].sin_cos();
    let tth = eta[1].sin() / cth;
    Ok(Matrix3::new(
        1.0,
        sphi * tth,
        cphi * tth,
        0.0,
        cphi,
        -sphi,
        0.0,
        sphi / cth,
        cphi / cth,
    ))
}

/// `J_η = W_ηᵀ I W_η`, written out entry by entry.
pub fn inertia_jacobian(eta: &Vector3<f64>, params: &QuadParams) -> Matrix3<f64> {
    let (ixx, iyy, izz) = (params.inertia_xx, params.inertia_yy, params.inertia_zz);
    let (sphi, cphi) = eta[0].sin_cos();
    let (sth, cth) = eta[1].sin_cos();
    let j12 = 0.0;
    let j13 = -ixx * sth;
    let j22 = iyy * cphi * cphi + izz * sphi * sphi;
    let j23 = (iyy - izz) * cphi * sphi * cth;
    let j33 = ixx * sth * sth + iyy * sphi * sphi * cth * cth + izz * cphi * cphi * cth * cth;
    Matrix3::new(ixx, j12, j13, j12, j22, j23, j13, j23, j33)
}

/// Coriolis matrix `C(η, η̇)` of the rotational Euler-Lagrange equation.
///
/// The (2,1) entry uses `S²_φ` inside the first bracket; with a bare `S_φ` there, `C η̇` no
/// longer matches the Lagrangian.
pub fn coriolis_matrix(eta: &Vector3<f64>, eta_dot: &Vector3<f64>, params: &QuadParams) -> Matrix3<f64> {
    let (ixx, iyy, izz) = (params.inertia_xx, params.inertia_yy, params.inertia_zz);
    let (sphi, cphi) = eta[0].sin_cos();
    let (sth, cth) = eta[1].sin_cos();
    let (dphi, dth, dpsi) = (eta_dot[0], eta_dot[1], eta_dot[2]);
    let (s2phi, c2phi, c2th) = (sphi * sphi, cphi * cphi, cth * cth);

    let c11 = 0.0;
    let c12 = (iyy - izz) * (dth * cphi * sphi + dpsi * s2phi * cth)
        + (izz - iyy) * dpsi * c2phi * cth
        - ixx * dpsi * cth;
    let c13 = (izz - iyy) * dpsi * cphi * sphi * c2th;
    let c21 = (izz - iyy) * (dth * cphi * sphi + dpsi * s2phi * cth)
        + (iyy - izz) * dpsi * c2phi * cth
        + ixx * dpsi * cth;
    let c22 = (izz - iyy) * dphi * cphi * sphi;
    let c23 = -ixx * dpsi * sth * cth + iyy * dpsi * s2phi * sth * cth + izz * dpsi * c2phi * sth * cth;
    let c31 = (iyy - izz) * dpsi * c2th * sphi * cphi - ixx * dth * cth;
    let c32 = (izz - iyy) * (dth * cphi * sphi * sth + dphi * s2phi * cth)
        + (iyy - izz) * dphi * c2phi * cth
        + ixx * dpsi * sth * cth
        - iyy * dpsi * s2phi * sth * cth
        - izz * dpsi * c2phi * sth * cth;
    let c33 = (iyy - izz) * dphi * cphi * sphi * c2th - iyy * dth * s2phi * cth * sth
        - izz * dth * c2phi * cth * sth
        + ixx * dth * cth * sth;

    Matrix3::new(c11, c12, c13, c21, c22, c23, c31, c32, c33)
}

/// Collective thrust and body torques produced by `u`.
pub fn control_allocation(u: &RotorInput, params: &QuadParams) -> Result<(f64, Vector3<f64>)> {
    u.check_nonnegative()?;
    Ok(allocate_unchecked(u, params))
}

fn allocate_unchecked(u: &RotorInput, params: &QuadParams) -> (f64, Vector3<f64>) {
    let w = params.allocation_matrix() * u.0;
    (w[0], Vector3::new(w[1], w[2], w[3]))
}

/// Rotor inputs realising `(T, τ)`. No clamping; entries may come out negative.
pub fn allocation_inverse(thrust: f64, torque: &Vector3<f64>, params: &QuadParams) -> RotorInput {
    let k = params.thrust_coeff;
    let lk = params.arm_length * k;
    let b = params.drag_coeff;
    let t4 = thrust / (4.0 * k);
    let yaw = torque[2] / (4.0 * b);
    RotorInput(Vector4::new(
        t4 - torque[1] / (2.0 * lk) + yaw,
        t4 - torque[0] / (2.0 * lk) - yaw,
        t4 + torque[1] / (2.0 * lk) + yaw,
        t4 + torque[0] / (2.0 * lk) - yaw,
    ))
}

/// Equal rotor inputs whose thrust balances gravity.
pub fn hover_input(params: &QuadParams) -> RotorInput {
    RotorInput::splat(params.mass * params.gravity / (4.0 * params.thrust_coeff))
}

/// Continuous-time model `ẋ = f(x, u, α_T)`.
///
/// Inputs are not sign-checked here so that finite-difference perturbations around a zero input
/// stay well defined; use [`control_allocation`] when validation is wanted.
pub fn dynamics_rhs(
    x: &State12,
    u: &RotorInput,
    disturbance: &Disturbance,
    params: &QuadParams,
) -> Result<Vector12> {
    let eta = x.attitude();
    let eta_dot = x.rates();
    guard_pitch(eta[1])?;

    let (thrust, torque) = allocate_unchecked(u, params);
    let (sphi, cphi) = eta[0].sin_cos();
    let (sth, cth) = eta[1].sin_cos();
    let (spsi, cpsi) = eta[2].sin_cos();
    let body_z = Vector3::new(
        cpsi * sth * cphi + spsi * sphi,
        spsi * sth * cphi - cpsi * sphi,
        cth * cphi,
    );
    let accel = body_z * (thrust / params.mass) - Vector3::new(0.0, 0.0, params.gravity)
        - disturbance.0 / params.mass;

    let j = inertia_jacobian(&eta, params);
    let c = coriolis_matrix(&eta, &eta_dot, params);
    let rhs = torque - c * eta_dot;
    let eta_ddot = j
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or(Error::SingularAttitude { cos_theta: cth })?;

    Ok(State12::from_parts(x.velocity(), eta_dot, accel, eta_ddot).0)
}

/// Wrap an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rotation_identity_and_yaw_quarter_turn() {
        assert_relative_eq!(rotation_matrix(&Vector3::zeros()), Matrix3::identity());
        let r = rotation_matrix(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(r, expected, epsilon = 1e-15);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = rotation_matrix(&Vector3::new(0.1, 0.2, 0.3));
        assert_relative_eq!(r.transpose() * r, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn euler_rate_matrices() {
        for psi in [-2.0, 0.0, 1.3] {
            let eta = Vector3::new(0.0, 0.0, psi);
            assert_eq!(euler_rate_matrix(&eta).unwrap(), Matrix3::identity());
            assert_eq!(inverse_euler_rate_matrix(&eta).unwrap(), Matrix3::identity());
        }
        let eta = Vector3::new(0.3, 0.4, 0.0);
        let w = euler_rate_matrix(&eta).unwrap();
        let winv = inverse_euler_rate_matrix(&eta).unwrap();
        assert_relative_eq!(winv * w, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(w * winv, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn euler_rate_matrix_rejects_vertical_pitch() {
        let eta = Vector3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0);
        assert!(matches!(euler_rate_matrix(&eta), Err(Error::SingularAttitude { .. })));
        assert!(matches!(
            inverse_euler_rate_matrix(&eta),
            Err(Error::SingularAttitude { .. })
        ));
    }

    #[test]
    fn inertia_jacobian_matches_triple_product() {
        let p = QuadParams::default();
        assert_relative_eq!(inertia_jacobian(&Vector3::zeros(), &p), p.inertia());
        let eta = Vector3::new(0.2, 0.3, 0.1);
        let w = euler_rate_matrix(&eta).unwrap();
        let triple = w.transpose() * p.inertia() * w;
        assert_relative_eq!(inertia_jacobian(&eta, &p), triple, epsilon = 1e-12);
    }

    #[test]
    fn coriolis_vanishes_without_rates() {
        let p = QuadParams::default();
        let c = coriolis_matrix(&Vector3::new(0.1, -0.4, 2.0), &Vector3::zeros(), &p);
        assert_eq!(c, Matrix3::zeros());
    }

    #[test]
    fn allocation_examples() {
        let p = QuadParams::default();
        let (t, tau) = control_allocation(&RotorInput::splat(0.0), &p).unwrap();
        assert_eq!((t, tau), (0.0, Vector3::zeros()));

        let (t, tau) = control_allocation(&RotorInput::splat(4.9), &p).unwrap();
        assert_relative_eq!(t, p.mass * p.gravity, epsilon = 1e-14);
        assert_eq!(tau, Vector3::zeros());

        let u = RotorInput(Vector4::new(0.0, 1.0, 0.0, 1.0));
        let (_, tau) = control_allocation(&u, &p).unwrap();
        assert_eq!(tau, Vector3::new(0.0, 0.0, -2.0 * p.drag_coeff));

        let bad = RotorInput(Vector4::new(1.0, -0.5, 1.0, 1.0));
        assert_eq!(
            control_allocation(&bad, &p),
            Err(Error::NegativeInput { index: 1, value: -0.5 })
        );
    }

    #[test]
    fn hover_input_calibration() {
        let p = QuadParams::default();
        assert_eq!(hover_input(&p), RotorInput::splat(4.9));
        let heavy = QuadParams { mass: 2.0, ..p };
        assert_relative_eq!(hover_input(&heavy).0, Vector4::repeat(9.8), epsilon = 1e-12);
        let xdot = dynamics_rhs(&State12::zeros(), &hover_input(&heavy), &Disturbance::zero(), &heavy)
            .unwrap();
        assert!(xdot.amax() < 1e-10);
    }

    #[test]
    fn free_fall_and_disturbance() {
        let p = QuadParams::default();
        let xdot = dynamics_rhs(&State12::zeros(), &RotorInput::splat(0.0), &Disturbance::zero(), &p)
            .unwrap();
        let mut expected = Vector12::zeros();
        expected[8] = -p.gravity;
        assert_eq!(xdot, expected);

        // The disturbance force is subtracted: a downward α_T accelerates upward.
        let fe = Disturbance(Vector3::new(0.0, 0.0, -1.0));
        let xdot = dynamics_rhs(&State12::zeros(), &hover_input(&p), &fe, &p).unwrap();
        assert_relative_eq!(
            xdot.fixed_rows::<3>(6).into_owned(),
            Vector3::new(0.0, 0.0, 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn params_validation() {
        assert!(QuadParams::default().validate().is_ok());
        let bad = QuadParams { mass: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { field: "mass", .. })));
        let bad = QuadParams { inertia_yy: 6e-3, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { field: "inertia_yy", .. })));
    }

    #[test]
    fn allocation_inverse_round_trip() {
        let p = QuadParams::default();
        let tau = Vector3::new(0.01, -0.02, 0.003);
        let u = allocation_inverse(9.0, &tau, &p);
        let (t, back) = control_allocation(&u, &p).unwrap();
        assert_relative_eq!(t, 9.0, epsilon = 1e-12);
        assert_relative_eq!(back, tau, epsilon = 1e-12);
    }
}
