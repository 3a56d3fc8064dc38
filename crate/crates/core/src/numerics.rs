//! Time integration, finite-difference linearization and discretization.

use nalgebra::{SVector, Vector3, Vector4};

use crate::dynamics::{
    dynamics_rhs, Disturbance, Matrix12, Matrix12x3, Matrix12x4, QuadParams, RotorInput, State12,
    Vector12,
};
use crate::error::{Error, Result};

/// Discrete model `x⁺ = A x + B u + V F_e` about the hover equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix12,
    pub b: Matrix12x4,
    pub v: Matrix12x3,
    pub dt: f64,
}

/// One classical Runge-Kutta step of an autonomous system.
pub fn rk4<const D: usize, F>(f: F, x: &SVector<f64, D>, dt: f64) -> Result<SVector<f64, D>>
where
    F: Fn(&SVector<f64, D>) -> Result<SVector<f64, D>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (0.5 * dt)))?;
    let k3 = f(&(x + k2 * (0.5 * dt)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

/// RK4 step with input and disturbance held over the step.
pub fn rk4_step<F>(f: F, x: &State12, u: &RotorInput, fe: &Disturbance, dt: f64) -> Result<State12>
where
    F: Fn(&State12, &RotorInput, &Disturbance) -> Result<Vector12>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            field: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    rk4(|s: &Vector12| f(&State12(*s), u, fe), &x.0, dt).map(State12)
}

/// RK4 step of the quadrotor model itself.
pub fn quad_step(
    x: &State12,
    u: &RotorInput,
    fe: &Disturbance,
    params: &QuadParams,
    dt: f64,
) -> Result<State12> {
    rk4_step(|s, u, f| dynamics_rhs(s, u, f, params), x, u, fe, dt)
}

/// Central-difference step for a component of magnitude `value`.
pub fn fd_step(value: f64) -> f64 {
    1e-6 * value.abs().max(1.0)
}

/// Central-difference Jacobian of a vector map with respect to its `N`-dimensional argument.
pub fn jacobian<const M: usize, const N: usize, F>(
    f: F,
    at: &SVector<f64, N>,
) -> Result<nalgebra::SMatrix<f64, M, N>>
where
    F: Fn(&SVector<f64, N>) -> Result<SVector<f64, M>>,
{
    let mut jac = nalgebra::SMatrix::<f64, M, N>::zeros();
    for i in 0..N {
        let h = fd_step(at[i]);
        let mut plus = *at;
        let mut minus = *at;
        plus[i] += h;
        minus[i] -= h;
        let col = (f(&plus)? - f(&minus)?) / (2.0 * h);
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// Continuous-time Jacobians `(A_c, B_c, V_c)` of `f` at `(x0, u0, F_e = 0)`.
pub fn linearize<F>(f: F, x0: &State12, u0: &RotorInput) -> Result<(Matrix12, Matrix12x4, Matrix12x3)>
where
    F: Fn(&State12, &RotorInput, &Disturbance) -> Result<Vector12>,
{
    let fe0 = Disturbance::zero();
    let a = jacobian(|x: &Vector12| f(&State12(*x), u0, &fe0), &x0.0)?;
    let b = jacobian(|u: &Vector4<f64>| f(x0, &RotorInput(*u), &fe0), &u0.0)?;
    let v = jacobian(|d: &Vector3<f64>| f(x0, u0, &Disturbance(*d)), &fe0.0)?;
    Ok((a, b, v))
}

/// Forward-Euler discretization.
pub fn discretize<const N: usize, const M: usize, const P: usize>(
    a: &nalgebra::SMatrix<f64, N, N>,
    b: &nalgebra::SMatrix<f64, N, M>,
    v: &nalgebra::SMatrix<f64, N, P>,
    dt: f64,
) -> Result<(
    nalgebra::SMatrix<f64, N, N>,
    nalgebra::SMatrix<f64, N, M>,
    nalgebra::SMatrix<f64, N, P>,
)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            field: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    Ok((
        nalgebra::SMatrix::<f64, N, N>::identity() + a * dt,
        b * dt,
        v * dt,
    ))
}

impl LinearModel {
    pub fn from_continuous(a: &Matrix12, b: &Matrix12x4, v: &Matrix12x3, dt: f64) -> Result<Self> {
        let (a, b, v) = discretize(a, b, v, dt)?;
        Ok(Self { a, b, v, dt })
    }

    /// Linearize the quadrotor at level hover (origin, hover input) and discretize.
    pub fn hover(params: &QuadParams, dt: f64) -> Result<Self> {
        let u0 = crate::dynamics::hover_input(params);
        let (a, b, v) = linearize(|x, u, fe| dynamics_rhs(x, u, fe, params), &State12::zeros(), &u0)?;
        Self::from_continuous(&a, &b, &v, dt)
    }

    /// Propagate the deviation model one step; `du` is the input deviation from the expansion point.
    pub fn step(&self, x: &Vector12, du: &Vector4<f64>, fe: &Vector3<f64>) -> Vector12 {
        self.a * x + self.b * du + self.v * fe
    }
}
