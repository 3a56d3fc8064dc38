//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use quadtrack::dynamics::{inertia_jacobian, QuadParams};

/// `C(η, η̇) η̇` from the Lagrangian `½ η̇ᵀ J(η) η̇`, with `∂J/∂η` by central differences:
/// `J̇ η̇ − ½ ∇_η (η̇ᵀ J η̇)`.
pub fn lagrangian_coriolis_term(eta: &Vector3<f64>, rates: &Vector3<f64>, p: &QuadParams) -> Vector3<f64> {
    let h = 1e-6;
    let mut dj = [Matrix3::zeros(); 3];
    for (i, d) in dj.iter_mut().enumerate() {
        let mut plus = *eta;
        let mut minus = *eta;
        plus[i] += h;
        minus[i] -= h;
        *d = (inertia_jacobian(&plus, p) - inertia_jacobian(&minus, p)) / (2.0 * h);
    }
    let j_dot = dj[0] * rates[0] + dj[1] * rates[1] + dj[2] * rates[2];
    let grad = Vector3::from_fn(|i, _| rates.dot(&(dj[i] * rates)));
    j_dot * rates - grad * 0.5
}

/// Rotational kinetic energy `½ η̇ᵀ J(η) η̇`.
pub fn rotational_energy(eta: &Vector3<f64>, rates: &Vector3<f64>, p: &QuadParams) -> f64 {
    0.5 * rates.dot(&(inertia_jacobian(eta, p) * rates))
}

fn clip(z: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| z[i].max(lb[i]).min(ub[i]))
}

/// Plain projected gradient with fixed step `1/λ_max(H)`, run until the fixed-point residual
/// is tiny. Slow, but obviously correct for strictly convex problems.
pub fn projected_gradient_oracle(h: &DMatrix<f64>, g: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> DVector<f64> {
    let lmax = h.clone().symmetric_eigen().eigenvalues.max();
    let step = 1.0 / lmax;
    let mut z = clip(&DVector::zeros(g.len()), lb, ub);
    for _ in 0..500_000 {
        let next = clip(&(&z - (h * &z + g) * step), lb, ub);
        let moved = (&next - &z).amax();
        z = next;
        if moved < 1e-15 {
            break;
        }
    }
    z
}

pub fn objective(h: &DMatrix<f64>, g: &DVector<f64>, z: &DVector<f64>) -> f64 {
    0.5 * z.dot(&(h * z)) + g.dot(z)
}
