//! Strictly convex quadratic programs with box constraints.
//!
//! `minimize ½ zᵀ H z + gᵀ z  subject to  lb ≤ z ≤ ub`
//!
//! Solved by accelerated projected gradient on a Jacobi-scaled problem with a function-value
//! restart, so the objective never increases between iterates. Every few iterations the
//! active set suggested by a projected-gradient step is tried with a reduced Newton solve;
//! the Newton point is only kept when it lowers the objective.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    h: DMatrix<f64>,
    g: DVector<f64>,
    lb: DVector<f64>,
    ub: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// `‖z − Π(z − (Hz + g))‖_∞` of the regularized problem.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Added to the Hessian diagonal before solving.
    pub regularization: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 5_000,
            regularization: 1e-8,
        }
    }
}

const POWER_ITERATIONS: usize = 50;
const POLISH_EVERY: usize = 5;

impl BoxQp {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, lb: DVector<f64>, ub: DVector<f64>) -> Result<Self> {
        let n = g.len();
        if h.nrows() != n || h.ncols() != n || lb.len() != n || ub.len() != n {
            return Err(Error::Dimension(format!(
                "H is {}x{}, g has {}, lb has {}, ub has {}",
                h.nrows(),
                h.ncols(),
                n,
                lb.len(),
                ub.len()
            )));
        }
        if h.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidQp("H and g must be finite".into()));
        }
        let scale = h.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidQp(format!("H is not symmetric at ({i}, {j})")));
                }
            }
            if lb[i].is_nan() || ub[i].is_nan() || lb[i] > ub[i] {
                return Err(Error::InvalidQp(format!(
                    "bound {i}: lb = {} exceeds ub = {}",
                    lb[i], ub[i]
                )));
            }
        }
        Ok(Self { h, g, lb, ub })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lb
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.ub
    }

    /// `½ zᵀ H z + gᵀ z` without regularization.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        project(z, &self.lb, &self.ub)
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        z.iter()
            .zip(self.lb.iter().zip(self.ub.iter()))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }
}

fn project(z: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        z.len(),
        z.iter()
            .zip(lb.iter().zip(ub.iter()))
            .map(|(v, (l, u))| v.max(*l).min(*u)),
    )
}

/// Projected-gradient residual `‖z − Π(z − (Hz + g))‖_∞`.
pub fn kkt_residual(h: &DMatrix<f64>, g: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let grad = h * z + g;
    (z - project(&(z - grad), lb, ub)).amax()
}

/// Callback receiving each iterate and its regularized objective value.
pub type Observer<'a> = &'a mut dyn FnMut(&DVector<f64>, f64);

pub fn solve_box_qp(problem: &BoxQp, settings: &QpSettings) -> QpSolution {
    solve_box_qp_with(problem, settings, None, None)
}

/// Solve with an optional warm start (projected into the box first) and an observer that sees
/// every iterate together with its regularized objective value.
pub fn solve_box_qp_with(
    problem: &BoxQp,
    settings: &QpSettings,
    warm_start: Option<&DVector<f64>>,
    mut observer: Option<Observer<'_>>,
) -> QpSolution {
    let n = problem.dim();
    let mut h = problem.h.clone();
    for i in 0..n {
        h[(i, i)] += settings.regularization;
    }
    let g = &problem.g;

    // Jacobi scaling z = D w keeps the feasible set a box.
    let d = DVector::from_iterator(n, (0..n).map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt()));
    let hs = DMatrix::from_fn(n, n, |i, j| d[i] * h[(i, j)] * d[j]);
    let gs = g.component_mul(&d);
    let lbs = problem.lb.component_div(&d);
    let ubs = problem.ub.component_div(&d);

    let f = |w: &DVector<f64>| 0.5 * w.dot(&(&hs * w)) + gs.dot(w);
    // Clamping after unscaling absorbs the rounding of the lb/d·d round trip.
    let unscale = |w: &DVector<f64>| project(&w.component_mul(&d), &problem.lb, &problem.ub);

    let mut lipschitz = largest_eigenvalue(&hs) * 1.01;
    if !(lipschitz > 0.0) {
        lipschitz = 1.0;
    }

    let mut w = match warm_start {
        Some(z0) if z0.len() == n => project(&z0.component_div(&d), &lbs, &ubs),
        _ => project(&DVector::zeros(n), &lbs, &ubs),
    };
    let mut fw = f(&w);
    let mut y = w.clone();
    let mut momentum = 1.0_f64;

    if let Some(obs) = observer.as_mut() {
        obs(&unscale(&w), fw);
    }

    let mut iterations = 0;
    loop {
        let z = unscale(&w);
        let residual = kkt_residual(&h, g, &problem.lb, &problem.ub, &z);
        if residual <= settings.tol || iterations >= settings.max_iter {
            let status = if residual <= settings.tol {
                QpStatus::Optimal
            } else {
                QpStatus::MaxIterations
            };
            return QpSolution {
                z,
                kkt_residual: residual,
                iterations,
                status,
                objective: fw,
            };
        }
        iterations += 1;

        let grad_y = &hs * &y + &gs;
        let candidate = project(&(&y - grad_y / lipschitz), &lbs, &ubs);
        let fc = f(&candidate);
        if fc <= fw {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &candidate + (&candidate - &w) * ((momentum - 1.0) / next);
            w = candidate;
            fw = fc;
            momentum = next;
        } else {
            // Restart from the last accepted point with a plain projected-gradient step.
            momentum = 1.0;
            let grad_w = &hs * &w + &gs;
            loop {
                let step = project(&(&w - &grad_w / lipschitz), &lbs, &ubs);
                let fs = f(&step);
                if fs <= fw {
                    w = step;
                    fw = fs;
                    break;
                }
                lipschitz *= 2.0;
                if !lipschitz.is_finite() {
                    break;
                }
            }
            y = w.clone();
        }

        if iterations % POLISH_EVERY == 0 {
            if let Some(polished) = newton_polish(&hs, &gs, &lbs, &ubs, &w, lipschitz) {
                let fp = f(&polished);
                if fp < fw {
                    w = polished;
                    fw = fp;
                    y = w.clone();
                    momentum = 1.0;
                }
            }
        }

        if let Some(obs) = observer.as_mut() {
            obs(&unscale(&w), fw);
        }
    }
}

/// Reduced Newton step on the free set guessed from a projected-gradient step at `w`.
fn newton_polish(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    w: &DVector<f64>,
    lipschitz: f64,
) -> Option<DVector<f64>> {
    let n = w.len();
    let grad = h * w + g;
    let probe = project(&(w - &grad / lipschitz), lb, ub);
    let free: Vec<usize> = (0..n).filter(|&i| probe[i] > lb[i] && probe[i] < ub[i]).collect();
    let mut out = probe.clone();
    if !free.is_empty() {
        let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let rhs = DVector::from_iterator(
            free.len(),
            free.iter().map(|&i| {
                let coupled: f64 = (0..n)
                    .filter(|j| !free.contains(j))
                    .map(|j| h[(i, j)] * probe[j])
                    .sum();
                -(g[i] + coupled)
            }),
        );
        let sol = hff.cholesky()?.solve(&rhs);
        for (a, &i) in free.iter().enumerate() {
            out[i] = sol[a];
        }
    }
    Some(project(&out, lb, ub))
}

fn largest_eigenvalue(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let hv = h * &v;
        let norm = hv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&hv);
        v = hv / norm;
    }
    // Rayleigh quotient of the final iterate never exceeds λ_max; the norm bound is safer.
    let norm = (h * &v).norm();
    lambda.max(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn qp(h: &[f64], g: &[f64], lb: &[f64], ub: &[f64]) -> BoxQp {
        let n = g.len();
        BoxQp::new(
            DMatrix::from_row_slice(n, n, h),
            DVector::from_column_slice(g),
            DVector::from_column_slice(lb),
            DVector::from_column_slice(ub),
        )
        .unwrap()
    }

    #[test]
    fn interior_minimum() {
        let p = qp(&[1.0, 0.0, 0.0, 1.0], &[-1.0, -2.0], &[-10.0, -10.0], &[10.0, 10.0]);
        let s = solve_box_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.z, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-7);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn clamps_at_active_bound() {
        let p = qp(&[1.0, 0.0, 0.0, 1.0], &[-5.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0]);
        let s = solve_box_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.z, DVector::from_vec(vec![1.0, 0.0]), epsilon = 1e-7);
    }

    #[test]
    fn infinite_bounds_are_allowed() {
        let inf = f64::INFINITY;
        let p = qp(&[2.0, 1.0, 1.0, 2.0], &[1.0, 1.0], &[-inf, 0.5], &[inf, inf]);
        let s = solve_box_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(p.contains(&s.z));
    }

    #[test]
    fn rejects_bad_problems() {
        let asym = BoxQp::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
            DVector::from_element(2, -1.0),
            DVector::from_element(2, 1.0),
        );
        assert!(matches!(asym, Err(Error::InvalidQp(_))));
        let crossed = BoxQp::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        );
        assert!(matches!(crossed, Err(Error::InvalidQp(_))));
        let dims = BoxQp::new(
            DMatrix::identity(3, 3),
            DVector::zeros(2),
            DVector::zeros(2),
            DVector::zeros(2),
        );
        assert!(matches!(dims, Err(Error::Dimension(_))));
    }

    #[test]
    fn max_iterations_still_feasible() {
        let p = qp(&[1e4, 0.0, 0.0, 1e-2], &[3.0, -7.0], &[-1.0, -1.0], &[1.0, 1.0]);
        let s = solve_box_qp(&p, &QpSettings { max_iter: 1, ..Default::default() });
        assert!(p.contains(&s.z));
        assert!(s.iterations <= 1);
    }

    #[test]
    fn warm_start_at_optimum_needs_no_iterations() {
        let p = qp(&[1.0, 0.0, 0.0, 1.0], &[-5.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0]);
        let first = solve_box_qp(&p, &QpSettings::default());
        let again = solve_box_qp_with(&p, &QpSettings::default(), Some(&first.z), None);
        assert_eq!(again.iterations, 0);
    }
}
