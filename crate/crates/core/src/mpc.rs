//! Pieces shared by the linear and nonlinear MPC: configuration, the move-blocked input
//! parametrization and the controller interface used by the simulation harness.

use nalgebra::{DMatrix, DVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Disturbance, RotorInput, State12};
use crate::error::{Error, Result};
use crate::reference::RefPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction steps `N`.
    pub horizon: usize,
    /// Decided moves `N_u`; later stages hold the last move.
    pub control_horizon: usize,
    pub q: [f64; 12],
    pub p: [f64; 12],
    pub r: [f64; 4],
    pub u_min: [f64; 4],
    pub u_max: [f64; 4],
    /// Bound on `|u_k − u_{k−1}|` per control step.
    pub du_max: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let q = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        Self {
            horizon: 18,
            control_horizon: 2,
            q,
            p: q,
            r: [0.1; 4],
            u_min: [0.0; 4],
            u_max: [10.0; 4],
            du_max: 2.0,
            qp_tol: 1e-8,
            qp_max_iter: 5_000,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.control_horizon < 1 {
            return Err(invalid("control_horizon", "must be at least 1"));
        }
        if self.horizon < self.control_horizon {
            return Err(invalid("horizon", "must be at least control_horizon"));
        }
        let weights = self.q.iter().chain(self.p.iter()).chain(self.r.iter());
        if weights.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            let field = if self.q.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                "q"
            } else if self.p.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                "p"
            } else {
                "r"
            };
            return Err(invalid(field, "weights must be finite and nonnegative"));
        }
        for i in 0..4 {
            if !self.u_min[i].is_finite() {
                return Err(invalid("u_min", "must be finite"));
            }
            if !self.u_max[i].is_finite() || self.u_max[i] < self.u_min[i] {
                return Err(invalid(
                    "u_max",
                    format!("u_max[{i}] = {} is below u_min[{i}] = {}", self.u_max[i], self.u_min[i]),
                ));
            }
        }
        if !(self.du_max.is_finite() && self.du_max >= 0.0) {
            return Err(invalid("du_max", "must be finite and nonnegative"));
        }
        if !(self.qp_tol > 0.0) {
            return Err(invalid("qp_tol", "must be positive"));
        }
        if self.qp_max_iter == 0 {
            return Err(invalid("qp_max_iter", "must be positive"));
        }
        Ok(())
    }

    pub fn num_decisions(&self) -> usize {
        4 * self.control_horizon
    }

    /// Index of the decided move applied at prediction stage `k` (0-based).
    pub fn move_for_stage(&self, k: usize) -> usize {
        k.min(self.control_horizon - 1)
    }

    /// Maps the decision vector `(u₀ − u_h, δ₁, …, δ_{N_u−1})` to stacked input deviations
    /// `(u₀ − u_h, …, u_{N_u−1} − u_h)`.
    pub fn cumulative_map(&self) -> DMatrix<f64> {
        cumulative_map(4, self.control_horizon)
    }

    /// Box on the decision vector given the previously applied input.
    pub fn decision_bounds(&self, u_prev: &RotorInput, u_hover: &RotorInput) -> (DVector<f64>, DVector<f64>) {
        let n = self.num_decisions();
        let mut lb = DVector::from_element(n, -self.du_max);
        let mut ub = DVector::from_element(n, self.du_max);
        for i in 0..4 {
            let lo = self.u_min[i].max(u_prev.0[i] - self.du_max);
            let hi = self.u_max[i].min(u_prev.0[i] + self.du_max);
            // u_prev outside [u_min, u_max] by more than du_max leaves an empty intersection;
            // fall back to the nearest bound so the box stays well formed.
            let (lo, hi) = if lo <= hi { (lo, hi) } else if u_prev.0[i] > self.u_max[i] { (hi, hi) } else { (lo, lo) };
            lb[i] = lo - u_hover.0[i];
            ub[i] = hi - u_hover.0[i];
        }
        (lb, ub)
    }

    /// Absolute decided moves from a decision vector.
    pub fn moves(&self, z: &DVector<f64>, u_hover: &RotorInput) -> Vec<RotorInput> {
        let stacked = self.cumulative_map() * z;
        (0..self.control_horizon)
            .map(|j| RotorInput(u_hover.0 + Vector4::from_iterator(stacked.rows(4 * j, 4).iter().copied())))
            .collect()
    }

    pub fn q_diag(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.q)
    }
}

/// Lower block-triangular map from `(Δ₀, δ₁, …)` to cumulative input deviations, for `nu`
/// inputs and `control_horizon` moves.
pub fn cumulative_map(nu: usize, control_horizon: usize) -> DMatrix<f64> {
    let n = nu * control_horizon;
    DMatrix::from_fn(n, n, |i, j| {
        if i % nu == j % nu && j / nu <= i / nu {
            1.0
        } else {
            0.0
        }
    })
}

/// Shift a decision vector by one control step for warm starting: the second move becomes
/// the first, and the last move is repeated.
pub fn shift_decisions(z: &DVector<f64>, control_horizon: usize) -> DVector<f64> {
    let mut out = DVector::zeros(z.len());
    if control_horizon == 1 {
        out.copy_from(z);
        return out;
    }
    let first = z.rows(0, 4) + z.rows(4, 4);
    out.rows_mut(0, 4).copy_from(&first);
    for j in 1..control_horizon - 1 {
        let next = z.rows(4 * (j + 1), 4).into_owned();
        out.rows_mut(4 * j, 4).copy_from(&next);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum StepStatus {
    #[default]
    Ok,
    /// The solver stopped at its iteration cap; the returned input is still feasible.
    Degraded,
    /// The solve could not be carried out; a fallback input was returned.
    Fault(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// QP iterations (LMPC) or SQP iterations (NMPC).
    pub iterations: usize,
    /// KKT residual (LMPC), final defect norm (NMPC) or clamping magnitude (baselines).
    pub residual: f64,
    /// Predicted cost (LMPC) or merit value (NMPC).
    pub cost: f64,
    pub status: StepStatus,
}

/// Everything a controller sees at one control instant.
#[derive(Debug, Clone)]
pub struct StepInput<'a> {
    pub t: f64,
    pub state: &'a State12,
    pub disturbance: &'a Disturbance,
    /// References for stages `1..=N`.
    pub window: &'a [State12],
    /// Reference at the current instant with derivatives.
    pub point: &'a RefPoint,
    pub u_prev: &'a RotorInput,
}

pub trait Controller: Send {
    fn name(&self) -> &str;

    /// Number of future reference stages the controller wants in `StepInput::window`.
    fn horizon(&self) -> usize {
        0
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<(RotorInput, Diagnostics)>;
}
