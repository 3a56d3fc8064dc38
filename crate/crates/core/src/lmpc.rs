//! Linear MPC on the hover-linearized model, condensed into a box-constrained QP over the
//! move-blocked input sequence.
//!
//! Decision vector: `z = (u₀ − u_h, δ₁, …, δ_{N_u−1})` with `δ_j = u_j − u_{j−1}`, so both the
//! amplitude limits on the first move and the rate limits stay plain bounds.
//!
//! Cost: `Σ_{k=1..N} ‖x_k − r_k‖²_Q + ‖x_N − r_N‖²_P + Σ_{j<N_u} ‖u_j − u_h‖²_R`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{hover_input, QuadParams, RotorInput, State12};
use crate::error::{Error, Result};
use crate::mpc::{cumulative_map, shift_decisions, Controller, Diagnostics, MpcConfig, StepInput, StepStatus};
use crate::numerics::LinearModel;
use crate::qp::{solve_box_qp_with, BoxQp, QpSettings, QpStatus};

/// Stacked affine prediction `x̄ = G z + Φ x₀ + Ψ F_e` for stages `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    pub control_horizon: usize,
    pub input_map: DMatrix<f64>,
    pub state_map: DMatrix<f64>,
    pub disturbance_map: DMatrix<f64>,
}

impl Prediction {
    pub fn new(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        v: &DMatrix<f64>,
        horizon: usize,
        control_horizon: usize,
    ) -> Result<Self> {
        let nx = a.nrows();
        let nu = b.ncols();
        let nd = v.ncols();
        if a.ncols() != nx || b.nrows() != nx || v.nrows() != nx {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}, V is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        if control_horizon < 1 || horizon < control_horizon {
            return Err(Error::Dimension(format!(
                "need 1 <= N_u <= N, got N = {horizon}, N_u = {control_horizon}"
            )));
        }
        let nz = nu * control_horizon;
        let cumulative = cumulative_map(nu, control_horizon);

        let mut input_map = DMatrix::zeros(nx * horizon, nz);
        let mut state_map = DMatrix::zeros(nx * horizon, nx);
        let mut disturbance_map = DMatrix::zeros(nx * horizon, nd);

        let mut g_prev = DMatrix::<f64>::zeros(nx, nz);
        let mut phi_prev = DMatrix::<f64>::identity(nx, nx);
        let mut psi_prev = DMatrix::<f64>::zeros(nx, nd);
        for k in 1..=horizon {
            let mv = (k - 1).min(control_horizon - 1);
            let select = cumulative.rows(nu * mv, nu);
            let g_k = a * &g_prev + b * select;
            let phi_k = a * &phi_prev;
            let psi_k = a * &psi_prev + v;
            let row = nx * (k - 1);
            input_map.view_mut((row, 0), (nx, nz)).copy_from(&g_k);
            state_map.view_mut((row, 0), (nx, nx)).copy_from(&phi_k);
            disturbance_map.view_mut((row, 0), (nx, nd)).copy_from(&psi_k);
            g_prev = g_k;
            phi_prev = phi_k;
            psi_prev = psi_k;
        }

        Ok(Self {
            nx,
            nu,
            horizon,
            control_horizon,
            input_map,
            state_map,
            disturbance_map,
        })
    }

    /// Free response `Φ x₀ + Ψ F_e`.
    pub fn offset(&self, x0: &DVector<f64>, fe: &DVector<f64>) -> DVector<f64> {
        &self.state_map * x0 + &self.disturbance_map * fe
    }
}

/// Stage weights: `Q` on every predicted stage with `P` added on the last one.
fn stacked_state_weights(q: &DVector<f64>, p: &DVector<f64>, horizon: usize) -> DVector<f64> {
    let nx = q.len();
    let mut w = DVector::zeros(nx * horizon);
    for k in 0..horizon {
        w.rows_mut(nx * k, nx).copy_from(q);
    }
    let mut last = w.rows_mut(nx * (horizon - 1), nx);
    last += p;
    w
}

/// Hessian `2 (Gᵀ W G + Tᵀ R̄ T)` of the condensed problem.
pub fn condensed_hessian(prediction: &Prediction, q: &DVector<f64>, p: &DVector<f64>, r: &DVector<f64>) -> DMatrix<f64> {
    let w = stacked_state_weights(q, p, prediction.horizon);
    let g = &prediction.input_map;
    let wg = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| w[i] * g[(i, j)]);
    let t = cumulative_map(prediction.nu, prediction.control_horizon);
    let rbar = DVector::from_iterator(
        t.nrows(),
        (0..prediction.control_horizon).flat_map(|_| r.iter().copied()),
    );
    let rt = DMatrix::from_fn(t.nrows(), t.ncols(), |i, j| rbar[i] * t[(i, j)]);
    let mut h = (g.transpose() * wg + t.transpose() * rt) * 2.0;
    // Symmetrize away round-off.
    let ht = h.transpose();
    h = (h + ht) * 0.5;
    h
}

/// The condensed QP together with the affine prediction it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedQp {
    pub qp: BoxQp,
    pub input_map: DMatrix<f64>,
    /// Free response of the stacked predicted states.
    pub offset: DVector<f64>,
    /// Stacked references `r₁..r_N`.
    pub references: DVector<f64>,
    pub state_weights: DVector<f64>,
    /// Cost terms independent of the decision vector.
    pub constant: f64,
    pub input_weights: DVector<f64>,
    pub nu: usize,
    pub control_horizon: usize,
}

impl CondensedQp {
    pub fn predicted_states(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.input_map * z + &self.offset
    }

    pub fn predicted_errors(&self, z: &DVector<f64>) -> DVector<f64> {
        self.predicted_states(z) - &self.references
    }

    /// Full tracking cost, equal to `½ zᵀHz + gᵀz + constant`.
    pub fn cost(&self, z: &DVector<f64>) -> f64 {
        self.qp.objective(z) + self.constant
    }
}

/// Condense a dense LTI tracking problem. `refs` holds the stacked references for stages
/// `1..=N`; bounds apply to the decision vector.
#[allow(clippy::too_many_arguments)]
pub fn condense_dense(
    prediction: &Prediction,
    hessian: Option<&DMatrix<f64>>,
    q: &DVector<f64>,
    p: &DVector<f64>,
    r: &DVector<f64>,
    x0: &DVector<f64>,
    fe: &DVector<f64>,
    refs: &DVector<f64>,
    lb: DVector<f64>,
    ub: DVector<f64>,
) -> Result<CondensedQp> {
    let nx = prediction.nx;
    if q.len() != nx || p.len() != nx || r.len() != prediction.nu || x0.len() != nx {
        return Err(Error::Dimension(format!(
            "weights/state do not match nx = {nx}, nu = {}",
            prediction.nu
        )));
    }
    if refs.len() != nx * prediction.horizon {
        return Err(Error::Dimension(format!(
            "reference window has {} entries, expected {}",
            refs.len() / nx.max(1),
            prediction.horizon
        )));
    }
    if fe.len() != prediction.disturbance_map.ncols() {
        return Err(Error::Dimension("disturbance dimension mismatch".into()));
    }
    let h = match hessian {
        Some(h) => h.clone(),
        None => condensed_hessian(prediction, q, p, r),
    };
    let w = stacked_state_weights(q, p, prediction.horizon);
    let offset = prediction.offset(x0, fe);
    let residual = &offset - refs;
    let weighted = residual.component_mul(&w);
    let g = prediction.input_map.transpose() * &weighted * 2.0;
    let constant = residual.dot(&weighted);
    let qp = BoxQp::new(h, g, lb, ub)?;
    let input_weights = DVector::from_iterator(
        prediction.nu * prediction.control_horizon,
        (0..prediction.control_horizon).flat_map(|_| r.iter().copied()),
    );
    Ok(CondensedQp {
        qp,
        input_map: prediction.input_map.clone(),
        offset,
        references: refs.clone(),
        state_weights: w,
        constant,
        input_weights,
        nu: prediction.nu,
        control_horizon: prediction.control_horizon,
    })
}

fn stack_states(window: &[State12]) -> DVector<f64> {
    DVector::from_iterator(12 * window.len(), window.iter().flat_map(|s| s.0.iter().copied()))
}

/// Condense the quadrotor tracking problem on `model` for the current state and window.
pub fn condense(
    model: &LinearModel,
    cfg: &MpcConfig,
    x0: &State12,
    fe: &nalgebra::Vector3<f64>,
    window: &[State12],
    u_prev: &RotorInput,
    u_hover: &RotorInput,
) -> Result<CondensedQp> {
    cfg.validate()?;
    if window.len() != cfg.horizon {
        return Err(Error::Dimension(format!(
            "reference window has {} entries, expected {}",
            window.len(),
            cfg.horizon
        )));
    }
    let prediction = Prediction::new(
        &DMatrix::from_column_slice(12, 12, model.a.as_slice()),
        &DMatrix::from_column_slice(12, 4, model.b.as_slice()),
        &DMatrix::from_column_slice(12, 3, model.v.as_slice()),
        cfg.horizon,
        cfg.control_horizon,
    )?;
    let (lb, ub) = cfg.decision_bounds(u_prev, u_hover);
    condense_dense(
        &prediction,
        None,
        &cfg.q_diag(),
        &DVector::from_column_slice(&cfg.p),
        &DVector::from_column_slice(&cfg.r),
        &DVector::from_column_slice(x0.0.as_slice()),
        &DVector::from_column_slice(fe.as_slice()),
        &stack_states(window),
        lb,
        ub,
    )
}

/// Receding-horizon linear MPC with a fixed hover model.
#[derive(Debug, Clone)]
pub struct Lmpc {
    name: String,
    cfg: MpcConfig,
    model: LinearModel,
    prediction: Prediction,
    hessian: DMatrix<f64>,
    u_hover: RotorInput,
    warm: Option<DVector<f64>>,
}

impl Lmpc {
    pub fn new(params: &QuadParams, cfg: MpcConfig, dt: f64) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let model = LinearModel::hover(params, dt)?;
        let prediction = Prediction::new(
            &DMatrix::from_column_slice(12, 12, model.a.as_slice()),
            &DMatrix::from_column_slice(12, 4, model.b.as_slice()),
            &DMatrix::from_column_slice(12, 3, model.v.as_slice()),
            cfg.horizon,
            cfg.control_horizon,
        )?;
        let hessian = condensed_hessian(
            &prediction,
            &cfg.q_diag(),
            &DVector::from_column_slice(&cfg.p),
            &DVector::from_column_slice(&cfg.r),
        );
        Ok(Self {
            name: "lmpc".into(),
            cfg,
            model,
            prediction,
            hessian,
            u_hover: hover_input(params),
            warm: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    /// Build the QP for one control instant.
    pub fn condense_at(
        &self,
        x: &State12,
        fe: &nalgebra::Vector3<f64>,
        window: &[State12],
        u_prev: &RotorInput,
    ) -> Result<CondensedQp> {
        if window.len() != self.cfg.horizon {
            return Err(Error::Dimension(format!(
                "reference window has {} entries, expected {}",
                window.len(),
                self.cfg.horizon
            )));
        }
        let (lb, ub) = self.cfg.decision_bounds(u_prev, &self.u_hover);
        condense_dense(
            &self.prediction,
            Some(&self.hessian),
            &self.cfg.q_diag(),
            &DVector::from_column_slice(&self.cfg.p),
            &DVector::from_column_slice(&self.cfg.r),
            &DVector::from_column_slice(x.0.as_slice()),
            &DVector::from_column_slice(fe.as_slice()),
            &stack_states(window),
            lb,
            ub,
        )
    }

    /// Solve for the full decided move sequence.
    pub fn solve(
        &mut self,
        x: &State12,
        fe: &nalgebra::Vector3<f64>,
        window: &[State12],
        u_prev: &RotorInput,
    ) -> Result<(Vec<RotorInput>, Diagnostics)> {
        let condensed = self.condense_at(x, fe, window, u_prev)?;
        let settings = QpSettings {
            tol: self.cfg.qp_tol,
            max_iter: self.cfg.qp_max_iter,
            ..Default::default()
        };
        let solution = solve_box_qp_with(&condensed.qp, &settings, self.warm.as_ref(), None);
        let moves = self.cfg.moves(&solution.z, &self.u_hover);
        self.warm = Some(shift_decisions(&solution.z, self.cfg.control_horizon));
        let diagnostics = Diagnostics {
            iterations: solution.iterations,
            residual: solution.kkt_residual,
            cost: condensed.cost(&solution.z),
            status: match solution.status {
                QpStatus::Optimal => StepStatus::Ok,
                QpStatus::MaxIterations => StepStatus::Degraded,
            },
        };
        Ok((moves, diagnostics))
    }
}


impl Controller for Lmpc {
    fn name(&self) -> &str {
        &self.name
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<(RotorInput, Diagnostics)> {
        let (moves, diagnostics) =
            self.solve(input.state, &input.disturbance.0, input.window, input.u_prev)?;
        Ok((moves[0], diagnostics))
    }
}
