//! Nonlinear MPC: multiple-shooting transcription of the tracking problem on the full model,
//! solved by Gauss-Newton SQP.
//!
//! Each SQP iteration linearizes the RK4 interval maps at the current shooting nodes,
//! eliminates the node-state steps through the linearized continuity constraints
//! (`Δs_{k+1} = A_k Δs_k + B_k Δu_k + d_k`), and solves the resulting box QP over the input
//! decision vector with [`crate::qp`]. A backtracking line search on
//! `cost + penalty · Σ‖d_k‖₁` globalizes the iteration.
//!
//! Stage cost: `dt Σ_{k=1..N} ‖s_k − r_k‖²_Q + ‖s_N − r_N‖²_P + dt Σ_{j<N_u} ‖u_j − u_h‖²_R`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    hover_input, Disturbance, Matrix12, Matrix12x4, QuadParams, RotorInput, State12, Vector12,
};
use crate::error::{Error, Result};
use crate::mpc::{shift_decisions, Controller, Diagnostics, MpcConfig, StepInput, StepStatus};
use crate::numerics::{jacobian, quad_step};
use crate::qp::{solve_box_qp_with, BoxQp, QpSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqpConfig {
    pub max_iter: usize,
    /// Converged once the accepted step's infinity norm is below this (and defects are small).
    pub step_tol: f64,
    pub kkt_tol: f64,
    pub defect_tol: f64,
    /// Weight of the ℓ₁ defect norm in the merit function.
    pub penalty: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Compute interval sensitivities on the rayon pool.
    pub parallel: bool,
}

impl Default for SqpConfig {
    fn default() -> Self {
        Self {
            max_iter: 30,
            step_tol: 1e-6,
            kkt_tol: 1e-6,
            defect_tol: 1e-6,
            penalty: 1e3,
            backtrack_factor: 0.5,
            max_backtracks: 20,
            parallel: true,
        }
    }
}

impl SqpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_tol", self.step_tol),
            ("kkt_tol", self.kkt_tol),
            ("defect_tol", self.defect_tol),
            ("penalty", self.penalty),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    field,
                    reason: format!("must be finite and positive, got {v}"),
                });
            }
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidParameter {
                field: "backtrack_factor",
                reason: "must lie in (0, 1)".into(),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter {
                field: "max_iter",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Interval end points and sensitivities of the RK4 step map.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalLinearization {
    /// `Φ(s_k, u_k)` for each interval.
    pub ends: Vec<Vector12>,
    /// `∂Φ/∂s` at `(s_k, u_k)`.
    pub a: Vec<Matrix12>,
    /// `∂Φ/∂u` at `(s_k, u_k)`.
    pub b: Vec<Matrix12x4>,
}

/// Node states of a single-shooting rollout plus its interval sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct Shooting {
    /// `x₀, s₁, …, s_N`.
    pub states: Vec<Vector12>,
    pub a: Vec<Matrix12>,
    pub b: Vec<Matrix12x4>,
}

fn step_map(params: &QuadParams, s: &Vector12, u: &RotorInput, fe: &Disturbance, dt: f64) -> Result<Vector12> {
    quad_step(&State12(*s), u, fe, params, dt).map(|x| x.0)
}

/// Linearize every interval `k` at `(nodes[k], inputs[k])`.
pub fn linearize_intervals(
    params: &QuadParams,
    nodes: &[Vector12],
    inputs: &[RotorInput],
    fe: &Disturbance,
    dt: f64,
    parallel: bool,
) -> Result<IntervalLinearization> {
    if nodes.len() != inputs.len() {
        return Err(Error::Dimension(format!(
            "{} nodes for {} inputs",
            nodes.len(),
            inputs.len()
        )));
    }
    let one = |k: usize| -> Result<(Vector12, Matrix12, Matrix12x4)> {
        let wrap = |e: Error| Error::Shooting {
            interval: k,
            source: Box::new(e),
        };
        let s = nodes[k];
        let u = inputs[k];
        let end = step_map(params, &s, &u, fe, dt).map_err(wrap)?;
        let a = jacobian(|x: &Vector12| step_map(params, x, &u, fe, dt), &s).map_err(wrap)?;
        let b = jacobian(
            |v: &nalgebra::Vector4<f64>| step_map(params, &s, &RotorInput(*v), fe, dt),
            &u.0,
        )
        .map_err(wrap)?;
        Ok((end, a, b))
    };
    let results: Vec<Result<(Vector12, Matrix12, Matrix12x4)>> = if parallel {
        (0..nodes.len()).into_par_iter().map(one).collect()
    } else {
        (0..nodes.len()).map(one).collect()
    };
    let mut out = IntervalLinearization {
        ends: Vec::with_capacity(nodes.len()),
        a: Vec::with_capacity(nodes.len()),
        b: Vec::with_capacity(nodes.len()),
    };
    for r in results {
        let (end, a, b) = r?;
        out.ends.push(end);
        out.a.push(a);
        out.b.push(b);
    }
    Ok(out)
}

/// Roll out `inputs` from `x0` with RK4 and linearize every interval along the rollout.
pub fn shoot(
    params: &QuadParams,
    x0: &State12,
    inputs: &[RotorInput],
    fe: &Disturbance,
    dt: f64,
) -> Result<Shooting> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.0);
    for (k, u) in inputs.iter().enumerate() {
        let next = step_map(params, &states[k], u, fe, dt).map_err(|e| Error::Shooting {
            interval: k,
            source: Box::new(e),
        })?;
        states.push(next);
    }
    let lin = linearize_intervals(params, &states[..inputs.len()], inputs, fe, dt, false)?;
    Ok(Shooting {
        states,
        a: lin.a,
        b: lin.b,
    })
}

/// Per-control-step record of the SQP run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SqpReport {
    pub iterations: usize,
    /// Merit value at the start and after each accepted iteration.
    pub merits: Vec<f64>,
    pub max_defect: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
struct WarmStart {
    z: DVector<f64>,
    /// `s₁, …, s_N`.
    nodes: Vec<Vector12>,
}

/// Receding-horizon nonlinear MPC.
#[derive(Debug, Clone)]
pub struct Nmpc {
    name: String,
    params: QuadParams,
    cfg: MpcConfig,
    sqp: SqpConfig,
    dt: f64,
    u_hover: RotorInput,
    warm: Option<WarmStart>,
    last_report: SqpReport,
}

struct Evaluation {
    cost: f64,
    l1_defect: f64,
    max_defect: f64,
}

impl Nmpc {
    pub fn new(params: &QuadParams, cfg: MpcConfig, sqp: SqpConfig, dt: f64) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        sqp.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                field: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        Ok(Self {
            name: "nmpc".into(),
            params: *params,
            cfg,
            sqp,
            dt,
            u_hover: hover_input(params),
            warm: None,
            last_report: SqpReport::default(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn last_report(&self) -> &SqpReport {
        &self.last_report
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn interval_inputs(&self, z: &DVector<f64>) -> Vec<RotorInput> {
        let moves = self.cfg.moves(z, &self.u_hover);
        (0..self.cfg.horizon)
            .map(|k| moves[self.cfg.move_for_stage(k)])
            .collect()
    }

    fn stage_weight(&self, k: usize, i: usize) -> f64 {
        // k is 1-based.
        let w = self.dt * self.cfg.q[i];
        if k == self.cfg.horizon {
            w + self.cfg.p[i]
        } else {
            w
        }
    }

    fn cost(&self, z: &DVector<f64>, nodes: &[Vector12], window: &[State12]) -> f64 {
        let mut cost = 0.0;
        for (k, (s, r)) in nodes.iter().zip(window).enumerate() {
            let e = s - r.0;
            for i in 0..12 {
                cost += self.stage_weight(k + 1, i) * e[i] * e[i];
            }
        }
        let dev = self.cfg.cumulative_map() * z;
        for (i, d) in dev.iter().enumerate() {
            cost += self.dt * self.cfg.r[i % 4] * d * d;
        }
        cost
    }

    fn evaluate(
        &self,
        x0: &State12,
        z: &DVector<f64>,
        nodes: &[Vector12],
        fe: &Disturbance,
        window: &[State12],
    ) -> Result<Evaluation> {
        let inputs = self.interval_inputs(z);
        let mut defects = Vec::with_capacity(nodes.len());
        for k in 0..nodes.len() {
            let start = if k == 0 { x0.0 } else { nodes[k - 1] };
            let end = step_map(&self.params, &start, &inputs[k], fe, self.dt).map_err(|e| Error::Shooting {
                interval: k,
                source: Box::new(e),
            })?;
            defects.push(end - nodes[k]);
        }
        let l1_defect = defects.iter().map(|d| d.lp_norm(1)).sum();
        let max_defect = defects.iter().map(|d| d.amax()).fold(0.0, f64::max);
        Ok(Evaluation {
            cost: self.cost(z, nodes, window),
            l1_defect,
            max_defect,
        })
    }

    fn initial_guess(&mut self, x0: &State12, fe: &Disturbance, lb: &DVector<f64>, ub: &DVector<f64>) -> Result<(DVector<f64>, Vec<Vector12>)> {
        let nz = self.cfg.num_decisions();
        match self.warm.take() {
            Some(w) => {
                let z = project(&shift_decisions(&w.z, self.cfg.control_horizon), lb, ub);
                let mut nodes: Vec<Vector12> = w.nodes[1..].to_vec();
                let last_input = *self.cfg.moves(&z, &self.u_hover).last().unwrap();
                let tail = *w.nodes.last().unwrap();
                nodes.push(step_map(&self.params, &tail, &last_input, fe, self.dt).unwrap_or(tail));
                Ok((z, nodes))
            }
            None => {
                let z = project(&DVector::zeros(nz), lb, ub);
                let nodes = self.rollout(x0, &z, fe)?;
                Ok((z, nodes))
            }
        }
    }

    /// Node states `s₁, …, s_N` obtained by simulating the inputs encoded in `z`.
    fn rollout(&self, x0: &State12, z: &DVector<f64>, fe: &Disturbance) -> Result<Vec<Vector12>> {
        let mut nodes = Vec::with_capacity(self.cfg.horizon);
        let mut s = x0.0;
        for (k, u) in self.interval_inputs(z).iter().enumerate() {
            s = step_map(&self.params, &s, u, fe, self.dt).map_err(|e| Error::Shooting {
                interval: k,
                source: Box::new(e),
            })?;
            nodes.push(s);
        }
        Ok(nodes)
    }

    /// Run the SQP for one control instant and return all decided moves.
    pub fn solve(
        &mut self,
        x0: &State12,
        fe: &Disturbance,
        window: &[State12],
        u_prev: &RotorInput,
    ) -> Result<(Vec<RotorInput>, Diagnostics)> {
        if window.len() != self.cfg.horizon {
            return Err(Error::Dimension(format!(
                "reference window has {} entries, expected {}",
                window.len(),
                self.cfg.horizon
            )));
        }
        let (lb, ub) = self.cfg.decision_bounds(u_prev, &self.u_hover);
        let (mut z, mut nodes) = match self.initial_guess(x0, fe, &lb, &ub) {
            Ok(guess) => guess,
            Err(e) => return Ok(self.fallback(&lb, &ub, e)),
        };
        match self.iterate(x0, fe, window, &lb, &ub, &mut z, &mut nodes) {
            Ok(report) => {
                let moves = self.cfg.moves(&z, &self.u_hover);
                let status = if report.converged {
                    StepStatus::Ok
                } else {
                    StepStatus::Degraded
                };
                let diagnostics = Diagnostics {
                    iterations: report.iterations,
                    residual: report.max_defect,
                    cost: *report.merits.last().unwrap_or(&0.0),
                    status,
                };
                self.last_report = report;
                self.warm = Some(WarmStart { z, nodes });
                Ok((moves, diagnostics))
            }
            Err(e) => Ok(self.fallback(&lb, &ub, e)),
        }
    }

    fn fallback(&mut self, lb: &DVector<f64>, ub: &DVector<f64>, e: Error) -> (Vec<RotorInput>, Diagnostics) {
        let z = match &self.warm {
            Some(w) => project(&shift_decisions(&w.z, self.cfg.control_horizon), lb, ub),
            None => project(&DVector::zeros(self.cfg.num_decisions()), lb, ub),
        };
        self.warm = None;
        self.last_report = SqpReport::default();
        (
            self.cfg.moves(&z, &self.u_hover),
            Diagnostics {
                status: StepStatus::Fault(e.to_string()),
                ..Default::default()
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn iterate(
        &self,
        x0: &State12,
        fe: &Disturbance,
        window: &[State12],
        lb: &DVector<f64>,
        ub: &DVector<f64>,
        z: &mut DVector<f64>,
        nodes: &mut Vec<Vector12>,
    ) -> Result<SqpReport> {
        let n = self.cfg.horizon;
        let nz = self.cfg.num_decisions();
        let cumulative = self.cfg.cumulative_map();
        let penalty = self.sqp.penalty;
        let qp_settings = QpSettings {
            tol: self.cfg.qp_tol,
            max_iter: self.cfg.qp_max_iter,
            ..Default::default()
        };

        let mut report = SqpReport::default();
        let mut current = self.evaluate(x0, z, nodes, fe, window)?;
        let mut merit = current.cost + penalty * current.l1_defect;
        report.merits.push(merit);

        for _ in 0..self.sqp.max_iter {
            report.iterations += 1;

            let inputs = self.interval_inputs(z);
            let mut starts = Vec::with_capacity(n);
            starts.push(x0.0);
            starts.extend_from_slice(&nodes[..n - 1]);
            let lin = linearize_intervals(&self.params, &starts, &inputs, fe, self.dt, self.sqp.parallel)?;

            // Forward elimination: Δs_k = offsets[k] + maps[k] Δz for k = 1..N.
            let mut offsets: Vec<Vector12> = Vec::with_capacity(n);
            let mut maps: Vec<DMatrix<f64>> = Vec::with_capacity(n);
            let mut off = Vector12::zeros();
            let mut map = DMatrix::<f64>::zeros(12, nz);
            for (k, node) in nodes.iter().enumerate() {
                let defect = lin.ends[k] - node;
                let a = DMatrix::from_column_slice(12, 12, lin.a[k].as_slice());
                let b = DMatrix::from_column_slice(12, 4, lin.b[k].as_slice());
                let select = cumulative.rows(4 * self.cfg.move_for_stage(k), 4);
                map = &a * &map + b * select;
                off = lin.a[k] * off + defect;
                offsets.push(off);
                maps.push(map.clone());
            }

            // Gauss-Newton model in Δz.
            let mut h = DMatrix::<f64>::zeros(nz, nz);
            let mut g = DVector::<f64>::zeros(nz);
            let mut model_constant = 0.0;
            for k in 0..n {
                let e = nodes[k] + offsets[k] - window[k].0;
                let w = DVector::from_iterator(12, (0..12).map(|i| self.stage_weight(k + 1, i)));
                let m = &maps[k];
                let wm = DMatrix::from_fn(12, nz, |i, j| w[i] * m[(i, j)]);
                h += m.transpose() * &wm * 2.0;
                let we = DVector::from_iterator(12, (0..12).map(|i| w[i] * e[i]));
                g += m.transpose() * &we * 2.0;
                model_constant += e.dot(&Vector12::from_iterator(we.iter().copied()));
            }
            let dev = &cumulative * &*z;
            let rbar = DVector::from_iterator(nz, (0..nz).map(|i| self.dt * self.cfg.r[i % 4]));
            let rt = DMatrix::from_fn(nz, nz, |i, j| rbar[i] * cumulative[(i, j)]);
            h += cumulative.transpose() * &rt * 2.0;
            g += cumulative.transpose() * dev.component_mul(&rbar) * 2.0;
            model_constant += dev.dot(&dev.component_mul(&rbar));
            let ht = h.transpose();
            h = (h + ht) * 0.5;

            let step_lb = lb - &*z;
            let step_ub = ub - &*z;
            let zero = DVector::zeros(nz);
            let kkt = (&zero - project(&(&zero - &g), &step_lb, &step_ub)).amax();
            report.kkt_residual = kkt;
            report.max_defect = current.max_defect;
            if kkt <= self.sqp.kkt_tol && current.max_defect <= self.sqp.defect_tol {
                report.converged = true;
                break;
            }

            let qp = BoxQp::new(h, g, step_lb, step_ub)?;
            let sol = solve_box_qp_with(&qp, &qp_settings, None, None);
            let dz = sol.z;
            let ds: Vec<Vector12> = (0..n)
                .map(|k| offsets[k] + Vector12::from_iterator((&maps[k] * &dz).iter().copied()))
                .collect();
            let predicted = merit - (qp.objective(&dz) + model_constant);

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=self.sqp.max_backtracks {
                let trial_z = &*z + &dz * alpha;
                let trial_nodes: Vec<Vector12> =
                    nodes.iter().zip(&ds).map(|(s, d)| s + d * alpha).collect();
                let eval = self.evaluate(x0, &trial_z, &trial_nodes, fe, window)?;
                let mut candidate = (trial_nodes, eval.cost + penalty * eval.l1_defect, eval);
                // Second-order correction: the linearized node update leaves O(‖Δ‖²) defects
                // that the penalty would otherwise punish into tiny steps.
                if candidate.2.max_defect > 0.0 {
                    if let Ok(rolled) = self.rollout(x0, &trial_z, fe) {
                        let eval = self.evaluate(x0, &trial_z, &rolled, fe, window)?;
                        let corrected_merit = eval.cost + penalty * eval.l1_defect;
                        if corrected_merit < candidate.1 {
                            candidate = (rolled, corrected_merit, eval);
                        }
                    }
                }
                let (trial_nodes, trial_merit, eval) = candidate;
                let required = 1e-4 * alpha * predicted.max(0.0);
                if trial_merit <= merit - required {
                    accepted = Some((trial_z, trial_nodes, eval, trial_merit));
                    break;
                }
                alpha *= self.sqp.backtrack_factor;
            }

            let Some((trial_z, trial_nodes, eval, trial_merit)) = accepted else {
                // No decrease along the GN direction: the iterate is as good as this model gets.
                report.converged = current.max_defect <= self.sqp.defect_tol
                    && dz.amax() <= self.sqp.step_tol.max(1e3 * self.cfg.qp_tol);
                break;
            };
            let step_norm = ds
                .iter()
                .map(|d| d.amax())
                .fold(dz.amax(), f64::max)
                * alpha;
            *z = trial_z;
            *nodes = trial_nodes;
            current = eval;
            merit = trial_merit;
            report.merits.push(merit);
            report.max_defect = current.max_defect;
            if step_norm <= self.sqp.step_tol && current.max_defect <= self.sqp.defect_tol {
                report.converged = true;
                break;
            }
        }
        Ok(report)
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


impl Controller for Nmpc {
    fn name(&self) -> &str {
        &self.name
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<(RotorInput, Diagnostics)> {
        let (moves, diagnostics) = self.solve(input.state, input.disturbance, input.window, input.u_prev)?;
        Ok((moves[0], diagnostics))
    }
}

/// Free-fall altitude after `t` seconds from rest, used as a shooting sanity reference.
pub fn free_fall_altitude(z0: f64, gravity: f64, t: f64) -> f64 {
    z0 - 0.5 * gravity * t * t
}
