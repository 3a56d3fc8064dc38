//! Closed-loop simulation: controller in the loop with the nonlinear model, zero-order hold,
//! one control update per integration step. Traces serialize to a fixed-column CSV.

use std::io::{Read, Write};

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{hover_input, wrap_angle, Disturbance, QuadParams, RotorInput, State12, Vector12};
use crate::error::{Error, Result};
use crate::mpc::{Controller, StepInput, StepStatus};
use crate::numerics::quad_step;
use crate::reference::{reference_window, AttitudeReference, ReferenceGenerator};

/// External force profile `α_T(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceProfile {
    #[default]
    None,
    Constant { force: [f64; 3] },
    /// `force` on the half-open window `[start, end)`, zero elsewhere.
    Pulse { force: [f64; 3], start: f64, end: f64 },
}

impl DisturbanceProfile {
    pub fn at(&self, t: f64) -> Disturbance {
        match *self {
            DisturbanceProfile::None => Disturbance::zero(),
            DisturbanceProfile::Constant { force } => Disturbance(Vector3::from(force)),
            DisturbanceProfile::Pulse { force, start, end } => {
                if t >= start && t < end {
                    Disturbance(Vector3::from(force))
                } else {
                    Disturbance::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: QuadParams,
    pub dt: f64,
    pub duration: f64,
    pub initial_state: State12,
    pub reference: ReferenceGenerator,
    pub attitude_reference: AttitudeReference,
    pub disturbance: DisturbanceProfile,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            params: QuadParams::default(),
            dt: 0.1,
            duration: 40.0,
            initial_state: State12::zeros(),
            reference: ReferenceGenerator::default(),
            attitude_reference: AttitudeReference::default(),
            disturbance: DisturbanceProfile::None,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                field: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::InvalidParameter {
                field: "duration",
                reason: format!("must be at least dt = {}, got {}", self.dt, self.duration),
            });
        }
        if !self.initial_state.is_valid() {
            return Err(Error::InvalidParameter {
                field: "initial_state",
                reason: "must be finite and away from the pitch singularity".into(),
            });
        }
        if let DisturbanceProfile::Pulse { start, end, .. } = self.disturbance {
            if !(start <= end && start >= 0.0 && end <= self.duration) {
                return Err(Error::InvalidParameter {
                    field: "disturbance",
                    reason: "pulse window must satisfy 0 ≤ start ≤ end ≤ duration".into(),
                });
            }
        }
        Ok(())
    }

    /// Number of integration steps; the trace has one more row.
    pub fn num_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: State12,
    pub input: RotorInput,
    /// `(x, y, z, ψ)` of the reference.
    pub reference: [f64; 4],
    /// Position errors and wrapped attitude errors, state minus reference.
    pub error: [f64; 6],
    pub diag_iters: usize,
    pub diag_residual: f64,
}

impl TraceRow {
    pub fn position_error_norm(&self) -> f64 {
        Vector3::new(self.error[0], self.error[1], self.error[2]).norm()
    }

    pub fn attitude_error_norm(&self) -> f64 {
        Vector3::new(self.error[3], self.error[4], self.error[5]).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub controller: String,
    pub rows: Vec<TraceRow>,
    /// Set when the run stopped early; the last row is the one at which it happened.
    pub fault: Option<String>,
}

/// State minus reference, with attitude differences wrapped to `(−π, π]`.
pub fn tracking_error(x: &State12, r: &State12) -> [f64; 6] {
    let d = x.0 - r.0;
    [d[0], d[1], d[2], wrap_angle(d[3]), wrap_angle(d[4]), wrap_angle(d[5])]
}

/// Run `controller` on `scenario`. Errors only on an invalid scenario; controller and
/// integration failures end the trace early with [`SimTrace::fault`] set.
pub fn run_closed_loop(scenario: &Scenario, controller: &mut dyn Controller) -> Result<SimTrace> {
    scenario.validate()?;
    let p = &scenario.params;
    let steps = scenario.num_steps();
    let horizon = controller.horizon();
    let mut trace = SimTrace {
        controller: controller.name().to_string(),
        rows: Vec::with_capacity(steps + 1),
        fault: None,
    };
    let mut x = scenario.initial_state;
    let mut u_prev = hover_input(p);

    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        let point = scenario.reference.at(t);
        let r = point.to_state(scenario.attitude_reference, p.gravity);
        let window = if horizon > 0 {
            reference_window(t, horizon, scenario.dt, &scenario.reference, scenario.attitude_reference, p.gravity)
        } else {
            Vec::new()
        };
        let fe = scenario.disturbance.at(t);
        let mut row = TraceRow {
            t,
            state: x,
            input: u_prev,
            reference: [point.position[0], point.position[1], point.position[2], point.yaw],
            error: tracking_error(&x, &r),
            diag_iters: 0,
            diag_residual: f64::NAN,
        };
        let step = controller.step(&StepInput {
            t,
            state: &x,
            disturbance: &fe,
            window: &window,
            point: &point,
            u_prev: &u_prev,
        });
        let u = match step {
            Ok((u, diag)) => {
                row.input = u;
                row.diag_iters = diag.iterations;
                row.diag_residual = diag.residual;
                if let StepStatus::Fault(msg) = diag.status {
                    trace.rows.push(row);
                    trace.fault = Some(format!("t = {t}: {msg}"));
                    return Ok(trace);
                }
                u
            }
            Err(e) => {
                trace.rows.push(row);
                trace.fault = Some(format!("t = {t}: {e}"));
                return Ok(trace);
            }
        };
        trace.rows.push(row);
        if k == steps {
            break;
        }
        match quad_step(&x, &u, &fe, p, scenario.dt) {
            Ok(next) if next.is_valid() => x = next,
            Ok(_) => {
                trace.fault = Some(format!("t = {t}: state left the valid region"));
                return Ok(trace);
            }
            Err(e) => {
                trace.fault = Some(format!("t = {t}: {e}"));
                return Ok(trace);
            }
        }
        u_prev = u;
    }
    Ok(trace)
}

pub const CSV_HEADER: [&str; 29] = [
    "t", "x", "y", "z", "phi", "theta", "psi", "vx", "vy", "vz", "p", "q", "r", "u1", "u2", "u3", "u4",
    "ref_x", "ref_y", "ref_z", "ref_psi", "err_x", "err_y", "err_z", "err_phi", "err_theta", "err_psi",
    "diag_iters", "diag_residual",
];

fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Write the trace with nine significant digits per number.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for row in &trace.rows {
        let mut rec: Vec<String> = Vec::with_capacity(CSV_HEADER.len());
        rec.push(fmt(row.t));
        rec.extend(row.state.0.iter().map(|v| fmt(*v)));
        rec.extend(row.input.0.iter().map(|v| fmt(*v)));
        rec.extend(row.reference.iter().map(|v| fmt(*v)));
        rec.extend(row.error.iter().map(|v| fmt(*v)));
        rec.push(row.diag_iters.to_string());
        rec.push(fmt(row.diag_residual));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a trace written by [`write_trace_csv`].
pub fn read_trace_csv<R: Read>(input: R) -> Result<SimTrace> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Io("trace CSV header does not match the expected columns".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("row {}, column {}: {e}", line + 1, CSV_HEADER[i])))
        };
        let mut v = [0.0; 29];
        for (i, slot) in v.iter_mut().enumerate().take(27) {
            *slot = num(i)?;
        }
        let diag_iters = rec[27]
            .parse::<usize>()
            .map_err(|e| Error::Io(format!("row {}, column diag_iters: {e}", line + 1)))?;
        rows.push(TraceRow {
            t: v[0],
            state: State12(Vector12::from_column_slice(&v[1..13])),
            input: RotorInput(Vector4::from_column_slice(&v[13..17])),
            reference: [v[17], v[18], v[19], v[20]],
            error: [v[21], v[22], v[23], v[24], v[25], v[26]],
            diag_iters,
            diag_residual: num(28)?,
        });
    }
    Ok(SimTrace {
        controller: String::new(),
        rows,
        fault: None,
    })
}
