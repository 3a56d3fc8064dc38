//! Classical cascaded trackers used as comparison rows: PD, sliding-mode and backstepping.
//!
//! All three share the outer position loop: a PD law on position produces a desired
//! acceleration, the collective thrust follows from the vertical component, and roll/pitch
//! set-points come from the small-angle inversion of the translational dynamics. The inner
//! loop differs per controller. `(T, τ)` is turned into rotor inputs by inverting the
//! allocation matrix and clamping to the input box.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    allocation_inverse, coriolis_matrix, inertia_jacobian, wrap_angle, QuadParams, RotorInput, State12,
    SINGULARITY_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::mpc::{Controller, Diagnostics, StepInput, StepStatus};
use crate::reference::RefPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Pd,
    Smc,
    Bsc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositionGains {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
    /// Roll/pitch set-points are clamped to `±max_tilt` rad.
    pub max_tilt: f64,
}

impl Default for PositionGains {
    fn default() -> Self {
        Self {
            kp: [1.0, 1.0, 2.0],
            kd: [1.6, 1.6, 2.4],
            max_tilt: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub position: PositionGains,
    pub kp: [f64; 3],
    pub kd: [f64; 3],
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            position: PositionGains::default(),
            kp: [16.0; 3],
            kd: [7.2; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcGains {
    pub position: PositionGains,
    /// Sliding-surface slopes `s = η̇_err + λ e`.
    pub lambda: [f64; 3],
    pub switching: [f64; 3],
    pub boundary_layer: f64,
}

impl Default for SmcGains {
    fn default() -> Self {
        Self {
            position: PositionGains::default(),
            lambda: [4.0; 3],
            switching: [0.8; 3],
            boundary_layer: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BscGains {
    pub position: PositionGains,
    pub c1: [f64; 3],
    pub c2: [f64; 3],
}

impl Default for BscGains {
    fn default() -> Self {
        Self {
            position: PositionGains::default(),
            c1: [4.0; 3],
            c2: [4.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineGains {
    Pd(PdGains),
    Smc(SmcGains),
    Bsc(BscGains),
}

impl BaselineGains {
    pub fn preset(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::Pd => BaselineGains::Pd(PdGains::default()),
            BaselineKind::Smc => BaselineGains::Smc(SmcGains::default()),
            BaselineKind::Bsc => BaselineGains::Bsc(BscGains::default()),
        }
    }

    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineGains::Pd(_) => BaselineKind::Pd,
            BaselineGains::Smc(_) => BaselineKind::Smc,
            BaselineGains::Bsc(_) => BaselineKind::Bsc,
        }
    }

    fn position(&self) -> &PositionGains {
        match self {
            BaselineGains::Pd(g) => &g.position,
            BaselineGains::Smc(g) => &g.position,
            BaselineGains::Bsc(g) => &g.position,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = self.position();
        check_positive("position.kp", &pos.kp)?;
        check_positive("position.kd", &pos.kd)?;
        if !(pos.max_tilt > 0.0 && pos.max_tilt < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter {
                field: "position.max_tilt",
                reason: "must lie in (0, π/2)".into(),
            });
        }
        match self {
            BaselineGains::Pd(g) => {
                check_positive("kp", &g.kp)?;
                check_positive("kd", &g.kd)
            }
            BaselineGains::Smc(g) => {
                check_positive("lambda", &g.lambda)?;
                check_positive("switching", &g.switching)?;
                check_positive("boundary_layer", &[g.boundary_layer])
            }
            BaselineGains::Bsc(g) => {
                check_positive("c1", &g.c1)?;
                check_positive("c2", &g.c2)
            }
        }
    }
}

fn check_positive(field: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            field,
            reason: "gains must be finite and positive".into(),
        })
    }
}

/// Outer loop: collective thrust and `(φ_d, θ_d, ψ_d)`.
pub fn position_loop(gains: &PositionGains, x: &State12, r: &RefPoint, params: &QuadParams) -> Result<(f64, Vector3<f64>)> {
    let ep = r.position - x.position();
    let ev = r.velocity - x.velocity();
    let a = r.acceleration
        + Vector3::from_fn(|i, _| gains.kp[i] * ep[i] + gains.kd[i] * ev[i]);
    let eta = x.attitude();
    let tilt = eta[0].cos() * eta[1].cos();
    if tilt.abs() <= SINGULARITY_TOLERANCE {
        return Err(Error::SingularAttitude { cos_theta: eta[1].cos() });
    }
    let thrust = params.mass * (params.gravity + a[2]) / tilt;
    let (s, c) = eta[2].sin_cos();
    let lim = gains.max_tilt;
    let theta_d = ((a[0] * c + a[1] * s) / params.gravity).clamp(-lim, lim);
    let phi_d = ((a[0] * s - a[1] * c) / params.gravity).clamp(-lim, lim);
    Ok((thrust, Vector3::new(phi_d, theta_d, r.yaw)))
}

fn saturate(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Inner loop: body torques for attitude set-point `eta_d` (set-point rates taken as zero).
pub fn attitude_loop(gains: &BaselineGains, x: &State12, eta_d: &Vector3<f64>, params: &QuadParams) -> Vector3<f64> {
    let eta = x.attitude();
    let rates = x.rates();
    let e = Vector3::new(
        eta_d[0] - eta[0],
        eta_d[1] - eta[1],
        wrap_angle(eta_d[2] - eta[2]),
    );
    let computed_torque = |acc: Vector3<f64>| {
        inertia_jacobian(&eta, params) * acc + coriolis_matrix(&eta, &rates, params) * rates
    };
    match gains {
        BaselineGains::Pd(g) => {
            let inertia = params.inertia();
            inertia * Vector3::from_fn(|i, _| g.kp[i] * e[i] - g.kd[i] * rates[i])
        }
        BaselineGains::Smc(g) => {
            // s = ė + λe with ė = −η̇; η̈ = −λη̇ + K sat(s/Φ) drives s to the boundary layer.
            let acc = Vector3::from_fn(|i, _| {
                let s = -rates[i] + g.lambda[i] * e[i];
                -g.lambda[i] * rates[i] + g.switching[i] * saturate(s / g.boundary_layer)
            });
            computed_torque(acc)
        }
        BaselineGains::Bsc(g) => {
            // z₁ = e, virtual rate c₁z₁, z₂ = η̇ − c₁z₁; η̈ = −c₁η̇ + z₁ − c₂z₂.
            let acc = Vector3::from_fn(|i, _| {
                let z2 = rates[i] - g.c1[i] * e[i];
                -g.c1[i] * rates[i] + e[i] - g.c2[i] * z2
            });
            computed_torque(acc)
        }
    }
}

/// Unclamped rotor inputs of one baseline step.
pub fn baseline_command(gains: &BaselineGains, x: &State12, r: &RefPoint, params: &QuadParams) -> Result<RotorInput> {
    let (thrust, eta_d) = position_loop(gains.position(), x, r, params)?;
    let torque = attitude_loop(gains, x, &eta_d, params);
    Ok(allocation_inverse(thrust, &torque, params))
}

/// Clamp `u` into `[lo, hi]`; returns the clamped input and the largest correction applied.
pub fn clamp_input(u: &RotorInput, lo: &[f64; 4], hi: &[f64; 4]) -> (RotorInput, f64) {
    let mut out = *u;
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        out.0[i] = u.0[i].clamp(lo[i], hi[i]);
        worst = worst.max((out.0[i] - u.0[i]).abs());
    }
    (out, worst)
}

#[derive(Debug, Clone)]
pub struct Baseline {
    name: String,
    gains: BaselineGains,
    params: QuadParams,
    u_min: [f64; 4],
    u_max: [f64; 4],
}

impl Baseline {
    pub fn new(gains: BaselineGains, params: &QuadParams, u_min: [f64; 4], u_max: [f64; 4]) -> Result<Self> {
        gains.validate()?;
        params.validate()?;
        let name = match gains.kind() {
            BaselineKind::Pd => "pd",
            BaselineKind::Smc => "smc",
            BaselineKind::Bsc => "bsc",
        };
        Ok(Self {
            name: name.into(),
            gains,
            params: *params,
            u_min,
            u_max,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn gains(&self) -> &BaselineGains {
        &self.gains
    }
}

impl Controller for Baseline {
    fn name(&self) -> &str {
        &self.name
    }

    fn step(&mut self, input: &StepInput<'_>) -> Result<(RotorInput, Diagnostics)> {
        let raw = baseline_command(&self.gains, input.state, input.point, &self.params)?;
        let (u, clamped) = clamp_input(&raw, &self.u_min, &self.u_max);
        Ok((
            u,
            Diagnostics {
                iterations: 0,
                residual: clamped,
                cost: 0.0,
                status: StepStatus::Ok,
            },
        ))
    }
}
