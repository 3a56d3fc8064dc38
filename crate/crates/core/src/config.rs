//! JSON configuration: physical parameters, scenario, controller list and output options.
//!
//! Every section and field has a default, so `{}` is a complete config reproducing the standard
//! helix benchmark. Unknown keys are rejected; errors name the offending key path.

use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineGains, BscGains, PdGains, SmcGains};
use crate::dynamics::{calibrated_thrust_coeff, QuadParams, State12, Vector12};
use crate::error::{Error, Result};
use crate::lmpc::Lmpc;
use crate::mpc::{Controller, MpcConfig};
use crate::nmpc::{Nmpc, SqpConfig};
use crate::reference::{AttitudeReference, ReferenceGenerator};
use crate::sim::{DisturbanceProfile, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub mass: f64,
    pub gravity: f64,
    pub inertia_xx: f64,
    pub inertia_yy: f64,
    pub inertia_zz: f64,
    /// Omitted: calibrated so that hover needs 4.9 per rotor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thrust_coeff: Option<f64>,
    pub drag_coeff: f64,
    pub arm_length: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = QuadParams::default();
        Self {
            mass: p.mass,
            gravity: p.gravity,
            inertia_xx: p.inertia_xx,
            inertia_yy: p.inertia_yy,
            inertia_zz: p.inertia_zz,
            thrust_coeff: None,
            drag_coeff: p.drag_coeff,
            arm_length: p.arm_length,
        }
    }
}

impl ParamsConfig {
    pub fn to_params(&self) -> QuadParams {
        QuadParams {
            mass: self.mass,
            gravity: self.gravity,
            inertia_xx: self.inertia_xx,
            inertia_yy: self.inertia_yy,
            inertia_zz: self.inertia_zz,
            thrust_coeff: self
                .thrust_coeff
                .unwrap_or_else(|| calibrated_thrust_coeff(self.mass, self.gravity)),
            drag_coeff: self.drag_coeff,
            arm_length: self.arm_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub duration: f64,
    /// `[x, y, z, φ, θ, ψ, ẋ, ẏ, ż, φ̇, θ̇, ψ̇]`.
    pub initial_state: [f64; 12],
    pub reference: ReferenceGenerator,
    pub attitude_reference: AttitudeReference,
    pub disturbance: DisturbanceProfile,
    /// Rows before this time are left out of the RMSE.
    pub transient_cut: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            duration: 40.0,
            initial_state: [0.0; 12],
            reference: ReferenceGenerator::default(),
            attitude_reference: AttitudeReference::default(),
            disturbance: DisturbanceProfile::None,
            transient_cut: 0.0,
        }
    }
}

fn default_u_min() -> [f64; 4] {
    [0.0; 4]
}

fn default_u_max() -> [f64; 4] {
    [10.0; 4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerConfig {
    Lmpc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        mpc: MpcConfig,
    },
    Nmpc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        mpc: MpcConfig,
        #[serde(default)]
        sqp: SqpConfig,
    },
    Pd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        gains: PdGains,
        #[serde(default = "default_u_min")]
        u_min: [f64; 4],
        #[serde(default = "default_u_max")]
        u_max: [f64; 4],
    },
    Smc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        gains: SmcGains,
        #[serde(default = "default_u_min")]
        u_min: [f64; 4],
        #[serde(default = "default_u_max")]
        u_max: [f64; 4],
    },
    Bsc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        gains: BscGains,
        #[serde(default = "default_u_min")]
        u_min: [f64; 4],
        #[serde(default = "default_u_max")]
        u_max: [f64; 4],
    },
}

impl ControllerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ControllerConfig::Lmpc { .. } => "lmpc",
            ControllerConfig::Nmpc { .. } => "nmpc",
            ControllerConfig::Pd { .. } => "pd",
            ControllerConfig::Smc { .. } => "smc",
            ControllerConfig::Bsc { .. } => "bsc",
        }
    }

    /// Configured name, or the kind when none is given.
    pub fn name(&self) -> &str {
        let name = match self {
            ControllerConfig::Lmpc { name, .. }
            | ControllerConfig::Nmpc { name, .. }
            | ControllerConfig::Pd { name, .. }
            | ControllerConfig::Smc { name, .. }
            | ControllerConfig::Bsc { name, .. } => name,
        };
        name.as_deref().unwrap_or(self.kind())
    }

    pub fn build(&self, params: &QuadParams, dt: f64) -> Result<Box<dyn Controller>> {
        let name = self.name().to_string();
        Ok(match self {
            ControllerConfig::Lmpc { mpc, .. } => Box::new(Lmpc::new(params, mpc.clone(), dt)?.with_name(name)),
            ControllerConfig::Nmpc { mpc, sqp, .. } => {
                Box::new(Nmpc::new(params, mpc.clone(), sqp.clone(), dt)?.with_name(name))
            }
            ControllerConfig::Pd { gains, u_min, u_max, .. } => {
                Box::new(Baseline::new(BaselineGains::Pd(*gains), params, *u_min, *u_max)?.with_name(name))
            }
            ControllerConfig::Smc { gains, u_min, u_max, .. } => {
                Box::new(Baseline::new(BaselineGains::Smc(*gains), params, *u_min, *u_max)?.with_name(name))
            }
            ControllerConfig::Bsc { gains, u_min, u_max, .. } => {
                Box::new(Baseline::new(BaselineGains::Bsc(*gains), params, *u_min, *u_max)?.with_name(name))
            }
        })
    }

    fn validate(&self) -> Result<()> {
        match self {
            ControllerConfig::Lmpc { mpc, .. } => mpc.validate().map_err(|e| prefixed("mpc", e)),
            ControllerConfig::Nmpc { mpc, sqp, .. } => {
                mpc.validate().map_err(|e| prefixed("mpc", e))?;
                sqp.validate().map_err(|e| prefixed("sqp", e))
            }
            ControllerConfig::Pd { gains, u_min, u_max, .. } => validate_baseline(BaselineGains::Pd(*gains), u_min, u_max),
            ControllerConfig::Smc { gains, u_min, u_max, .. } => validate_baseline(BaselineGains::Smc(*gains), u_min, u_max),
            ControllerConfig::Bsc { gains, u_min, u_max, .. } => validate_baseline(BaselineGains::Bsc(*gains), u_min, u_max),
        }
    }
}

fn validate_baseline(gains: BaselineGains, u_min: &[f64; 4], u_max: &[f64; 4]) -> Result<()> {
    gains.validate().map_err(|e| prefixed("gains", e))?;
    if (0..4).any(|i| !(u_min[i].is_finite() && u_max[i].is_finite() && u_min[i] <= u_max[i])) {
        return Err(Error::Config("u_max: must be finite and at least u_min".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub params: ParamsConfig,
    pub scenario: ScenarioConfig,
    pub controllers: Vec<ControllerConfig>,
    pub output: OutputConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let mut controllers = vec![
            ControllerConfig::Pd {
                name: None,
                gains: PdGains::default(),
                u_min: default_u_min(),
                u_max: default_u_max(),
            },
            ControllerConfig::Smc {
                name: None,
                gains: SmcGains::default(),
                u_min: default_u_min(),
                u_max: default_u_max(),
            },
            ControllerConfig::Bsc {
                name: None,
                gains: BscGains::default(),
                u_min: default_u_min(),
                u_max: default_u_max(),
            },
        ];
        controllers.push(ControllerConfig::Lmpc {
            name: None,
            mpc: MpcConfig::default(),
        });
        controllers.push(ControllerConfig::Nmpc {
            name: None,
            mpc: MpcConfig::default(),
            sqp: SqpConfig::default(),
        });
        Self {
            params: ParamsConfig::default(),
            scenario: ScenarioConfig::default(),
            controllers,
            output: OutputConfig::default(),
        }
    }
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::Config(format!("{prefix}.{field}: {reason}")),
        Error::Config(msg) => Error::Config(format!("{prefix}.{msg}")),
        other => Error::Config(format!("{prefix}: {other}")),
    }
}

impl ConfigFile {
    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::Config(inner.to_string())
            } else {
                Error::Config(format!("{path}: {inner}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.to_params().validate().map_err(|e| prefixed("params", e))?;
        self.scenario().validate().map_err(|e| prefixed("scenario", e))?;
        let cut = self.scenario.transient_cut;
        if !(cut.is_finite() && cut >= 0.0 && cut < self.scenario.duration) {
            return Err(Error::Config(
                "scenario.transient_cut: must lie in [0, duration)".into(),
            ));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("controllers: at least one controller is required".into()));
        }
        for (i, c) in self.controllers.iter().enumerate() {
            c.validate().map_err(|e| prefixed(&format!("controllers[{i}]"), e))?;
            if self.controllers[..i].iter().any(|o| o.name() == c.name()) {
                return Err(Error::Config(format!(
                    "controllers[{i}].name: duplicate controller name \"{}\"",
                    c.name()
                )));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            params: self.params.to_params(),
            dt: self.scenario.dt,
            duration: self.scenario.duration,
            initial_state: State12(Vector12::from_column_slice(&self.scenario.initial_state)),
            reference: self.scenario.reference,
            attitude_reference: self.scenario.attitude_reference,
            disturbance: self.scenario.disturbance,
        }
    }

    pub fn controller(&self, name: &str) -> Option<&ControllerConfig> {
        self.controllers.iter().find(|c| c.name() == name)
    }
}
