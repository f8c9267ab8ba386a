//! Scenario files.
//!
//! A scenario is a TOML document tagged with `format = "quatmpc-scenario/1"`.
//! Every table except `robot` is optional:
//!
//! ```toml
//! format = "quatmpc-scenario/1"
//! name = "stand"
//! duration = 2.0           # s
//! physics_dt = 0.001       # s
//! mpc_rate = 100.0         # Hz
//! seed = 0
//! controller = "quaternion" # or "euler"
//! anchor = "initial"       # or "landing_target"
//!
//! [robot]
//! preset = "quadruped"     # quadruped | reaction_wheel_quadruped | humanoid
//! # mass = 12.0, max_wheel_torque = 4.0 override the preset
//!
//! [environment]
//! type = "flat"            # flat | walls | airborne
//!
//! [initial]
//! position = [0.0, 0.0, 0.28]
//! rpy_deg = [0.0, 0.0, 0.0]
//!
//! [[commands]]
//! kind = "sinusoid"        # or "constant"
//! angular = [0.52, 0.52, 0.52]
//! period = 4.25
//!
//! [[disturbances]]
//! time = 3.0
//! impulse = [0.0, 3.0, 0.0]  # N s, World frame
//!
//! [mpc]                    # horizon, dt, weights, constraints, solver, gait, ...
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::dynamics::{ModelVariant, RobotModel, SrbState};
use crate::error::ConfigError;
use crate::mpc::{ControllerKind, MpcConfig, VelocityCommand};
use crate::quat::Quaternion;

pub const SCENARIO_FORMAT: &str = "quatmpc-scenario/1";

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub preset: Option<String>,
    /// Full inline model; takes precedence over `preset`.
    pub model: Option<RobotModel>,
    pub mass: Option<f64>,
    pub max_wheel_torque: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    /// CoM position; defaults to the standing height above the origin.
    pub position: Option<[f64; 3]>,
    pub rpy_deg: [f64; 3],
    /// `[s, x, y, z]`; overrides `rpy_deg`.
    pub quaternion: Option<[f64; 4]>,
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    #[default]
    Constant,
    /// `value · sin(2π(t - start)/period + phase)`
    Sinusoid,
}

/// One term of the command script. Active terms are summed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandSegment {
    pub kind: CommandKind,
    pub start: f64,
    pub end: f64,
    pub linear: [f64; 3],
    pub angular: [f64; 3],
    pub period: f64,
    pub phase: f64,
}

impl Default for CommandSegment {
    fn default() -> Self {
        CommandSegment {
            kind: CommandKind::Constant,
            start: 0.0,
            end: f64::INFINITY,
            linear: [0.0; 3],
            angular: [0.0; 3],
            period: 1.0,
            phase: 0.0,
        }
    }
}

impl CommandSegment {
    fn gain(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end {
            return 0.0;
        }
        match self.kind {
            CommandKind::Constant => 1.0,
            CommandKind::Sinusoid => (2.0 * PI * (t - self.start) / self.period + self.phase).sin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub time: f64,
    /// N s, World frame.
    pub impulse: [f64; 3],
    /// Application point in the Body frame.
    #[serde(default)]
    pub point: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FailureLimits {
    /// Geodesic distance from the desired attitude that counts as a fall.
    pub max_attitude_error_deg: f64,
    /// CoM distance from the desired position that counts as a fall, m.
    pub max_position_error: f64,
    /// Consecutive degraded MPC ticks tolerated.
    pub max_consecutive_degraded: usize,
}

impl Default for FailureLimits {
    fn default() -> Self {
        FailureLimits {
            max_attitude_error_deg: 45.0,
            max_position_error: 0.5,
            max_consecutive_degraded: 10,
        }
    }
}

/// What the controller's desired pose starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// The initial state, at the standing height when one is configured.
    #[default]
    Initial,
    /// The closest yaw-only attitude to the initial one.
    LandingTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format: String,
    pub name: String,
    pub robot: RobotSpec,
    #[serde(default)]
    pub environment: Environment,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default)]
    pub anchor: AnchorMode,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub commands: Vec<CommandSegment>,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    pub duration: f64,
    #[serde(default = "default_physics_dt")]
    pub physics_dt: f64,
    #[serde(default = "default_mpc_rate")]
    pub mpc_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Surface friction in the plant; defaults to the controller's `mu`.
    #[serde(default)]
    pub friction: Option<f64>,
    #[serde(default)]
    pub failure: FailureLimits,
}

fn default_controller() -> ControllerKind {
    ControllerKind::Quaternion
}

fn default_physics_dt() -> f64 {
    1e-3
}

fn default_mpc_rate() -> f64 {
    100.0
}

impl Scenario {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn robot_model(&self) -> Result<RobotModel, ConfigError> {
        let mut model = match (&self.robot.model, &self.robot.preset) {
            (Some(m), _) => m.clone(),
            (None, Some(p)) => RobotModel::preset(p)
                .ok_or_else(|| ConfigError::invalid("robot.preset", format!("unknown preset `{p}`")))?,
            (None, None) => return Err(ConfigError::invalid("robot", "needs `preset` or `model`")),
        };
        if let Some(m) = self.robot.mass {
            model.mass = m;
        }
        if let Some(t) = self.robot.max_wheel_torque {
            model.max_wheel_torque = t;
        }
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format != SCENARIO_FORMAT {
            return Err(ConfigError::invalid(
                "format",
                format!("expected `{SCENARIO_FORMAT}`, got `{}`", self.format),
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(ConfigError::invalid("duration", "must be positive"));
        }
        if !(self.physics_dt > 0.0) {
            return Err(ConfigError::invalid("physics_dt", "must be positive"));
        }
        if !(self.mpc_rate > 0.0) {
            return Err(ConfigError::invalid("mpc_rate", "must be positive"));
        }
        let period = 1.0 / self.mpc_rate;
        if self.physics_dt > period + 1e-12 {
            return Err(ConfigError::invalid("physics_dt", "must not exceed the MPC period"));
        }
        let sub = period / self.physics_dt;
        if (sub - sub.round()).abs() > 1e-6 {
            return Err(ConfigError::invalid(
                "mpc_rate",
                "MPC period must be a whole number of physics steps",
            ));
        }
        if let Some(mu) = self.friction {
            if !(mu > 0.0) {
                return Err(ConfigError::invalid("friction", "must be positive"));
            }
        }
        for (i, c) in self.commands.iter().enumerate() {
            if c.kind == CommandKind::Sinusoid && !(c.period > 0.0) {
                return Err(ConfigError::invalid(
                    format!("commands[{i}].period"),
                    "must be positive",
                ));
            }
            if !(c.end > c.start) {
                return Err(ConfigError::invalid(
                    format!("commands[{i}].end"),
                    "must be after start",
                ));
            }
        }
        if let Some(q) = self.initial.quaternion {
            if Vector4::from(q).norm() < 1e-9 {
                return Err(ConfigError::invalid("initial.quaternion", "must be nonzero"));
            }
        }
        let model = self.robot_model()?;
        self.mpc.validate(&model)?;
        if model.variant == ModelVariant::FootForce && matches!(self.environment, Environment::Airborne { .. }) {
            return Err(ConfigError::invalid(
                "environment",
                "foot-force robots need surfaces to push on",
            ));
        }
        Ok(())
    }

    pub fn physics_steps(&self) -> usize {
        (self.duration / self.physics_dt).round() as usize
    }

    pub fn substeps(&self) -> usize {
        (1.0 / (self.mpc_rate * self.physics_dt)).round() as usize
    }

    pub fn command_at(&self, t: f64) -> VelocityCommand {
        let mut lin = Vector3::zeros();
        let mut ang = Vector3::zeros();
        for c in &self.commands {
            let g = c.gain(t);
            if g != 0.0 {
                lin += g * Vector3::from(c.linear);
                ang += g * Vector3::from(c.angular);
            }
        }
        VelocityCommand {
            linear: lin.into(),
            angular: ang.into(),
        }
    }

    pub fn initial_attitude(&self) -> Quaternion {
        match self.initial.quaternion {
            Some(q) => Quaternion::from(q),
            None => {
                let [r, p, y] = self.initial.rpy_deg.map(f64::to_radians);
                Quaternion::from_euler_zyx(r, p, y)
            }
        }
    }

    pub fn initial_state(&self, model: &RobotModel) -> SrbState {
        let ground = self.environment.ground_z().unwrap_or(0.0);
        let r = match self.initial.position {
            Some(p) => Vector3::from(p),
            None => Vector3::new(0.0, 0.0, ground + model.nominal_height),
        };
        SrbState {
            r,
            q: self.initial_attitude(),
            v: Vector3::from(self.initial.velocity),
            omega: Vector3::from(self.initial.angular_velocity),
        }
    }
}
