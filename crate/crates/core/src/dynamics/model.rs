//! Robot descriptions and their configuration-file schema.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// How the controller acts on the rigid body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Ground-reaction forces at `n_c` contact points, World frame.
    FootForce,
    /// Roll and pitch torques from two reaction wheels, Body frame.
    ReactionWheel,
}

/// One contact point: a body-fixed hip anchor plus a horizontal foot offset
/// applied in the yaw-only Relative frame when placing footholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub name: String,
    /// Hip anchor in the Body frame, relative to the CoM.
    pub hip: [f64; 3],
    /// Horizontal offset of the foot from the hip projection (Relative frame).
    #[serde(default)]
    pub foot_offset: [f64; 2],
}

impl ContactPoint {
    pub fn hip(&self) -> Vector3<f64> {
        Vector3::from(self.hip)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub name: String,
    pub variant: ModelVariant,
    /// kg
    pub mass: f64,
    /// Body-frame inertia about the CoM, kg m^2, row major.
    pub inertia: [[f64; 3]; 3],
    /// Gravity in the World frame; dynamics use `v̇ = ΣF/m - g`.
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub contacts: Vec<ContactPoint>,
    /// Standing CoM height above the support surface, m.
    #[serde(default = "default_height")]
    pub nominal_height: f64,
    /// Largest hip-to-foot distance at which a pinned foot still transmits force.
    #[serde(default = "default_reach")]
    pub leg_reach: f64,
    /// Collision box half extents in the Body frame.
    #[serde(default = "default_box")]
    pub body_half_extents: [f64; 3],
    /// Upper bound on the normal force per contact, N.
    #[serde(default = "default_max_force")]
    pub max_normal_force: f64,
    /// Per-wheel torque bound, N m (reaction-wheel variant).
    #[serde(default = "default_wheel_torque")]
    pub max_wheel_torque: f64,
    /// Leg length measured from the hip (used to place feet of airborne models).
    #[serde(default = "default_height")]
    pub leg_length: f64,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, 9.81]
}
fn default_height() -> f64 {
    0.28
}
fn default_reach() -> f64 {
    0.42
}
fn default_box() -> [f64; 3] {
    [0.25, 0.1, 0.06]
}
fn default_max_force() -> f64 {
    250.0
}
fn default_wheel_torque() -> f64 {
    4.0
}

impl RobotModel {
    /// Quadruped sized like a Unitree Go1, foot order FL, FR, RL, RR.
    pub fn quadruped() -> Self {
        let hips = [
            ("FL", 0.19, 0.13),
            ("FR", 0.19, -0.13),
            ("RL", -0.19, 0.13),
            ("RR", -0.19, -0.13),
        ];
        RobotModel {
            name: "quadruped".into(),
            variant: ModelVariant::FootForce,
            mass: 12.0,
            inertia: [[0.06, 0.0, 0.0], [0.0, 0.16, 0.0], [0.0, 0.0, 0.18]],
            gravity: default_gravity(),
            contacts: hips
                .iter()
                .map(|&(n, x, y)| ContactPoint {
                    name: n.into(),
                    hip: [x, y, 0.0],
                    foot_offset: [0.0, 0.0],
                })
                .collect(),
            nominal_height: 0.28,
            leg_reach: 0.42,
            body_half_extents: default_box(),
            max_normal_force: 2.0 * 12.0 * 9.81,
            max_wheel_torque: default_wheel_torque(),
            leg_length: 0.3,
        }
    }

    /// The quadruped with roll and pitch reaction wheels; controls are wheel torques.
    pub fn reaction_wheel_quadruped() -> Self {
        RobotModel {
            name: "reaction_wheel_quadruped".into(),
            variant: ModelVariant::ReactionWheel,
            mass: 13.0,
            inertia: [[0.05, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.12]],
            ..Self::quadruped()
        }
    }

    /// Biped with two point contacts (toe, heel) per foot. Hips sit at CoM
    /// height so that pure pitch motion keeps them fixed in space.
    pub fn humanoid() -> Self {
        let mut contacts = Vec::new();
        for (side, y) in [("L", 0.1), ("R", -0.1)] {
            for (part, dx) in [("toe", 0.12), ("heel", -0.08)] {
                contacts.push(ContactPoint {
                    name: format!("{side}_{part}"),
                    hip: [0.0, y, 0.0],
                    foot_offset: [dx, 0.0],
                });
            }
        }
        RobotModel {
            name: "humanoid".into(),
            variant: ModelVariant::FootForce,
            mass: 24.0,
            inertia: [[0.8, 0.0, 0.0], [0.0, 0.7, 0.0], [0.0, 0.0, 0.25]],
            gravity: default_gravity(),
            contacts,
            nominal_height: 0.65,
            leg_reach: 0.9,
            body_half_extents: [0.1, 0.15, 0.3],
            max_normal_force: 2.0 * 24.0 * 9.81,
            max_wheel_torque: 0.0,
            leg_length: 0.65,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "quadruped" => Some(Self::quadruped()),
            "reaction_wheel_quadruped" => Some(Self::reaction_wheel_quadruped()),
            "humanoid" => Some(Self::humanoid()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let model: RobotModel = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(ConfigError::invalid("mass", "must be positive"));
        }
        let i = self.inertia_matrix();
        if (i - i.transpose()).abs().max() > 1e-12 {
            return Err(ConfigError::invalid("inertia", "must be symmetric"));
        }
        if i.cholesky().is_none() {
            return Err(ConfigError::invalid("inertia", "must be positive definite"));
        }
        if self.variant == ModelVariant::FootForce && self.contacts.is_empty() {
            return Err(ConfigError::invalid(
                "contacts",
                "foot-force models need at least one contact",
            ));
        }
        if self.max_normal_force <= 0.0 {
            return Err(ConfigError::invalid("max_normal_force", "must be positive"));
        }
        if self.variant == ModelVariant::ReactionWheel && self.max_wheel_torque <= 0.0 {
            return Err(ConfigError::invalid("max_wheel_torque", "must be positive"));
        }
        Ok(())
    }

    pub fn num_contacts(&self) -> usize {
        self.contacts.len()
    }

    pub fn control_dim(&self) -> usize {
        match self.variant {
            ModelVariant::FootForce => 3 * self.contacts.len(),
            ModelVariant::ReactionWheel => 2,
        }
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        let a = self.inertia;
        Matrix3::new(
            a[0][0], a[0][1], a[0][2], a[1][0], a[1][1], a[1][2], a[2][0], a[2][1], a[2][2],
        )
    }

    pub fn inertia_inverse(&self) -> Matrix3<f64> {
        self.inertia_matrix()
            .try_inverse()
            .expect("inertia validated positive definite")
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity_vector().norm()
    }

    /// Body-frame corners of the collision box.
    pub fn body_corners(&self) -> [Vector3<f64>; 8] {
        let e = self.body_half_extents;
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { 1.0 } else { -1.0 };
            let sy = if i & 2 == 0 { 1.0 } else { -1.0 };
            let sz = if i & 4 == 0 { 1.0 } else { -1.0 };
            *c = Vector3::new(sx * e[0], sy * e[1], sz * e[2]);
        }
        out
    }

    /// Body-frame foot tips with legs fully extended straight down.
    pub fn extended_feet(&self) -> Vec<Vector3<f64>> {
        self.contacts
            .iter()
            .map(|c| c.hip() + Vector3::new(c.foot_offset[0], c.foot_offset[1], -self.leg_length))
            .collect()
    }
}
