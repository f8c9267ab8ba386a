use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::cost::tangent_basis;
use crate::dynamics::{ModelVariant, RobotModel, SrbParams, SrbState, StateVector};

/// Body points deeper than this inside an obstacle end the run.
pub const PENETRATION_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsFault {
    #[error("body penetrated the environment by {depth:.3} m")]
    Penetration { depth: f64 },
    #[error("state became non-finite")]
    NonFinite,
}

/// Ground-truth plant: the robot, its surroundings and the contact model.
#[derive(Clone, Debug)]
pub struct Plant {
    pub model: RobotModel,
    pub params: SrbParams,
    pub env: super::Environment,
    /// Friction coefficient of the surfaces.
    pub mu: f64,
    pub wheel_torque: f64,
}

/// Contact state for one physics step.
#[derive(Clone, Debug, PartialEq)]
pub struct Contacts {
    pub feet: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub stance: Vec<bool>,
}

impl Contacts {
    pub fn none() -> Self {
        Contacts {
            feet: Vec::new(),
            normals: Vec::new(),
            stance: Vec::new(),
        }
    }
}

impl Plant {
    pub fn new(model: RobotModel, env: super::Environment, mu: f64, wheel_torque: f64) -> Self {
        Plant {
            params: SrbParams::new(&model),
            model,
            env,
            mu,
            wheel_torque,
        }
    }

    /// Forces the surfaces can actually deliver for the commanded `u`.
    ///
    /// A foot transmits force only in stance, on a surface that admits contact
    /// and within leg reach of its hip. The force is projected onto the
    /// friction pyramid with a nonnegative normal part, so surfaces never pull.
    pub fn applied_control(&self, x: &SrbState, u: &DVector<f64>, contacts: &Contacts) -> DVector<f64> {
        match self.model.variant {
            ModelVariant::ReactionWheel => u.map(|t| t.clamp(-self.wheel_torque, self.wheel_torque)),
            ModelVariant::FootForce => {
                let mut out = DVector::zeros(u.len());
                if !self.env.admits_contact() {
                    return out;
                }
                for (i, c) in self.model.contacts.iter().enumerate() {
                    if !contacts.stance[i] {
                        continue;
                    }
                    let hip = x.r + x.q.rotate(&c.hip());
                    if (contacts.feet[i] - hip).norm() > self.model.leg_reach {
                        continue;
                    }
                    let f: Vector3<f64> = u.fixed_rows::<3>(3 * i).into_owned();
                    let n = contacts.normals[i];
                    let (t1, t2) = tangent_basis(&n);
                    let fn_ = f.dot(&n).max(0.0);
                    let cap = self.mu * fn_;
                    let g = fn_ * n + f.dot(&t1).clamp(-cap, cap) * t1 + f.dot(&t2).clamp(-cap, cap) * t2;
                    out.fixed_rows_mut::<3>(3 * i).copy_from(&g);
                }
                out
            }
        }
    }

    /// Deepest body-box corner inside the environment.
    pub fn corner_penetration(&self, x: &SrbState) -> f64 {
        self.model
            .body_corners()
            .iter()
            .map(|c| self.env.penetration(&(x.r + x.q.rotate(c))))
            .fold(0.0, f64::max)
    }

    /// One RK4 step of the rigid body with the delivered contact forces held constant.
    pub fn step(&self, x: &SrbState, u: &DVector<f64>, contacts: &Contacts, dt: f64) -> Result<SrbState, PhysicsFault> {
        let applied = self.applied_control(x, u, contacts);
        let next = rk4_step(&self.params, x, &applied, &contacts.feet, dt);
        if !next.is_finite() {
            return Err(PhysicsFault::NonFinite);
        }
        let depth = self.corner_penetration(&next);
        if depth > PENETRATION_LIMIT {
            return Err(PhysicsFault::Penetration { depth });
        }
        Ok(next)
    }
}

/// Classical RK4 on the same vector field as the controller's model, then renormalization.
pub fn rk4_step(params: &SrbParams, x: &SrbState, u: &DVector<f64>, feet: &[Vector3<f64>], dt: f64) -> SrbState {
    let x0: StateVector = x.to_vector();
    let f = |y: &StateVector| params.vector_field(y, u, feet);
    let k1 = f(&x0);
    let k2 = f(&(x0 + 0.5 * dt * k1));
    let k3 = f(&(x0 + 0.5 * dt * k2));
    let k4 = f(&(x0 + dt * k3));
    SrbState::from_vector(&(x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))
}

/// `physics_step` for callers holding a [`Plant`].
pub fn physics_step(
    plant: &Plant,
    x: &SrbState,
    u: &DVector<f64>,
    contacts: &Contacts,
    dt: f64,
) -> Result<SrbState, PhysicsFault> {
    plant.step(x, u, contacts, dt)
}
