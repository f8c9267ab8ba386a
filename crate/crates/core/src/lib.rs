//! Quaternion-native model-predictive control for single-rigid-body legged
//! robot models.
//!
//! The crate is organized bottom-up:
//!
//! - [`quat`]: unit-quaternion algebra, Cayley retraction and attitude Jacobians.
//! - [`dynamics`]: single-rigid-body models, midpoint discretization and the
//!   12-dimensional error-state linearization.
//! - [`cost`]: geodesic attitude cost, quadratic tracking terms, friction cone
//!   and actuator constraints.
//! - [`solver`]: augmented-Lagrangian iLQR over error states.
//! - [`mpc`]: gait scheduling, reference generation and the receding-horizon loop.
//! - [`euler`]: a ZYX Euler-angle MPC baseline sharing the same physics.
//! - [`sim`]: ground-truth RK4 simulator, scenarios and Monte Carlo runner.
//! - [`verify`]: numeric self-checks used by `quatmpc verify`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod dynamics;
pub mod error;
pub mod euler;
pub mod mpc;
pub mod par;
pub mod quat;
pub mod sim;
pub mod solver;
pub mod verify;

pub use error::{ConfigError, ModelError, QuatError, SolverError};
pub use quat::{Quaternion, TangentRotation};
