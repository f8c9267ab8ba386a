//! Ground-truth simulation: RK4 rigid-body plant, surfaces, scenario files,
//! the closed-loop runner and Monte Carlo trials.

mod environment;
mod log;
mod montecarlo;
mod physics;
mod runner;
mod scenario;

pub use environment::{Environment, Plane};
pub use log::{LogRow, RowStatus, RunLog};
pub use montecarlo::{
    falling_cat_scenario, falling_cat_trial, humanoid_attitude_sweep, monte_carlo, monte_carlo_with, sample_attitude,
    MonteCarloReport, TrialOutcome, SUCCESS_TILT_DEG,
};
pub use physics::{physics_step, rk4_step, Contacts, PhysicsFault, Plant, PENETRATION_LIMIT};
pub use runner::{
    attitude_error_vector, run_scenario, tilt_angle, RunResult, RunStatus, RunSummary, Touchdown, RECOVERY_BAND,
    SETTLE_TIME,
};
pub use scenario::{
    AnchorMode, CommandKind, CommandSegment, Disturbance, FailureLimits, InitialState, RobotSpec, Scenario,
    SCENARIO_FORMAT,
};
