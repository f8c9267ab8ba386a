use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::runner::{run_scenario, RunResult, RunStatus};
use super::scenario::{AnchorMode, CommandSegment, Scenario};
use crate::cost::landing_target;
use crate::error::ConfigError;
use crate::mpc::ControllerKind;
use crate::quat::Quaternion;

/// Largest tilt at touchdown that still counts as landing upright, deg.
pub const SUCCESS_TILT_DEG: f64 = 15.0;

const FALLING_CAT: &str = r#"
format = "quatmpc-scenario/1"
name = "falling_cat"
duration = 1.5
anchor = "landing_target"

[robot]
preset = "reaction_wheel_quadruped"
max_wheel_torque = 4.0

[environment]
type = "airborne"
ground_z = 0.0

[initial]
position = [0.0, 0.0, 1.75]

[mpc]
horizon = 37
dt = 0.01

[mpc.weights]
w_r = [0.0, 0.0, 0.0]
w_q = 30.0
w_v = [0.0, 0.0, 0.0]
w_omega = [0.1, 0.1, 0.1]
r_u = 1e-4
"#;

/// Built-in falling-cat scenario: reaction-wheel quadruped dropped from
/// 1.75 m, steering towards the closest yaw-only attitude.
pub fn falling_cat_scenario(kind: ControllerKind) -> Scenario {
    let mut s = Scenario::from_toml_str(FALLING_CAT, "builtin falling_cat").expect("builtin scenario parses");
    s.controller = kind;
    s
}

/// Uniform sample on SO(3): a normalized 4-D Gaussian.
pub fn sample_attitude<R: Rng>(rng: &mut R) -> Quaternion {
    loop {
        let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-6 {
            return Quaternion::from_vector(v);
        }
    }
}

fn trial_rng(base_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: usize,
    pub base_seed: u64,
    pub success: bool,
    /// `[s, x, y, z]`
    pub q0: [f64; 4],
    pub target: [f64; 4],
    pub touchdown_time: Option<f64>,
    pub tilt_deg: Option<f64>,
    pub feet_first: bool,
    pub degraded_ticks: usize,
    pub fault: Option<String>,
}

/// One falling-cat drop with the attitude drawn from `(base_seed, index)`.
///
/// Succeeds when the body touches down tilted less than [`SUCCESS_TILT_DEG`]
/// from upright with the feet lower than every body corner.
pub fn falling_cat_trial(
    base: &Scenario,
    kind: ControllerKind,
    base_seed: u64,
    index: usize,
) -> Result<(TrialOutcome, RunResult), ConfigError> {
    let q0 = sample_attitude(&mut trial_rng(base_seed, index));
    let mut s = base.clone();
    s.controller = kind;
    s.anchor = AnchorMode::LandingTarget;
    s.seed = base_seed;
    s.initial.quaternion = Some(q0.to_array());
    let res = run_scenario(&s)?;
    let sum = &res.summary;
    let td = sum.touchdown;
    let outcome = TrialOutcome {
        index,
        base_seed,
        success: td.is_some_and(|t| t.tilt_deg < SUCCESS_TILT_DEG && t.feet_first),
        q0: q0.to_array(),
        target: landing_target(&q0).to_array(),
        touchdown_time: td.map(|t| t.time),
        tilt_deg: td.map(|t| t.tilt_deg),
        feet_first: td.is_some_and(|t| t.feet_first),
        degraded_ticks: sum.degraded_ticks,
        fault: match sum.status {
            RunStatus::Touchdown => None,
            RunStatus::Completed => Some("no touchdown before the end of the run".into()),
            RunStatus::Failed => sum.failure.clone(),
        },
    };
    Ok((outcome, res))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scenario: String,
    pub controller: ControllerKind,
    pub base_seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_tilt_deg: f64,
    /// Sorted by trial index.
    pub outcomes: Vec<TrialOutcome>,
}

impl MonteCarloReport {
    fn aggregate(scenario: &str, kind: ControllerKind, base_seed: u64, mut outcomes: Vec<TrialOutcome>) -> Self {
        outcomes.sort_by_key(|o| o.index);
        let successes = outcomes.iter().filter(|o| o.success).count();
        let tilts: Vec<f64> = outcomes.iter().filter_map(|o| o.tilt_deg).collect();
        let n = outcomes.len();
        MonteCarloReport {
            scenario: scenario.to_string(),
            controller: kind,
            base_seed,
            trials: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            mean_tilt_deg: if tilts.is_empty() {
                f64::NAN
            } else {
                tilts.iter().sum::<f64>() / tilts.len() as f64
            },
            outcomes,
        }
    }

    /// Human-readable table, one line per trial plus a summary line.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:>5}  {:>8}  {:>9}  {:>10}  {:>7}  {}\n",
            "trial", "success", "tilt_deg", "touchdown", "feet", "fault"
        );
        for o in &self.outcomes {
            out.push_str(&format!(
                "{:>5}  {:>8}  {:>9}  {:>10}  {:>7}  {}\n",
                o.index,
                if o.success { "yes" } else { "no" },
                o.tilt_deg.map_or("-".into(), |t| format!("{t:.1}")),
                o.touchdown_time.map_or("-".into(), |t| format!("{t:.3}")),
                if o.feet_first { "first" } else { "late" },
                o.fault.as_deref().unwrap_or(""),
            ));
        }
        out.push_str(&format!(
            "{:?} controller: {}/{} landed upright ({:.0}%)\n",
            self.controller,
            self.successes,
            self.trials,
            100.0 * self.success_rate
        ));
        out
    }
}

/// `n` falling-cat trials; runs in parallel when the `parallel` feature is on.
pub fn monte_carlo(
    base: &Scenario,
    n: usize,
    kind: ControllerKind,
    base_seed: u64,
) -> Result<MonteCarloReport, ConfigError> {
    monte_carlo_with(base, n, kind, base_seed, |n, f| crate::par::map_indexed(n, f))
}

/// [`monte_carlo`] with an explicit index mapper, e.g. [`crate::par::map_indexed_sequential`].
pub fn monte_carlo_with<M>(
    base: &Scenario,
    n: usize,
    kind: ControllerKind,
    base_seed: u64,
    map: M,
) -> Result<MonteCarloReport, ConfigError>
where
    M: Fn(
        usize,
        &(dyn Fn(usize) -> Result<TrialOutcome, ConfigError> + Sync + Send),
    ) -> Vec<Result<TrialOutcome, ConfigError>>,
{
    if n == 0 {
        return Err(ConfigError::invalid("trials", "must be at least 1"));
    }
    base.validate()?;
    let trial = |i: usize| falling_cat_trial(base, kind, base_seed, i).map(|(o, _)| o);
    let outcomes = map(n, &trial).into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(MonteCarloReport::aggregate(&base.name, kind, base_seed, outcomes))
}

/// Standing humanoid asked to rotate its torso about one Body axis at
/// 0.4 rad/s for 4.8 s (about 110°) and back again.
pub fn humanoid_attitude_sweep(axis: usize, sign: f64, kind: ControllerKind) -> Scenario {
    assert!(axis < 3, "axis index out of range");
    let mut s = Scenario::from_toml_str(
        r#"
format = "quatmpc-scenario/1"
name = "humanoid_sweep"
duration = 10.0

[robot]
preset = "humanoid"

[mpc]
horizon = 37
dt = 0.01
standing_height = 0.65

[mpc.weights]
w_r = [50.0, 50.0, 50.0]
w_v = [5.0, 5.0, 5.0]
terminal_scale = 10.0

[mpc.command_limits]
linear = 1.0
angular = 3.0

[failure]
max_attitude_error_deg = 45.0
max_position_error = 0.5
max_consecutive_degraded = 10
"#,
        "builtin humanoid_sweep",
    )
    .expect("builtin scenario parses");
    let mut w = [0.0; 3];
    w[axis] = 0.4 * sign;
    s.commands = vec![
        CommandSegment {
            start: 0.2,
            end: 5.0,
            angular: w,
            ..Default::default()
        },
        CommandSegment {
            start: 5.0,
            end: 9.8,
            angular: w.map(|v| -v),
            ..Default::default()
        },
    ];
    s.name = format!("humanoid_sweep_{}", ["roll", "pitch", "yaw"][axis]);
    s.controller = kind;
    s
}
