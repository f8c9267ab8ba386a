use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::log::{LogRow, RowStatus, RunLog};
use super::physics::{Contacts, Plant};
use super::scenario::{AnchorMode, Scenario};
use super::Environment;
use crate::cost::landing_target;
use crate::dynamics::{ModelVariant, RobotModel, SrbState};
use crate::error::ConfigError;
use crate::mpc::{foothold_heuristic, MpcController, TickInput};
use crate::quat::Quaternion;
use crate::solver::SolveStatus;

/// Position error below which a disturbance counts as rejected, m.
pub const RECOVERY_BAND: f64 = 0.03;
/// Start of the window used for steady-state attitude error, s.
pub const SETTLE_TIME: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Ran for the full duration.
    Completed,
    /// Airborne run ended at first ground contact.
    Touchdown,
    /// Stopped early by a failure condition.
    Failed,
}

/// Body configuration at first ground contact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Touchdown {
    pub time: f64,
    /// Angle between the Body z axis and the World z axis, deg.
    pub tilt_deg: f64,
    /// Every foot tip is lower than every body corner.
    pub feet_first: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub controller: crate::mpc::ControllerKind,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub end_time: f64,
    pub rows: usize,
    pub ticks: usize,
    pub degraded_ticks: usize,
    pub solve_ms_median: f64,
    pub solve_ms_p95: f64,
    pub solve_ms_max: f64,
    /// RMS of each component of the Body-frame rotation vector from the
    /// desired to the actual attitude, deg.
    pub rms_attitude_error_deg: [f64; 3],
    pub max_attitude_error_deg: f64,
    /// Largest geodesic attitude error after the settle time, deg.
    pub steady_attitude_error_deg: f64,
    pub max_position_error: f64,
    /// Time after the last disturbance until the position error stays inside the recovery band.
    pub recovery_time: Option<f64>,
    pub touchdown: Option<Touchdown>,
}

impl RunSummary {
    pub fn succeeded(&self) -> bool {
        self.status != RunStatus::Failed
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub log: RunLog,
    pub summary: RunSummary,
}

/// Rotation vector of `q_ref⁻¹ ⊗ q`, rad.
pub fn attitude_error_vector(q: &Quaternion, q_ref: &Quaternion) -> Vector3<f64> {
    let d = q_ref.conj().mul(q).canonical();
    let v = d.vector();
    let n = v.norm();
    if n < 1e-15 {
        return 2.0 * v;
    }
    2.0 * n.atan2(d.scalar()) * v / n
}

/// Angle between the Body z axis and World z, rad.
pub fn tilt_angle(q: &Quaternion) -> f64 {
    q.to_rotation_matrix()[(2, 2)].clamp(-1.0, 1.0).acos()
}

fn touchdown_check(model: &RobotModel, ground: f64, x: &SrbState, t: f64) -> Option<Touchdown> {
    let corner_z: Vec<f64> = model.body_corners().iter().map(|c| (x.r + x.q.rotate(c)).z).collect();
    let foot_z: Vec<f64> = model.extended_feet().iter().map(|f| (x.r + x.q.rotate(f)).z).collect();
    let lowest = corner_z.iter().chain(&foot_z).cloned().fold(f64::INFINITY, f64::min);
    if lowest > ground {
        return None;
    }
    let highest_foot = foot_z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lowest_corner = corner_z.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(Touchdown {
        time: t,
        tilt_deg: tilt_angle(&x.q).to_degrees(),
        feet_first: !foot_z.is_empty() && highest_foot < lowest_corner,
    })
}

struct FootTracker {
    feet: Vec<Vector3<f64>>,
    normals: Vec<Vector3<f64>>,
    stance: Vec<bool>,
}

/// Runs a scenario to completion or failure.
pub fn run_scenario(s: &Scenario) -> Result<RunResult, ConfigError> {
    s.validate()?;
    let model = s.robot_model()?;
    let mu = s.friction.unwrap_or(s.mpc.constraints.mu);
    let wheel = s.mpc.constraints.wheel_torque(&model);
    let plant = Plant::new(model.clone(), s.environment.clone(), mu, wheel);
    let mut ctrl = MpcController::new(s.controller, model.clone(), s.mpc.clone())?;
    let mut x = s.initial_state(&model);
    if s.anchor == AnchorMode::LandingTarget {
        ctrl.set_anchor(SrbState {
            r: x.r,
            q: landing_target(&x.q),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        });
    }

    let foot_force = model.variant == ModelVariant::FootForce;
    let gait = s.mpc.gait.clone();
    let n_feet = if foot_force { model.num_contacts() } else { 0 };
    let mut feet = if foot_force && s.environment.admits_contact() {
        let (f, n) = s.environment.initial_footholds(&model, &x);
        FootTracker {
            stance: (0..n_feet).map(|i| gait.query(0.5 * s.physics_dt, i)).collect(),
            feet: f,
            normals: n,
        }
    } else {
        FootTracker {
            feet: Vec::new(),
            normals: Vec::new(),
            stance: Vec::new(),
        }
    };
    let ground = s.environment.ground_z();
    let airborne = matches!(s.environment, Environment::Airborne { .. });

    let dt = s.physics_dt;
    let n_steps = s.physics_steps();
    let sub = s.substeps();
    let mut log = RunLog::new(model.control_dim());
    let mut u = DVector::zeros(model.control_dim());
    let mut reference = x;
    let mut status = RunStatus::Completed;
    let mut failure = None;
    let mut touchdown = None;
    let mut solve_times = Vec::new();
    let mut degraded_ticks = 0;
    let mut degraded_streak = 0;
    let limits = &s.failure;

    for i in 0..=n_steps {
        let t = i as f64 * dt;
        let mut row_status = RowStatus::Held;
        let mut solve_ms = 0.0;

        if i < n_steps && i % sub == 0 && failure.is_none() {
            let cmd = s.command_at(t);
            let heading = ctrl.heading().unwrap_or(0.0);
            let planned = match (foot_force, ground) {
                (true, Some(gz)) if s.environment.admits_contact() => {
                    let plan = foothold_heuristic(&model, &x, &cmd.clamped(&s.mpc.command_limits), &gait, heading, gz);
                    (0..n_feet)
                        .map(|k| if feet.stance[k] { feet.feet[k] } else { plan[k] })
                        .collect()
                }
                _ => feet.feet.clone(),
            };
            let tick = ctrl.tick(&TickInput {
                time: t,
                state: &x,
                command: cmd,
                feet: &planned,
                normals: &feet.normals,
                period: sub as f64 * dt,
            });
            u = tick.control;
            reference = tick.reference;
            solve_ms = tick.solve_ms;
            solve_times.push(tick.solve_ms);
            row_status = match (&tick.report, tick.degraded) {
                (_, true) => RowStatus::Degraded,
                (Some(r), false) if r.status == SolveStatus::MaxIterations => RowStatus::MaxIterations,
                _ => RowStatus::Solved,
            };
            if tick.degraded {
                degraded_ticks += 1;
                degraded_streak += 1;
            } else {
                degraded_streak = 0;
            }
        }

        log.rows.push(LogRow {
            time: t,
            state: x,
            reference,
            control: u.iter().copied().collect(),
            solve_ms,
            status: row_status,
        });

        if airborne {
            if let Some(td) = touchdown_check(&model, ground.unwrap_or(0.0), &x, t) {
                touchdown = Some(td);
                status = RunStatus::Touchdown;
                break;
            }
        } else if failure.is_none() {
            let att = x.q.angle_to(&reference.q).to_degrees();
            let pos = (x.r - reference.r).norm();
            if att > limits.max_attitude_error_deg {
                failure = Some(format!("fall: attitude error {att:.1} deg at t = {t:.3} s"));
            } else if pos > limits.max_position_error {
                failure = Some(format!("fall: position error {pos:.3} m at t = {t:.3} s"));
            } else if degraded_streak > limits.max_consecutive_degraded {
                failure = Some(format!(
                    "solver degraded for {degraded_streak} consecutive ticks at t = {t:.3} s"
                ));
            }
        }
        if failure.is_some() || i == n_steps {
            break;
        }

        for d in &s.disturbances {
            if d.time >= t && d.time < t + dt {
                let j = Vector3::from(d.impulse);
                x.v += j / model.mass;
                let arm = Vector3::from(d.point);
                x.omega += plant.params.inertia_inv * arm.cross(&x.q.conj().rotate(&j));
            }
        }

        // contact schedule for this step; feet touching down are pinned at the planned foothold
        if foot_force && s.environment.admits_contact() {
            let t_mid = t + 0.5 * dt;
            let cmd = s.command_at(t).clamped(&s.mpc.command_limits);
            let heading = ctrl.heading().unwrap_or(0.0);
            for k in 0..n_feet {
                let now = gait.query(t_mid, k);
                if now && !feet.stance[k] {
                    if let Some(gz) = ground {
                        feet.feet[k] = foothold_heuristic(&model, &x, &cmd, &gait, heading, gz)[k];
                    }
                }
                feet.stance[k] = now;
            }
        }
        let contacts = Contacts {
            feet: feet.feet.clone(),
            normals: feet.normals.clone(),
            stance: feet.stance.clone(),
        };
        match plant.step(&x, &u, &contacts, dt) {
            Ok(next) => x = next,
            Err(e) => {
                failure = Some(format!("{e} at t = {:.3} s", t + dt));
                break;
            }
        }
    }
    if failure.is_some() {
        status = RunStatus::Failed;
    }

    let summary = summarize(s, &log, status, failure, touchdown, &solve_times, degraded_ticks);
    Ok(RunResult { log, summary })
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

fn summarize(
    s: &Scenario,
    log: &RunLog,
    status: RunStatus,
    failure: Option<String>,
    touchdown: Option<Touchdown>,
    solve_times: &[f64],
    degraded_ticks: usize,
) -> RunSummary {
    let mut sorted = solve_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sq = Vector3::zeros();
    let mut max_att: f64 = 0.0;
    let mut steady: f64 = 0.0;
    let mut max_pos: f64 = 0.0;
    for row in &log.rows {
        let e = attitude_error_vector(&row.state.q, &row.reference.q);
        sq += e.component_mul(&e);
        let ang = row.state.q.angle_to(&row.reference.q).to_degrees();
        max_att = max_att.max(ang);
        if row.time >= SETTLE_TIME {
            steady = steady.max(ang);
        }
        max_pos = max_pos.max((row.state.r - row.reference.r).norm());
    }
    let n = log.rows.len().max(1) as f64;
    let rms = (sq / n).map(|v| v.sqrt().to_degrees());

    let recovery_time = s
        .disturbances
        .iter()
        .map(|d| d.time)
        .fold(None, |a: Option<f64>, t| Some(a.map_or(t, |a| a.max(t))))
        .and_then(|t_d| {
            let after: Vec<&LogRow> = log.rows.iter().filter(|r| r.time > t_d).collect();
            let last_out = after
                .iter()
                .rposition(|r| (r.state.r - r.reference.r).norm() >= RECOVERY_BAND);
            match last_out {
                None => after.first().map(|r| r.time - t_d),
                Some(k) if k + 1 < after.len() => Some(after[k + 1].time - t_d),
                Some(_) => None,
            }
        });

    RunSummary {
        scenario: s.name.clone(),
        controller: s.controller,
        status,
        failure,
        end_time: log.rows.last().map_or(0.0, |r| r.time),
        rows: log.rows.len(),
        ticks: solve_times.len(),
        degraded_ticks,
        solve_ms_median: percentile(&sorted, 0.5),
        solve_ms_p95: percentile(&sorted, 0.95),
        solve_ms_max: sorted.last().copied().unwrap_or(0.0),
        rms_attitude_error_deg: rms.into(),
        max_attitude_error_deg: max_att,
        steady_attitude_error_deg: steady,
        max_position_error: max_pos,
        recovery_time,
        touchdown,
    }
}
