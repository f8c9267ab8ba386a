//! Receding-horizon control loop.
//!
//! Each tick builds a reference by integrating the velocity command from the
//! controller's desired pose, samples the gait at the knot midtimes, shifts
//! the previous solution as a warm start and solves. Only the first control
//! is applied. Solver failures never propagate: the previous control is
//! reused and the tick is flagged as degraded.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cost::{
    friction_constraints, stage_cost, stage_cost_value, tangent_basis, terminal_cost, terminal_cost_value,
    torque_limit_constraints, ConstraintBlock, ConstraintSet, ContactLimits, CostExpansion, CostWeights,
};
use crate::dynamics::{self, LinearizedStep, ModelVariant, RobotModel, SrbParams, SrbState, ERROR_DIM};
use crate::error::{ConfigError, ModelError};
use crate::euler::{euler_reference, EulerProblem, EulerState};
use crate::quat::{cayley, skew, Quaternion, TangentRotation};
use crate::solver::{AlIlqr, AlState, ConvergenceReport, Problem, SolverSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitKind {
    Stand,
    Trot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitSchedule {
    pub kind: GaitKind,
    /// s
    pub period: f64,
    pub duty: f64,
    /// Phase offset per foot, fraction of a period. Empty means the default
    /// diagonal pairing for four feet.
    pub offsets: Vec<f64>,
}

impl Default for GaitSchedule {
    fn default() -> Self {
        Self::stand()
    }
}

impl GaitSchedule {
    pub fn stand() -> Self {
        GaitSchedule {
            kind: GaitKind::Stand,
            period: 0.5,
            duty: 1.0,
            offsets: Vec::new(),
        }
    }

    /// Diagonal-pair trot for feet ordered FL, FR, RL, RR.
    pub fn trot(period: f64, duty: f64) -> Self {
        GaitSchedule {
            kind: GaitKind::Trot,
            period,
            duty,
            offsets: vec![0.0, 0.5, 0.5, 0.0],
        }
    }

    pub fn validate(&self, n_feet: usize) -> Result<(), ConfigError> {
        if !(self.duty > 0.0 && self.duty <= 1.0) {
            return Err(ConfigError::invalid("gait.duty", "must lie in (0, 1]"));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(ConfigError::invalid("gait.period", "must be positive"));
        }
        if self.offsets.iter().any(|o| !(0.0..1.0).contains(o)) {
            return Err(ConfigError::invalid("gait.offsets", "offsets must lie in [0, 1)"));
        }
        if self.kind == GaitKind::Trot && !self.offsets.is_empty() && self.offsets.len() != n_feet {
            return Err(ConfigError::invalid(
                "gait.offsets",
                format!("expected {n_feet} offsets, got {}", self.offsets.len()),
            ));
        }
        if self.kind == GaitKind::Trot && self.offsets.is_empty() && n_feet != 4 {
            return Err(ConfigError::invalid(
                "gait.offsets",
                "default trot pairing needs four feet",
            ));
        }
        Ok(())
    }

    fn offset(&self, foot: usize) -> f64 {
        match self.offsets.get(foot) {
            Some(o) => *o,
            None => [0.0, 0.5, 0.5, 0.0][foot % 4],
        }
    }

    pub fn query(&self, t: f64, foot: usize) -> bool {
        match self.kind {
            GaitKind::Stand => true,
            GaitKind::Trot => {
                let phase = (t / self.period - self.offset(foot)).rem_euclid(1.0);
                phase < self.duty
            }
        }
    }

    pub fn stance_duration(&self) -> f64 {
        self.duty * self.period
    }
}

/// Stance flags for `horizon` knots, sampled at `t0 + (k + ½)dt`.
pub fn gait_contacts(schedule: &GaitSchedule, t0: f64, horizon: usize, dt: f64, n_feet: usize) -> Vec<Vec<bool>> {
    (0..horizon)
        .map(|k| {
            let t = t0 + (k as f64 + 0.5) * dt;
            (0..n_feet).map(|i| schedule.query(t, i)).collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VelocityCommand {
    /// m/s, Relative frame.
    pub linear: [f64; 3],
    /// rad/s, Body frame.
    pub angular: [f64; 3],
}

impl VelocityCommand {
    pub fn angular(w: Vector3<f64>) -> Self {
        VelocityCommand {
            linear: [0.0; 3],
            angular: w.into(),
        }
    }

    pub fn linear_vec(&self) -> Vector3<f64> {
        Vector3::from(self.linear)
    }

    pub fn angular_vec(&self) -> Vector3<f64> {
        Vector3::from(self.angular)
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(&self.angular).all(|v| v.is_finite())
    }

    /// Componentwise clamp; non-finite components become zero.
    pub fn clamped(&self, limits: &CommandLimits) -> Self {
        let c = |v: f64, lim: f64| if v.is_finite() { v.clamp(-lim, lim) } else { 0.0 };
        VelocityCommand {
            linear: self.linear.map(|v| c(v, limits.linear)),
            angular: self.angular.map(|v| c(v, limits.angular)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandLimits {
    /// m/s per axis
    pub linear: f64,
    /// rad/s per axis
    pub angular: f64,
}

impl Default for CommandLimits {
    fn default() -> Self {
        CommandLimits {
            linear: 1.0,
            angular: 3.0,
        }
    }
}

/// Yaw of the Relative frame with a freeze band near ±90° pitch.
///
/// The heading comes from the Body x axis projected onto the ground plane.
/// Once that projection gets shorter than `FREEZE` the last heading is held
/// until it grows past `RELEASE`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeFrame {
    yaw: Option<f64>,
    frozen: bool,
}

impl RelativeFrame {
    pub const FREEZE: f64 = 0.26;
    pub const RELEASE: f64 = 0.5;

    pub fn new() -> Self {
        RelativeFrame {
            yaw: None,
            frozen: false,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn update(&mut self, q: &Quaternion) -> f64 {
        let r = q.to_rotation_matrix();
        let h = r[(0, 0)].hypot(r[(1, 0)]);
        let threshold = if self.frozen { Self::RELEASE } else { Self::FREEZE };
        self.frozen = h < threshold;
        let yaw = match (self.frozen, self.yaw) {
            (false, _) => r[(1, 0)].atan2(r[(0, 0)]),
            (true, Some(y)) => y,
            // no history: the Body y axis stays horizontal under pure pitch
            (true, None) => (-r[(0, 1)]).atan2(r[(1, 1)]),
        };
        self.yaw = Some(yaw);
        yaw
    }
}

impl Default for RelativeFrame {
    fn default() -> Self {
        Self::new()
    }
}

fn yaw_rotate(heading: f64, v: &Vector3<f64>) -> Vector3<f64> {
    let (s, c) = heading.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Attitude increment for a constant Body rate over `dt`, exact in angle.
fn rate_increment(w: &Vector3<f64>, dt: f64) -> Quaternion {
    let n = w.norm();
    if n * dt == 0.0 {
        return Quaternion::identity();
    }
    let half = 0.5 * n * dt;
    if half >= 0.5 * PI {
        return Quaternion::from_axis_angle(w, n * dt);
    }
    cayley(&TangentRotation(w / n * half.tan()))
}

/// Advances a desired state by one interval of the command.
pub fn advance_reference(x: &SrbState, cmd: &VelocityCommand, heading: f64, dt: f64, height: Option<f64>) -> SrbState {
    let v = yaw_rotate(heading, &cmd.linear_vec());
    let w = cmd.angular_vec();
    let mut r = x.r + dt * v;
    if let Some(h) = height {
        r.z = h;
    }
    SrbState {
        r,
        q: x.q.mul(&rate_increment(&w, dt)),
        v,
        omega: w,
    }
}

/// `horizon` reference states integrated forward from `anchor`.
///
/// Position follows the linear command rotated by `heading` (Relative to
/// World), attitude follows the Body-rate command. With `height` set the
/// vertical channel is pinned to it.
pub fn build_reference(
    anchor: &SrbState,
    cmd: &VelocityCommand,
    horizon: usize,
    dt: f64,
    heading: f64,
    height: Option<f64>,
) -> Vec<SrbState> {
    let mut first = *anchor;
    first.v = yaw_rotate(heading, &cmd.linear_vec());
    first.omega = cmd.angular_vec();
    if let Some(h) = height {
        first.r.z = h;
    }
    let mut out = Vec::with_capacity(horizon);
    out.push(first);
    for k in 1..horizon {
        let next = advance_reference(&out[k - 1], cmd, heading, dt, height);
        out.push(next);
    }
    out
}

/// Raibert-style foot placement on flat ground at `ground_z`:
/// hip projection plus the Relative-frame foot offset plus
/// `(T_stance/2)·v_cmd`, with the horizontal offset from the hip projection
/// clamped to what the leg can reach.
pub fn foothold_heuristic(
    model: &RobotModel,
    x: &SrbState,
    cmd: &VelocityCommand,
    schedule: &GaitSchedule,
    heading: f64,
    ground_z: f64,
) -> Vec<Vector3<f64>> {
    let lead = 0.5 * schedule.stance_duration() * yaw_rotate(heading, &cmd.linear_vec());
    model
        .contacts
        .iter()
        .map(|c| {
            let hip = x.r + x.q.rotate(&c.hip());
            let offset = yaw_rotate(heading, &Vector3::new(c.foot_offset[0], c.foot_offset[1], 0.0));
            let mut d = Vector3::new(offset.x + lead.x, offset.y + lead.y, 0.0);
            let drop = (hip.z - ground_z).max(0.0);
            let radius = (model.leg_reach.powi(2) - drop * drop).max(0.0).sqrt();
            if d.norm() > radius {
                d *= radius / d.norm();
            }
            Vector3::new(hip.x + d.x, hip.y + d.y, ground_z)
        })
        .collect()
}

/// Controls that hold the body still at CoM `r`: the least-norm stance
/// forces whose resultant cancels gravity with zero moment about the CoM,
/// plus enough squeeze along each contact normal to put the tangential part
/// inside the friction cone with a 50% margin. When the stance cannot cancel
/// the moment (one foot, or feet on a line) the moment is balanced in the
/// least-squares sense.
pub fn nominal_control(
    model: &RobotModel,
    r: &Vector3<f64>,
    feet: &[Vector3<f64>],
    stance: &[bool],
    normals: &[Vector3<f64>],
    limits: &ContactLimits,
) -> DVector<f64> {
    let m = model.control_dim();
    let mut u = DVector::zeros(m);
    if model.variant != ModelVariant::FootForce {
        return u;
    }
    let active: Vec<usize> = (0..stance.len()).filter(|&i| stance[i]).collect();
    if active.is_empty() {
        return u;
    }
    let mut a = DMatrix::zeros(6, 3 * active.len());
    for (j, &i) in active.iter().enumerate() {
        a.view_mut((0, 3 * j), (3, 3)).copy_from(&Matrix3::identity());
        a.view_mut((3, 3 * j), (3, 3)).copy_from(&skew(&(feet[i] - r)));
    }
    let mut b = DVector::zeros(6);
    b.rows_mut(0, 3).copy_from(&(model.mass * model.gravity_vector()));
    let f_all = a.pseudo_inverse(1e-9).expect("pseudo-inverse of a finite matrix") * b;
    for (j, &i) in active.iter().enumerate() {
        let lift: Vector3<f64> = f_all.fixed_rows::<3>(3 * j).into_owned();
        let nrm = normals[i].normalize();
        let along = lift.dot(&nrm);
        let tangential = (lift - along * nrm).norm();
        let needed = 1.5 * tangential / limits.mu + limits.f_min;
        let f = lift + (needed - along).max(0.0) * nrm;
        u.fixed_rows_mut::<3>(3 * i).copy_from(&f);
    }
    u
}

/// Projects `u` into the admissible set: swing feet carry nothing, stance
/// forces land inside the friction pyramid and normal bounds, wheel torques
/// inside their box.
pub fn clamp_control(
    model: &RobotModel,
    u: &DVector<f64>,
    stance: &[bool],
    normals: &[Vector3<f64>],
    limits: &ContactLimits,
    wheel_torque: f64,
) -> DVector<f64> {
    let mut out = u.map(|v| if v.is_finite() { v } else { 0.0 });
    match model.variant {
        ModelVariant::ReactionWheel => out.apply(|v| *v = v.clamp(-wheel_torque, wheel_torque)),
        ModelVariant::FootForce => {
            for (i, &s) in stance.iter().enumerate() {
                let f: Vector3<f64> = out.fixed_rows::<3>(3 * i).into_owned();
                let g = if s {
                    let n = normals[i].normalize();
                    let (t1, t2) = tangent_basis(&n);
                    let fn_ = f.dot(&n).clamp(limits.f_min, limits.f_max);
                    let cap = limits.mu * fn_;
                    fn_ * n + f.dot(&t1).clamp(-cap, cap) * t1 + f.dot(&t2).clamp(-cap, cap) * t2
                } else {
                    Vector3::zeros()
                };
                out.fixed_rows_mut::<3>(3 * i).copy_from(&g);
            }
        }
    }
    out
}

/// Everything about one horizon except the state representation.
#[derive(Clone, Debug)]
pub struct HorizonSetup {
    pub dt: f64,
    pub weights: CostWeights,
    pub variant: ModelVariant,
    /// Stance flags per control knot.
    pub stance: Vec<Vec<bool>>,
    /// World-frame contact positions, held over the horizon.
    pub feet: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub limits: ContactLimits,
    pub wheel_torque: f64,
    /// `ū_k`, the control each knot is regularized towards.
    pub nominal_controls: Vec<DVector<f64>>,
}

impl HorizonSetup {
    pub fn constraints(&self, k: usize, u: &DVector<f64>) -> ConstraintBlock {
        match self.variant {
            ModelVariant::FootForce => friction_constraints(u, &self.stance[k], &self.normals, &self.limits),
            ModelVariant::ReactionWheel => torque_limit_constraints(u, self.wheel_torque),
        }
    }
}

/// One horizon of the quaternion MPC problem.
pub struct SrbProblem<'a> {
    pub params: &'a SrbParams,
    pub setup: &'a HorizonSetup,
    pub reference: Vec<SrbState>,
}

impl Problem for SrbProblem<'_> {
    type State = SrbState;

    fn horizon(&self) -> usize {
        self.reference.len()
    }

    fn error_dim(&self) -> usize {
        ERROR_DIM
    }

    fn control_dim(&self) -> usize {
        self.params.control_dim
    }

    fn step(&self, _k: usize, x: &SrbState, u: &DVector<f64>) -> Result<SrbState, ModelError> {
        Ok(self.params.step(x, u, &self.setup.feet, self.setup.dt))
    }

    fn linearize(
        &self,
        _k: usize,
        x: &SrbState,
        u: &DVector<f64>,
        x_next: &SrbState,
    ) -> Result<LinearizedStep, ModelError> {
        self.params.linearize(x, u, x_next, &self.setup.feet, self.setup.dt)
    }

    fn state_error(&self, x: &SrbState, nominal: &SrbState) -> Result<DVector<f64>, ModelError> {
        let e = dynamics::state_error(x, nominal)?;
        Ok(DVector::from_column_slice(e.as_slice()))
    }

    fn stage_cost(&self, k: usize, x: &SrbState, u: &DVector<f64>) -> CostExpansion {
        stage_cost(
            x,
            u,
            &self.reference[k],
            &self.setup.nominal_controls[k],
            &self.setup.weights,
        )
    }

    fn stage_cost_value(&self, k: usize, x: &SrbState, u: &DVector<f64>) -> f64 {
        stage_cost_value(
            x,
            u,
            &self.reference[k],
            &self.setup.nominal_controls[k],
            &self.setup.weights,
        )
    }

    fn terminal_cost(&self, x: &SrbState) -> CostExpansion {
        terminal_cost(
            x,
            self.reference.last().expect("nonempty reference"),
            &self.setup.weights,
        )
    }

    fn terminal_cost_value(&self, x: &SrbState) -> f64 {
        terminal_cost_value(
            x,
            self.reference.last().expect("nonempty reference"),
            &self.setup.weights,
        )
    }

    fn constraints(&self, k: usize, _x: &SrbState, u: &DVector<f64>) -> ConstraintBlock {
        self.setup.constraints(k, u)
    }

    fn state_magnitude(&self, x: &SrbState) -> f64 {
        x.max_abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Quaternion,
    Euler,
}

fn mpc_solver_defaults() -> SolverSettings {
    SolverSettings {
        max_outer_iterations: 4,
        max_inner_iterations: 10,
        cost_tolerance: 1e-3,
        gradient_tolerance: 1e-3,
        constraint_tolerance: 1e-2,
        ..SolverSettings::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Knots `K`, so `K - 1` controls.
    pub horizon: usize,
    /// Knot spacing, s.
    pub dt: f64,
    pub weights: CostWeights,
    pub constraints: ConstraintSet,
    pub solver: SolverSettings,
    pub gait: GaitSchedule,
    pub command_limits: CommandLimits,
    /// CoM height the reference is pinned to; `None` keeps the desired pose's height.
    pub standing_height: Option<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 37,
            dt: 0.01,
            weights: CostWeights::default(),
            constraints: ConstraintSet::default(),
            solver: mpc_solver_defaults(),
            gait: GaitSchedule::stand(),
            command_limits: CommandLimits::default(),
            standing_height: None,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, model: &RobotModel) -> Result<(), ConfigError> {
        if self.horizon < 2 {
            return Err(ConfigError::invalid("mpc.horizon", "needs at least 2 knots"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::invalid("mpc.dt", "must be positive"));
        }
        self.weights.validate()?;
        self.constraints.validate(model)?;
        self.solver.validate()?;
        self.gait.validate(model.num_contacts())?;
        Ok(())
    }
}

/// Per-tick inputs from the plant.
#[derive(Clone, Debug)]
pub struct TickInput<'a> {
    pub time: f64,
    pub state: &'a SrbState,
    pub command: VelocityCommand,
    /// Current contact position per foot: pinned for stance feet, planned for swing feet.
    pub feet: &'a [Vector3<f64>],
    pub normals: &'a [Vector3<f64>],
    /// Time until the next tick; the desired pose advances by this much.
    pub period: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MpcTick {
    pub time: f64,
    /// Applied control, after clamping.
    pub control: DVector<f64>,
    pub solve_ms: f64,
    pub report: Option<ConvergenceReport>,
    pub degraded: bool,
    pub fault: Option<String>,
    /// Desired state at this tick.
    pub reference: SrbState,
    /// Stance flags the control was computed for.
    pub stance: Vec<bool>,
}

#[derive(Clone, Debug)]
struct WarmStart {
    controls: Vec<DVector<f64>>,
    stance: Vec<Vec<bool>>,
    multipliers: AlState,
}

/// Receding-horizon controller for one robot.
#[derive(Clone, Debug)]
pub struct MpcController {
    kind: ControllerKind,
    config: MpcConfig,
    model: RobotModel,
    params: SrbParams,
    limits: ContactLimits,
    wheel_torque: f64,
    solver: AlIlqr,
    anchor: Option<SrbState>,
    frame: RelativeFrame,
    warm: Option<WarmStart>,
    last_control: Option<DVector<f64>>,
    euler_hint: Option<Vector3<f64>>,
}

impl MpcController {
    pub fn new(kind: ControllerKind, model: RobotModel, config: MpcConfig) -> Result<Self, ConfigError> {
        model.validate()?;
        config.validate(&model)?;
        Ok(MpcController {
            kind,
            params: SrbParams::new(&model),
            limits: ContactLimits::new(&config.constraints, &model),
            wheel_torque: config.constraints.wheel_torque(&model),
            solver: AlIlqr::new(config.solver.clone()),
            anchor: None,
            frame: RelativeFrame::new(),
            warm: None,
            last_control: None,
            euler_hint: None,
            config,
            model,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    /// Replaces the desired pose the references are integrated from.
    pub fn set_anchor(&mut self, x: SrbState) {
        self.anchor = Some(x);
    }

    pub fn anchor(&self) -> Option<&SrbState> {
        self.anchor.as_ref()
    }

    /// Drops the warm start so the next tick starts from `ū`.
    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    pub fn heading(&self) -> Option<f64> {
        self.frame.yaw
    }

    /// One MPC step: reference, contacts, warm start, solve, first control.
    pub fn tick(&mut self, input: &TickInput) -> MpcTick {
        let cfg = self.config.clone();
        let (k_len, dt) = (cfg.horizon, cfg.dt);
        let cmd = input.command.clamped(&cfg.command_limits);
        let heading = self.frame.update(&input.state.q);
        let anchor = *self.anchor.get_or_insert_with(|| {
            let mut a = *input.state;
            if let Some(h) = cfg.standing_height {
                a.r.z = h;
            }
            a.v = Vector3::zeros();
            a.omega = Vector3::zeros();
            a
        });
        let reference = build_reference(&anchor, &cmd, k_len, dt, heading, cfg.standing_height);
        let n_feet = match self.model.variant {
            ModelVariant::FootForce => self.model.num_contacts(),
            ModelVariant::ReactionWheel => 0,
        };
        let stance: Vec<Vec<bool>> = gait_contacts(&cfg.gait, input.time, k_len - 1, dt, n_feet);
        let nominal: Vec<DVector<f64>> = stance
            .iter()
            .zip(&reference)
            .map(|(s, xr)| nominal_control(&self.model, &xr.r, input.feet, s, input.normals, &self.limits))
            .collect();
        let setup = HorizonSetup {
            dt,
            weights: cfg.weights.clone(),
            variant: self.model.variant,
            stance: stance.clone(),
            feet: input.feet.to_vec(),
            normals: input.normals.to_vec(),
            limits: self.limits.clone(),
            wheel_torque: self.wheel_torque,
            nominal_controls: nominal.clone(),
        };
        let (guess, multipliers) = self.warm_guess(&setup);

        let start = Instant::now();
        let outcome = match self.kind {
            ControllerKind::Quaternion => {
                let problem = SrbProblem {
                    params: &self.params,
                    setup: &setup,
                    reference,
                };
                self.solver
                    .solve(&problem, input.state, &guess, multipliers)
                    .map(|r| (r.trajectory.controls, r.multipliers, r.report))
            }
            ControllerKind::Euler => {
                let hint = self.euler_hint.unwrap_or_else(|| input.state.q.to_euler_zyx());
                let x0 = EulerState::from_srb_near(input.state, &hint);
                self.euler_hint = Some(x0.theta);
                let problem = EulerProblem {
                    params: &self.params,
                    setup: &setup,
                    reference: euler_reference(&reference, &x0.theta),
                };
                self.solver
                    .solve(&problem, &x0, &guess, multipliers)
                    .map(|r| (r.trajectory.controls, r.multipliers, r.report))
            }
        };
        let solve_ms = start.elapsed().as_secs_f64() * 1e3;

        let (control, report, degraded, fault) = match outcome {
            Ok((controls, mult, report)) if controls[0].iter().all(|v| v.is_finite()) => {
                let u0 = clamp_control(
                    &self.model,
                    &controls[0],
                    &stance[0],
                    input.normals,
                    &self.limits,
                    self.wheel_torque,
                );
                self.warm = Some(WarmStart {
                    controls,
                    stance: stance.clone(),
                    multipliers: mult,
                });
                (u0, Some(report), false, None)
            }
            Ok(_) => self.degrade(&nominal[0], &stance[0], input.normals, "non-finite control".to_string()),
            Err(e) => self.degrade(&nominal[0], &stance[0], input.normals, e.to_string()),
        };
        if let Some(f) = &fault {
            log::debug!("t={:.3} degraded tick: {f}", input.time);
        }
        self.last_control = Some(control.clone());
        self.anchor = Some(advance_reference(
            &anchor,
            &cmd,
            heading,
            input.period,
            cfg.standing_height,
        ));
        MpcTick {
            time: input.time,
            control,
            solve_ms,
            report,
            degraded,
            fault,
            reference: anchor,
            stance: stance[0].clone(),
        }
    }

    fn degrade(
        &mut self,
        nominal: &DVector<f64>,
        stance: &[bool],
        normals: &[Vector3<f64>],
        why: String,
    ) -> (DVector<f64>, Option<ConvergenceReport>, bool, Option<String>) {
        self.warm = None;
        let prev = self.last_control.clone().unwrap_or_else(|| nominal.clone());
        let u = clamp_control(&self.model, &prev, stance, normals, &self.limits, self.wheel_torque);
        (u, None, true, Some(why))
    }

    /// Previous solution shifted by one knot. Feet that changed contact state
    /// since that solve restart from `ū`.
    fn warm_guess(&self, setup: &HorizonSetup) -> (Vec<DVector<f64>>, Option<AlState>) {
        let n = setup.nominal_controls.len();
        let Some(warm) = &self.warm else {
            return (setup.nominal_controls.clone(), None);
        };
        if warm.controls.len() != n {
            return (setup.nominal_controls.clone(), None);
        }
        let mut controls = Vec::with_capacity(n);
        let mut lambda = Vec::with_capacity(n);
        for k in 0..n {
            let src = (k + 1).min(n - 1);
            let mut u = warm.controls[src].clone();
            if setup.variant == ModelVariant::FootForce {
                for (i, &now) in setup.stance[k].iter().enumerate() {
                    if now != warm.stance[src][i] {
                        let nom = setup.nominal_controls[k].fixed_rows::<3>(3 * i).into_owned();
                        u.fixed_rows_mut::<3>(3 * i).copy_from(&nom);
                    }
                }
            }
            controls.push(u);
            let rows = setup.constraints(k, &controls[k]).len();
            match warm.multipliers.lambda.get(src) {
                Some(l) if l.len() == rows && setup.stance[k] == warm.stance[src] => lambda.push(l.clone()),
                _ => lambda.push(DVector::zeros(rows)),
            }
        }
        let al = AlState {
            lambda,
            penalty: self.config.solver.penalty_initial,
        };
        (controls, Some(al))
    }
}
