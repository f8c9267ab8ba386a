//! Augmented-Lagrangian iLQR over error states.
//!
//! The inner loop is iLQR on the augmented Lagrangian
//! `J + Σ λᵀc + ½ cᵀI_μc`; the backward pass linearizes in error coordinates
//! so the quaternion block contributes three columns, not four. The outer loop
//! updates multipliers and grows the penalty until the constraints hold.

mod backward;
mod problem;

pub use backward::{
    backward_pass, penalty_diagonal, q_expansion, BackwardPass, GainSchedule, QExpansion, ValueExpansion,
};
pub use problem::{LinearQuadratic, Problem};

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cost::{ConstraintBlock, ConstraintKind, CostExpansion};
use crate::dynamics::LinearizedStep;
use crate::error::SolverError;

/// States whose largest entry exceeds this are treated as a diverged rollout.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
    pub constraint_tolerance: f64,
    pub penalty_initial: f64,
    pub penalty_scale: f64,
    pub penalty_max: f64,
    pub regularization_initial: f64,
    /// First nonzero regularization tried after a failure at `ρ = 0`.
    pub regularization_min: f64,
    pub regularization_scale: f64,
    pub regularization_max: f64,
    pub line_search_ratio: f64,
    pub line_search_min_step: f64,
    /// Minimum actual/expected decrease ratio for accepting a step.
    pub line_search_accept: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_outer_iterations: 10,
            max_inner_iterations: 50,
            cost_tolerance: 1e-4,
            gradient_tolerance: 1e-5,
            constraint_tolerance: 1e-4,
            penalty_initial: 10.0,
            penalty_scale: 10.0,
            penalty_max: 1e8,
            regularization_initial: 0.0,
            regularization_min: 1e-6,
            regularization_scale: 10.0,
            regularization_max: 1e8,
            line_search_ratio: 0.5,
            line_search_min_step: 1.0 / 64.0,
            line_search_accept: 1e-4,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), crate::ConfigError> {
        use crate::ConfigError;
        let positive = [
            ("max_outer_iterations", self.max_outer_iterations as f64),
            ("max_inner_iterations", self.max_inner_iterations as f64),
            ("cost_tolerance", self.cost_tolerance),
            ("gradient_tolerance", self.gradient_tolerance),
            ("constraint_tolerance", self.constraint_tolerance),
            ("penalty_initial", self.penalty_initial),
            ("penalty_max", self.penalty_max),
            ("regularization_min", self.regularization_min),
            ("regularization_max", self.regularization_max),
            ("line_search_min_step", self.line_search_min_step),
            ("line_search_accept", self.line_search_accept),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(ConfigError::invalid(format!("solver.{name}"), "must be positive"));
            }
        }
        for (name, v) in [
            ("penalty_scale", self.penalty_scale),
            ("regularization_scale", self.regularization_scale),
        ] {
            if !(v > 1.0) {
                return Err(ConfigError::invalid(format!("solver.{name}"), "must exceed 1"));
            }
        }
        if !(self.line_search_ratio > 0.0 && self.line_search_ratio < 1.0) {
            return Err(ConfigError::invalid("solver.line_search_ratio", "must lie in (0, 1)"));
        }
        if !(self.regularization_initial >= 0.0) {
            return Err(ConfigError::invalid(
                "solver.regularization_initial",
                "must be nonnegative",
            ));
        }
        Ok(())
    }
}

/// Multipliers per knot and the shared penalty weight.
#[derive(Clone, Debug, PartialEq)]
pub struct AlState {
    pub lambda: Vec<DVector<f64>>,
    pub penalty: f64,
}

impl AlState {
    pub fn new(penalty: f64) -> Self {
        AlState {
            lambda: Vec::new(),
            penalty,
        }
    }

    fn ensure_shapes(&mut self, cons: &[ConstraintBlock]) {
        self.lambda.resize(cons.len(), DVector::zeros(0));
        for (l, c) in self.lambda.iter_mut().zip(cons) {
            if l.len() != c.len() {
                *l = DVector::zeros(c.len());
            }
        }
    }

    /// `λ ← max(0, λ + μc)` for inequalities, `λ ← λ + μc` for equalities.
    pub fn update_multipliers(&mut self, cons: &[ConstraintBlock]) {
        self.ensure_shapes(cons);
        let mu = self.penalty;
        for (l, c) in self.lambda.iter_mut().zip(cons) {
            for i in 0..c.len() {
                let v = l[i] + mu * c.c[i];
                l[i] = match c.kinds[i] {
                    ConstraintKind::Inequality => v.max(0.0),
                    ConstraintKind::Equality => v,
                };
            }
        }
    }

    /// `λᵀc + ½cᵀI_μc` for one knot.
    pub fn penalty_term(&self, k: usize, block: &ConstraintBlock) -> f64 {
        if block.is_empty() {
            return 0.0;
        }
        let zero;
        let lambda = match self.lambda.get(k) {
            Some(l) if l.len() == block.len() => l,
            _ => {
                zero = DVector::zeros(block.len());
                &zero
            }
        };
        let i_mu = penalty_diagonal(block, lambda, self.penalty);
        lambda.dot(&block.c) + 0.5 * block.c.dot(&i_mu.component_mul(&block.c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub controls: Vec<DVector<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Iteration caps reached; the best iterate so far is returned.
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Tracking cost `J` without the AL terms.
    pub cost: f64,
    pub max_violation: f64,
    /// `max_k |Q_u|` at the last backward pass.
    pub max_gradient: f64,
    pub penalty: f64,
    pub regularization: f64,
    pub solve_ms: f64,
}

impl ConvergenceReport {
    /// One `key=value` line for text logs.
    pub fn to_log_line(&self) -> String {
        format!(
            "status={:?} outer={} inner={} cost={:.6e} violation={:.3e} gradient={:.3e} penalty={:.1e} reg={:.1e} solve_ms={:.3}",
            self.status,
            self.outer_iterations,
            self.inner_iterations,
            self.cost,
            self.max_violation,
            self.max_gradient,
            self.penalty,
            self.regularization,
            self.solve_ms
        )
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult<S> {
    pub trajectory: Trajectory<S>,
    pub gains: GainSchedule,
    pub multipliers: AlState,
    pub report: ConvergenceReport,
}

/// Rolls `controls` out from `x0` without feedback.
pub fn rollout<P: Problem>(
    problem: &P,
    x0: &P::State,
    controls: &[DVector<f64>],
) -> Result<Trajectory<P::State>, SolverError> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for (k, u) in controls.iter().enumerate() {
        let next = problem.step(k, &states[k], u)?;
        check_magnitude(problem, &next, k + 1)?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
    })
}

fn check_magnitude<P: Problem>(problem: &P, x: &P::State, knot: usize) -> Result<(), SolverError> {
    let m = problem.state_magnitude(x);
    if !(m <= DIVERGENCE_BOUND) {
        return Err(SolverError::RolloutDiverged { knot, magnitude: m });
    }
    Ok(())
}

/// Tracking cost `J` of a trajectory.
pub fn trajectory_cost<P: Problem>(problem: &P, traj: &Trajectory<P::State>) -> f64 {
    let n = traj.controls.len();
    let stage: f64 = (0..n)
        .map(|k| problem.stage_cost_value(k, &traj.states[k], &traj.controls[k]))
        .sum();
    stage + problem.terminal_cost_value(&traj.states[n])
}

/// Augmented Lagrangian of a trajectory plus its constraint blocks.
pub fn augmented_cost<P: Problem>(
    problem: &P,
    traj: &Trajectory<P::State>,
    al: &AlState,
) -> (f64, Vec<ConstraintBlock>) {
    let cons: Vec<ConstraintBlock> = (0..traj.controls.len())
        .map(|k| problem.constraints(k, &traj.states[k], &traj.controls[k]))
        .collect();
    let pen: f64 = cons.iter().enumerate().map(|(k, c)| al.penalty_term(k, c)).sum();
    (trajectory_cost(problem, traj) + pen, cons)
}

pub fn max_violation(cons: &[ConstraintBlock]) -> f64 {
    cons.iter().map(ConstraintBlock::max_violation).fold(0.0, f64::max)
}

/// Closed-loop rollout `u_k = ū_k + α d_k + K_k (x_k ⊖ x̄_k)`.
pub fn forward_pass<P: Problem>(
    problem: &P,
    nominal: &Trajectory<P::State>,
    gains: &GainSchedule,
    alpha: f64,
) -> Result<Trajectory<P::State>, SolverError> {
    let n = nominal.controls.len();
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    states.push(nominal.states[0].clone());
    for k in 0..n {
        let dx = problem.state_error(&states[k], &nominal.states[k])?;
        let u = &nominal.controls[k] + alpha * &gains.feedforward[k] + &gains.feedback[k] * dx;
        let next = problem.step(k, &states[k], &u)?;
        check_magnitude(problem, &next, k + 1)?;
        controls.push(u);
        states.push(next);
    }
    Ok(Trajectory { states, controls })
}

/// Reusable solver instance. Holds settings and per-knot scratch storage.
#[derive(Clone, Debug, Default)]
pub struct AlIlqr {
    pub settings: SolverSettings,
    lins: Vec<LinearizedStep>,
    costs: Vec<CostExpansion>,
}

impl AlIlqr {
    pub fn new(settings: SolverSettings) -> Self {
        AlIlqr {
            settings,
            lins: Vec::new(),
            costs: Vec::new(),
        }
    }

    /// Solves from the initial state `x0` and a control guess of length `K-1`.
    pub fn solve<P: Problem>(
        &mut self,
        problem: &P,
        x0: &P::State,
        initial_controls: &[DVector<f64>],
        initial_multipliers: Option<AlState>,
    ) -> Result<SolveResult<P::State>, SolverError> {
        let start = Instant::now();
        let s = self.settings.clone();
        let n = problem.horizon().saturating_sub(1);
        if initial_controls.len() != n {
            return Err(SolverError::BadInitialGuess {
                expected: n,
                got: initial_controls.len(),
            });
        }
        let mut traj = rollout(problem, x0, initial_controls)?;
        let mut al = initial_multipliers.unwrap_or_else(|| AlState::new(s.penalty_initial));
        al.penalty = al.penalty.max(s.penalty_initial);
        let (mut obj, mut cons) = augmented_cost(problem, &traj, &al);
        al.ensure_shapes(&cons);

        let mut reg = s.regularization_initial;
        let mut inner_total = 0;
        let mut outer = 0;
        let mut last_gains = GainSchedule::default();
        let mut max_grad = f64::INFINITY;
        let mut status = SolveStatus::MaxIterations;

        while outer < s.max_outer_iterations {
            outer += 1;
            let mut inner_converged = false;
            for _ in 0..s.max_inner_iterations {
                inner_total += 1;
                self.expand(problem, &traj)?;
                let bp = loop {
                    match backward_pass(&self.lins, &self.costs, &self.terminal(problem, &traj), &cons, &al, reg) {
                        Ok(bp) => break bp,
                        Err(SolverError::NonPositiveDefinite { knot }) => {
                            reg = bump(reg, &s);
                            if reg > s.regularization_max {
                                return Err(SolverError::NonPositiveDefinite { knot });
                            }
                        }
                        Err(e) => return Err(e),
                    }
                };
                max_grad = bp.max_qu;
                last_gains = bp.gains.clone();
                if bp.max_qu < s.gradient_tolerance || -bp.expected_change(1.0) < 1e-12 {
                    inner_converged = true;
                    break;
                }

                let mut alpha = 1.0;
                let mut accepted = None;
                while alpha >= s.line_search_min_step {
                    if let Ok(candidate) = forward_pass(problem, &traj, &bp.gains, alpha) {
                        let (cand_obj, cand_cons) = augmented_cost(problem, &candidate, &al);
                        let expected = bp.expected_change(alpha);
                        let actual = cand_obj - obj;
                        if cand_obj.is_finite() && expected < 0.0 && actual / expected > s.line_search_accept {
                            accepted = Some((candidate, cand_obj, cand_cons));
                            break;
                        }
                    }
                    alpha *= s.line_search_ratio;
                }
                match accepted {
                    Some((candidate, cand_obj, cand_cons)) => {
                        let change = obj - cand_obj;
                        traj = candidate;
                        obj = cand_obj;
                        cons = cand_cons;
                        reg = if reg <= s.regularization_min {
                            0.0_f64.max(s.regularization_initial)
                        } else {
                            reg / s.regularization_scale
                        };
                        if change.abs() < s.cost_tolerance {
                            inner_converged = true;
                            break;
                        }
                    }
                    None => {
                        reg = bump(reg, &s);
                        if reg > s.regularization_max {
                            // no descent direction left at this penalty
                            inner_converged = true;
                            reg = s.regularization_max;
                            break;
                        }
                    }
                }
            }

            let violation = max_violation(&cons);
            if inner_converged && violation <= s.constraint_tolerance {
                status = SolveStatus::Converged;
                break;
            }
            if outer == s.max_outer_iterations {
                break;
            }
            al.update_multipliers(&cons);
            al.penalty = (al.penalty * s.penalty_scale).min(s.penalty_max);
            let (o, c) = augmented_cost(problem, &traj, &al);
            obj = o;
            cons = c;
        }

        let report = ConvergenceReport {
            status,
            outer_iterations: outer,
            inner_iterations: inner_total,
            cost: trajectory_cost(problem, &traj),
            max_violation: max_violation(&cons),
            max_gradient: max_grad,
            penalty: al.penalty,
            regularization: reg,
            solve_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        Ok(SolveResult {
            trajectory: traj,
            gains: last_gains,
            multipliers: al,
            report,
        })
    }

    fn expand<P: Problem>(&mut self, problem: &P, traj: &Trajectory<P::State>) -> Result<(), SolverError> {
        let n = traj.controls.len();
        self.lins.clear();
        self.costs.clear();
        for k in 0..n {
            let (x, u) = (&traj.states[k], &traj.controls[k]);
            self.lins.push(problem.linearize(k, x, u, &traj.states[k + 1])?);
            self.costs.push(problem.stage_cost(k, x, u));
        }
        Ok(())
    }

    fn terminal<P: Problem>(&self, problem: &P, traj: &Trajectory<P::State>) -> CostExpansion {
        problem.terminal_cost(traj.states.last().expect("trajectory has at least one state"))
    }
}

fn bump(reg: f64, s: &SolverSettings) -> f64 {
    (reg * s.regularization_scale).max(s.regularization_min)
}
