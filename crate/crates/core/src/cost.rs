//! Tracking costs over the error state and the contact constraints handed to
//! the augmented-Lagrangian solver.
//!
//! The attitude term is `w_q (1 - |q̄ᵀq|)`, which is monotonic in geodesic
//! distance and blind to the quaternion sign. Its tangent-space gradient is
//! `-sign(q̄ᵀq) q̄ᵀ G(q)` and its Hessian `|q̄ᵀq| I3`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{RobotModel, SrbState, ERROR_DIM};
use crate::error::ConfigError;
use crate::quat::{attitude_jacobian, Quaternion};

/// Below this `|q̄ᵀq|` the sign of the attitude gradient is undefined.
pub const AMBIGUOUS_DOT: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub w_r: [f64; 3],
    pub w_q: f64,
    pub w_v: [f64; 3],
    pub w_omega: [f64; 3],
    /// Diagonal control weight, applied to every control channel.
    pub r_u: f64,
    /// Terminal weights are the stage weights scaled by this factor.
    pub terminal_scale: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w_r: [5.0, 5.0, 10.0],
            w_q: 30.0,
            w_v: [1.0, 1.0, 1.0],
            w_omega: [0.4, 0.4, 0.4],
            r_u: 1e-4,
            terminal_scale: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = self
            .w_r
            .iter()
            .chain(&self.w_v)
            .chain(&self.w_omega)
            .chain([&self.w_q, &self.terminal_scale]);
        for w in all {
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(ConfigError::invalid(
                    "weights",
                    "weights must be finite and nonnegative",
                ));
            }
        }
        if !(self.r_u > 0.0) {
            return Err(ConfigError::invalid("weights.r_u", "control weight must be positive"));
        }
        Ok(())
    }

    pub fn terminal(&self) -> CostWeights {
        let s = self.terminal_scale;
        CostWeights {
            w_r: self.w_r.map(|w| w * s),
            w_q: self.w_q * s,
            w_v: self.w_v.map(|w| w * s),
            w_omega: self.w_omega.map(|w| w * s),
            ..self.clone()
        }
    }
}

/// Value, gradient and Hessian blocks of one cost term in error coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CostExpansion {
    pub value: f64,
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    pub lux: DMatrix<f64>,
}

impl CostExpansion {
    pub fn zeros(nx: usize, nu: usize) -> Self {
        CostExpansion {
            value: 0.0,
            lx: DVector::zeros(nx),
            lu: DVector::zeros(nu),
            lxx: DMatrix::zeros(nx, nx),
            luu: DMatrix::zeros(nu, nu),
            lux: DMatrix::zeros(nu, nx),
        }
    }
}

/// `1 - |q̄ᵀq|`.
pub fn quat_cost(q: &Quaternion, qbar: &Quaternion) -> f64 {
    1.0 - qbar.dot(q).abs()
}

/// Sign of `q̄ᵀq`, or `Err(+1)` when the dot product sits on the 90° ridge.
pub fn attitude_sign(q: &Quaternion, qbar: &Quaternion) -> Result<f64, f64> {
    let d = qbar.dot(q);
    if d.abs() < AMBIGUOUS_DOT {
        Err(1.0)
    } else {
        Ok(d.signum())
    }
}

fn resolved_sign(q: &Quaternion, qbar: &Quaternion) -> f64 {
    attitude_sign(q, qbar).unwrap_or_else(|s| {
        log::warn!("attitude cost sign is ambiguous (|q̄ᵀq| < {AMBIGUOUS_DOT:e}); using +1");
        s
    })
}

pub fn quat_cost_gradient(q: &Quaternion, qbar: &Quaternion) -> Vector3<f64> {
    -resolved_sign(q, qbar) * (attitude_jacobian(q).transpose() * qbar.as_vector())
}

pub fn quat_cost_hessian(q: &Quaternion, qbar: &Quaternion) -> Matrix3<f64> {
    Matrix3::identity() * (resolved_sign(q, qbar) * qbar.dot(q))
}

fn quad(w: &[f64; 3], d: &Vector3<f64>) -> f64 {
    0.5 * (w[0] * d.x * d.x + w[1] * d.y * d.y + w[2] * d.z * d.z)
}

fn set_diag(m: &mut DMatrix<f64>, at: usize, w: &[f64; 3]) {
    for i in 0..3 {
        m[(at + i, at + i)] = w[i];
    }
}

fn set_grad(g: &mut DVector<f64>, at: usize, w: &[f64; 3], d: &Vector3<f64>) {
    for i in 0..3 {
        g[at + i] = w[i] * d[i];
    }
}

fn state_terms(x: &SrbState, xbar: &SrbState, w: &CostWeights, out: &mut CostExpansion) {
    let dr = x.r - xbar.r;
    let dv = x.v - xbar.v;
    let dw = x.omega - xbar.omega;
    out.value += quad(&w.w_r, &dr) + w.w_q * quat_cost(&x.q, &xbar.q) + quad(&w.w_v, &dv) + quad(&w.w_omega, &dw);

    set_grad(&mut out.lx, 0, &w.w_r, &dr);
    let gq = w.w_q * quat_cost_gradient(&x.q, &xbar.q);
    out.lx.rows_mut(3, 3).copy_from(&gq);
    set_grad(&mut out.lx, 6, &w.w_v, &dv);
    set_grad(&mut out.lx, 9, &w.w_omega, &dw);

    set_diag(&mut out.lxx, 0, &w.w_r);
    let hq = w.w_q * quat_cost_hessian(&x.q, &xbar.q);
    out.lxx.view_mut((3, 3), (3, 3)).copy_from(&hq);
    set_diag(&mut out.lxx, 6, &w.w_v);
    set_diag(&mut out.lxx, 9, &w.w_omega);
}

/// Stage cost `½δrᵀW_rδr + w_q(1-|q̄ᵀq|) + ½δvᵀW_vδv + ½δωᵀW_ωδω + ½δuᵀRδu`
/// with its error-state expansion about `(x, u)`.
pub fn stage_cost(
    x: &SrbState,
    u: &DVector<f64>,
    xbar: &SrbState,
    ubar: &DVector<f64>,
    weights: &CostWeights,
) -> CostExpansion {
    let m = u.len();
    let mut out = CostExpansion::zeros(ERROR_DIM, m);
    state_terms(x, xbar, weights, &mut out);
    let du = u - ubar;
    out.value += 0.5 * weights.r_u * du.norm_squared();
    out.lu = weights.r_u * du;
    out.luu.fill_diagonal(weights.r_u);
    out
}

/// Terminal cost: state terms only, with weights scaled by `terminal_scale`.
pub fn terminal_cost(x: &SrbState, xbar: &SrbState, weights: &CostWeights) -> CostExpansion {
    let mut out = CostExpansion::zeros(ERROR_DIM, 0);
    state_terms(x, xbar, &weights.terminal(), &mut out);
    out
}

/// Value-only variant of [`stage_cost`] used in line searches.
pub fn stage_cost_value(x: &SrbState, u: &DVector<f64>, xbar: &SrbState, ubar: &DVector<f64>, w: &CostWeights) -> f64 {
    quad(&w.w_r, &(x.r - xbar.r))
        + w.w_q * quat_cost(&x.q, &xbar.q)
        + quad(&w.w_v, &(x.v - xbar.v))
        + quad(&w.w_omega, &(x.omega - xbar.omega))
        + 0.5 * w.r_u * (u - ubar).norm_squared()
}

pub fn terminal_cost_value(x: &SrbState, xbar: &SrbState, w: &CostWeights) -> f64 {
    let t = w.terminal();
    quad(&t.w_r, &(x.r - xbar.r))
        + t.w_q * quat_cost(&x.q, &xbar.q)
        + quad(&t.w_v, &(x.v - xbar.v))
        + quad(&t.w_omega, &(x.omega - xbar.omega))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// `c ≤ 0`
    Inequality,
    /// `c = 0`
    Equality,
}

/// Residuals and Jacobians of the constraints at one knot.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBlock {
    pub c: DVector<f64>,
    /// Jacobian with respect to the error state (zero for contact constraints).
    pub c_x: DMatrix<f64>,
    pub c_u: DMatrix<f64>,
    pub kinds: Vec<ConstraintKind>,
}

impl ConstraintBlock {
    pub fn empty(nx: usize, nu: usize) -> Self {
        ConstraintBlock {
            c: DVector::zeros(0),
            c_x: DMatrix::zeros(0, nx),
            c_u: DMatrix::zeros(0, nu),
            kinds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Largest violation: `max(c, 0)` for inequalities, `|c|` for equalities.
    pub fn max_violation(&self) -> f64 {
        self.c
            .iter()
            .zip(&self.kinds)
            .map(|(c, k)| match k {
                ConstraintKind::Inequality => c.max(0.0),
                ConstraintKind::Equality => c.abs(),
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSet {
    /// Friction coefficient of the four-sided pyramid.
    pub mu: f64,
    pub f_min: f64,
    /// Upper normal-force bound; `None` means twice the robot weight.
    pub f_max: Option<f64>,
    /// Wheel torque bound; `None` uses the robot model's limit.
    pub wheel_torque: Option<f64>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            mu: 0.6,
            f_min: 0.0,
            f_max: None,
            wheel_torque: None,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self, model: &RobotModel) -> Result<(), ConfigError> {
        if !(self.mu > 0.0) {
            return Err(ConfigError::invalid("constraints.mu", "must be positive"));
        }
        if !(self.f_min >= 0.0) {
            return Err(ConfigError::invalid("constraints.f_min", "must be nonnegative"));
        }
        if !(self.f_max(model) > self.f_min) {
            return Err(ConfigError::invalid("constraints.f_max", "must exceed f_min"));
        }
        if !(self.wheel_torque(model) >= 0.0) {
            return Err(ConfigError::invalid("constraints.wheel_torque", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn f_max(&self, model: &RobotModel) -> f64 {
        self.f_max.unwrap_or(2.0 * model.weight())
    }

    pub fn wheel_torque(&self, model: &RobotModel) -> f64 {
        self.wheel_torque.unwrap_or(model.max_wheel_torque)
    }
}

/// Orthonormal tangent pair `(t1, t2)` for a contact normal. For `n = +z`
/// this is `(x, y)`.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let n = n.normalize();
    let a = Vector3::y().cross(&n);
    let t1 = if a.norm() > 0.5 {
        a.normalize()
    } else {
        n.cross(&Vector3::x()).normalize()
    };
    (t1, n.cross(&t1))
}

/// Resolved numeric limits for one constraint evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactLimits {
    pub mu: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl ContactLimits {
    pub fn new(set: &ConstraintSet, model: &RobotModel) -> Self {
        ContactLimits {
            mu: set.mu,
            f_min: set.f_min,
            f_max: set.f_max(model),
        }
    }
}

/// Rows per stance foot and per swing foot.
pub const STANCE_ROWS: usize = 6;
pub const SWING_ROWS: usize = 3;

/// Contact constraints for foot-force controls.
///
/// Row order per foot, in foot order: stance feet contribute
/// `[t1·F - μn·F, -t1·F - μn·F, t2·F - μn·F, -t2·F - μn·F, f_min - n·F, n·F - f_max] ≤ 0`,
/// swing feet contribute `F = 0`. `normals` are unit contact normals (World frame).
pub fn friction_constraints(
    u: &DVector<f64>,
    stance: &[bool],
    normals: &[Vector3<f64>],
    limits: &ContactLimits,
) -> ConstraintBlock {
    let rows: usize = stance.iter().map(|&s| if s { STANCE_ROWS } else { SWING_ROWS }).sum();
    let m = u.len();
    let mut c = DVector::zeros(rows);
    let mut c_u = DMatrix::zeros(rows, m);
    let mut kinds = Vec::with_capacity(rows);
    let mut row = 0;
    for (i, &in_stance) in stance.iter().enumerate() {
        let f = Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
        if in_stance {
            let n = normals[i];
            let (t1, t2) = tangent_basis(&n);
            let mu = limits.mu;
            let dirs = [t1 - mu * n, -t1 - mu * n, t2 - mu * n, -t2 - mu * n, -n, n];
            for (j, d) in dirs.iter().enumerate() {
                c[row + j] = d.dot(&f);
                c_u.view_mut((row + j, 3 * i), (1, 3)).copy_from(&d.transpose());
            }
            c[row + 4] += limits.f_min;
            c[row + 5] -= limits.f_max;
            kinds.extend([ConstraintKind::Inequality; STANCE_ROWS]);
            row += STANCE_ROWS;
        } else {
            for j in 0..3 {
                c[row + j] = f[j];
                c_u[(row + j, 3 * i + j)] = 1.0;
            }
            kinds.extend([ConstraintKind::Equality; SWING_ROWS]);
            row += SWING_ROWS;
        }
    }
    ConstraintBlock {
        c,
        c_x: DMatrix::zeros(rows, ERROR_DIM),
        c_u,
        kinds,
    }
}

/// Box bounds `|τ_i| ≤ τ_max` for wheel torques, rows `[τ_i - τ_max, -τ_i - τ_max]`.
pub fn torque_limit_constraints(u: &DVector<f64>, tau_max: f64) -> ConstraintBlock {
    let m = u.len();
    let mut c = DVector::zeros(2 * m);
    let mut c_u = DMatrix::zeros(2 * m, m);
    for i in 0..m {
        c[2 * i] = u[i] - tau_max;
        c[2 * i + 1] = -u[i] - tau_max;
        c_u[(2 * i, i)] = 1.0;
        c_u[(2 * i + 1, i)] = -1.0;
    }
    ConstraintBlock {
        c,
        c_x: DMatrix::zeros(2 * m, ERROR_DIM),
        c_u,
        kinds: vec![ConstraintKind::Inequality; 2 * m],
    }
}

/// Closest yaw-only attitude to `q0` under `1 - |q̄ᵀq0|`:
/// `[q0_s, 0, 0, q0_z] / sqrt(q0_s² + q0_z²)`, identity on the degenerate fiber.
pub fn landing_target(q0: &Quaternion) -> Quaternion {
    let v = q0.as_vector();
    let (s, z) = (v[0], v[3]);
    let n = (s * s + z * z).sqrt();
    if n < 1e-10 {
        return Quaternion::identity();
    }
    Quaternion::from_vector(nalgebra::Vector4::new(s / n, 0.0, 0.0, z / n))
}
