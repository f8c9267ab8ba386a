//! ZYX Euler-angle baseline.
//!
//! Same physics as [`crate::dynamics`], but the attitude is carried as
//! `[roll, pitch, yaw]` with `θ̇ = W(θ)⁻¹ω`. The problem is solved with plain
//! vector-space iLQR: the error state is `x - x̄`, the attitude cost is a
//! quadratic on wrapped angle differences and the Jacobians are central
//! finite differences. Nothing here avoids the `1/cos(pitch)` blow-up.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::cost::{ConstraintBlock, CostExpansion, CostWeights};
use crate::dynamics::{LinearizedStep, ModelVariant, RobotModel, SrbParams, SrbState};
use crate::error::ModelError;
use crate::mpc::HorizonSetup;
use crate::quat::Quaternion;
use crate::solver::Problem;

pub const EULER_DIM: usize = 12;
pub type EulerVector = SVector<f64, EULER_DIM>;

/// Kinematic map is refused below this `|cos(pitch)|`.
pub const SINGULAR_COS: f64 = 1e-6;

/// Finite-difference step for the baseline's Jacobians.
const FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerState {
    pub r: Vector3<f64>,
    /// `[roll, pitch, yaw]`, rad.
    pub theta: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Body frame.
    pub omega: Vector3<f64>,
}

impl EulerState {
    pub fn to_vector(&self) -> EulerVector {
        let mut x = EulerVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.r);
        x.fixed_rows_mut::<3>(3).copy_from(&self.theta);
        x.fixed_rows_mut::<3>(6).copy_from(&self.v);
        x.fixed_rows_mut::<3>(9).copy_from(&self.omega);
        x
    }

    pub fn from_vector(x: &EulerVector) -> Self {
        EulerState {
            r: x.fixed_rows::<3>(0).into_owned(),
            theta: x.fixed_rows::<3>(3).into_owned(),
            v: x.fixed_rows::<3>(6).into_owned(),
            omega: x.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn from_srb(x: &SrbState) -> Self {
        EulerState {
            r: x.r,
            theta: x.q.to_euler_zyx(),
            v: x.v,
            omega: x.omega,
        }
    }

    /// Like [`Self::from_srb`], with roll and yaw unwrapped to lie within `π` of `near`.
    pub fn from_srb_near(x: &SrbState, near: &Vector3<f64>) -> Self {
        let mut e = Self::from_srb(x);
        e.theta = unwrap_near(&e.theta, near);
        e
    }

    pub fn to_srb(&self) -> SrbState {
        SrbState {
            r: self.r,
            q: attitude(&self.theta),
            v: self.v,
            omega: self.omega,
        }
    }
}

pub fn attitude(theta: &Vector3<f64>) -> Quaternion {
    Quaternion::from_euler_zyx(theta[0], theta[1], theta[2])
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn unwrap_near(theta: &Vector3<f64>, near: &Vector3<f64>) -> Vector3<f64> {
    theta.zip_map(near, |a, n| n + wrap_angle(a - n))
}

/// `W(θ)` with `ω = W(θ) θ̇` for ZYX angles.
pub fn rate_matrix(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = theta[0].sin_cos();
    let (sp, cp) = theta[1].sin_cos();
    Matrix3::new(1.0, 0.0, -sp, 0.0, cr, sr * cp, 0.0, -sr, cr * cp)
}

/// `W(θ)⁻¹`, so `θ̇ = W(θ)⁻¹ ω`.
pub fn rate_matrix_inverse(theta: &Vector3<f64>) -> Result<Matrix3<f64>, ModelError> {
    let (sr, cr) = theta[0].sin_cos();
    let (sp, cp) = theta[1].sin_cos();
    if cp.abs() < SINGULAR_COS {
        return Err(ModelError::KinematicSingularity { cos_pitch: cp });
    }
    let tp = sp / cp;
    Ok(Matrix3::new(1.0, sr * tp, cr * tp, 0.0, cr, -sr, 0.0, sr / cp, cr / cp))
}

/// Continuous dynamics on the Euler state.
pub fn euler_vector_field(
    params: &SrbParams,
    x: &EulerVector,
    u: &DVector<f64>,
    feet: &[Vector3<f64>],
) -> Result<EulerVector, ModelError> {
    let theta = x.fixed_rows::<3>(3).into_owned();
    let w = x.fixed_rows::<3>(9).into_owned();
    let r = x.fixed_rows::<3>(0).into_owned();
    let rot = attitude(&theta).to_rotation_matrix();
    let (force, torque) = match params.variant {
        ModelVariant::FootForce => {
            let mut f_sum = Vector3::zeros();
            let mut m_world = Vector3::zeros();
            for (i, p) in feet.iter().enumerate() {
                let f = Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
                f_sum += f;
                m_world += (p - r).cross(&f);
            }
            (f_sum, rot.transpose() * m_world)
        }
        ModelVariant::ReactionWheel => (Vector3::zeros(), Vector3::new(u[0], u[1], 0.0)),
    };
    let mut xd = EulerVector::zeros();
    xd.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(6));
    xd.fixed_rows_mut::<3>(3).copy_from(&(rate_matrix_inverse(&theta)? * w));
    xd.fixed_rows_mut::<3>(6)
        .copy_from(&(force / params.mass - params.gravity));
    xd.fixed_rows_mut::<3>(9)
        .copy_from(&(params.inertia_inv * (torque - w.cross(&(params.inertia * w)))));
    Ok(xd)
}

/// `ẋ` for the Euler-angle state. Fails at `|cos(pitch)| < 1e-6`.
pub fn euler_dynamics(
    model: &RobotModel,
    x: &EulerState,
    u: &DVector<f64>,
    feet: &[Vector3<f64>],
) -> Result<EulerVector, ModelError> {
    let m = model.control_dim();
    if u.len() != m {
        return Err(ModelError::DimensionMismatch {
            what: "control",
            expected: m,
            got: u.len(),
        });
    }
    if model.variant == ModelVariant::FootForce && feet.len() != model.num_contacts() {
        return Err(ModelError::DimensionMismatch {
            what: "contact positions",
            expected: model.num_contacts(),
            got: feet.len(),
        });
    }
    euler_vector_field(&SrbParams::new(model), &x.to_vector(), u, feet)
}

/// Explicit midpoint step, the same scheme as the quaternion model.
pub fn euler_step(
    params: &SrbParams,
    x: &EulerVector,
    u: &DVector<f64>,
    feet: &[Vector3<f64>],
    dt: f64,
) -> Result<EulerVector, ModelError> {
    let k1 = euler_vector_field(params, x, u, feet)?;
    let xm = x + 0.5 * dt * k1;
    Ok(x + dt * euler_vector_field(params, &xm, u, feet)?)
}

/// One horizon of the Euler-angle MPC problem.
pub struct EulerProblem<'a> {
    pub params: &'a SrbParams,
    pub setup: &'a HorizonSetup,
    pub reference: Vec<EulerState>,
}

impl EulerProblem<'_> {
    fn angle_weights(w: &CostWeights) -> f64 {
        // ½(w_q/4)θ² matches w_q(1 - cos(θ/2)) to second order
        0.25 * w.w_q
    }

    fn state_terms(&self, x: &EulerState, xbar: &EulerState, w: &CostWeights, out: &mut CostExpansion) {
        let wa = Self::angle_weights(w);
        let dth = (x.theta - xbar.theta).map(wrap_angle);
        let blocks: [(usize, Vector3<f64>, [f64; 3]); 4] = [
            (0, x.r - xbar.r, w.w_r),
            (3, dth, [wa; 3]),
            (6, x.v - xbar.v, w.w_v),
            (9, x.omega - xbar.omega, w.w_omega),
        ];
        for (off, d, wt) in blocks {
            for i in 0..3 {
                out.value += 0.5 * wt[i] * d[i] * d[i];
                out.lx[off + i] = wt[i] * d[i];
                out.lxx[(off + i, off + i)] = wt[i];
            }
        }
    }
}

impl Problem for EulerProblem<'_> {
    type State = EulerState;

    fn horizon(&self) -> usize {
        self.reference.len()
    }

    fn error_dim(&self) -> usize {
        EULER_DIM
    }

    fn control_dim(&self) -> usize {
        self.params.control_dim
    }

    fn step(&self, _k: usize, x: &EulerState, u: &DVector<f64>) -> Result<EulerState, ModelError> {
        let next = euler_step(self.params, &x.to_vector(), u, &self.setup.feet, self.setup.dt)?;
        Ok(EulerState::from_vector(&next))
    }

    fn linearize(
        &self,
        _k: usize,
        x: &EulerState,
        u: &DVector<f64>,
        _x_next: &EulerState,
    ) -> Result<LinearizedStep, ModelError> {
        let (p, feet, dt) = (self.params, &self.setup.feet, self.setup.dt);
        let xv = x.to_vector();
        let m = u.len();
        let mut a = DMatrix::zeros(EULER_DIM, EULER_DIM);
        let mut b = DMatrix::zeros(EULER_DIM, m);
        for i in 0..EULER_DIM {
            let mut xp = xv;
            let mut xm = xv;
            xp[i] += FD_STEP;
            xm[i] -= FD_STEP;
            let d = (euler_step(p, &xp, u, feet, dt)? - euler_step(p, &xm, u, feet, dt)?) / (2.0 * FD_STEP);
            a.column_mut(i).copy_from(&d);
        }
        for j in 0..m {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += FD_STEP;
            um[j] -= FD_STEP;
            let d = (euler_step(p, &xv, &up, feet, dt)? - euler_step(p, &xv, &um, feet, dt)?) / (2.0 * FD_STEP);
            b.column_mut(j).copy_from(&d);
        }
        Ok(LinearizedStep { a, b })
    }

    fn state_error(&self, x: &EulerState, nominal: &EulerState) -> Result<DVector<f64>, ModelError> {
        let d = x.to_vector() - nominal.to_vector();
        Ok(DVector::from_column_slice(d.as_slice()))
    }

    fn stage_cost(&self, k: usize, x: &EulerState, u: &DVector<f64>) -> CostExpansion {
        let w = &self.setup.weights;
        let mut out = CostExpansion::zeros(EULER_DIM, u.len());
        self.state_terms(x, &self.reference[k], w, &mut out);
        let du = u - &self.setup.nominal_controls[k];
        out.value += 0.5 * w.r_u * du.norm_squared();
        out.lu = w.r_u * du;
        out.luu.fill_diagonal(w.r_u);
        out
    }

    fn stage_cost_value(&self, k: usize, x: &EulerState, u: &DVector<f64>) -> f64 {
        self.stage_cost(k, x, u).value
    }

    fn terminal_cost(&self, x: &EulerState) -> CostExpansion {
        let mut out = CostExpansion::zeros(EULER_DIM, 0);
        let xbar = self.reference.last().expect("nonempty reference");
        self.state_terms(x, xbar, &self.setup.weights.terminal(), &mut out);
        out
    }

    fn terminal_cost_value(&self, x: &EulerState) -> f64 {
        self.terminal_cost(x).value
    }

    fn constraints(&self, k: usize, _x: &EulerState, u: &DVector<f64>) -> ConstraintBlock {
        self.setup.constraints(k, u)
    }

    fn state_magnitude(&self, x: &EulerState) -> f64 {
        x.to_vector().amax()
    }
}

/// Converts quaternion references to a continuous sequence of Euler states,
/// the first unwrapped against `start`.
pub fn euler_reference(reference: &[SrbState], start: &Vector3<f64>) -> Vec<EulerState> {
    let mut near = *start;
    reference
        .iter()
        .map(|x| {
            let e = EulerState::from_srb_near(x, &near);
            near = e.theta;
            e
        })
        .collect()
}
