//! Single-rigid-body dynamics, explicit midpoint discretization and the
//! error-state linearization `A = E(x⁺)ᵀ ∂f/∂x E(x)`, `B = E(x⁺)ᵀ ∂f/∂u`.
//!
//! Frames: `r`, `v` and foot forces live in the World frame, `ω`, the inertia
//! and body torques in the Body frame, and `q` maps Body to World.

mod model;

pub use model::{ContactPoint, ModelVariant, RobotModel};

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::quat::{
    self, attitude_jacobian, attitude_jacobian_raw, cayley, cayley_inv, hat_vec, lmat_raw, rmat_raw,
    rotate_transpose_jacobian_raw, rotation_matrix_raw, skew, Quaternion, TangentRotation,
};

pub const STATE_DIM: usize = 13;
pub const ERROR_DIM: usize = 12;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type ErrorState = SVector<f64, ERROR_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type ErrorJacobian = SMatrix<f64, STATE_DIM, ERROR_DIM>;

/// Largest allowed gap between a supplied successor state and the rollout.
pub const REFERENCE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrbState {
    pub r: Vector3<f64>,
    pub q: Quaternion,
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl Default for SrbState {
    fn default() -> Self {
        SrbState {
            r: Vector3::zeros(),
            q: Quaternion::identity(),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }
}

impl SrbState {
    pub fn at(r: Vector3<f64>, q: Quaternion) -> Self {
        SrbState {
            r,
            q,
            ..Default::default()
        }
    }

    /// Packs to `[r q v ω]`.
    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.r);
        x.fixed_rows_mut::<4>(3).copy_from(self.q.as_vector());
        x.fixed_rows_mut::<3>(7).copy_from(&self.v);
        x.fixed_rows_mut::<3>(10).copy_from(&self.omega);
        x
    }

    /// Unpacks and renormalizes the quaternion block.
    pub fn from_vector(x: &StateVector) -> Self {
        SrbState {
            r: x.fixed_rows::<3>(0).into_owned(),
            q: Quaternion::from_vector(x.fixed_rows::<4>(3).into_owned()),
            v: x.fixed_rows::<3>(7).into_owned(),
            omega: x.fixed_rows::<3>(10).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_vector().amax()
    }
}

/// Error state `[δr, φ, δv, δω]` of `x` relative to `xbar`, with
/// `φ = cayley_inv(q̄* ⊗ q)`.
pub fn state_error(x: &SrbState, xbar: &SrbState) -> Result<ErrorState, ModelError> {
    let phi = cayley_inv(&xbar.q.conj().mul(&x.q))?;
    let mut e = ErrorState::zeros();
    e.fixed_rows_mut::<3>(0).copy_from(&(x.r - xbar.r));
    e.fixed_rows_mut::<3>(3).copy_from(&phi.0);
    e.fixed_rows_mut::<3>(6).copy_from(&(x.v - xbar.v));
    e.fixed_rows_mut::<3>(9).copy_from(&(x.omega - xbar.omega));
    Ok(e)
}

/// Inverse of [`state_error`]: `q = q̄ ⊗ cayley(φ)`, everything else additive.
pub fn retract(xbar: &SrbState, dx: &ErrorState) -> SrbState {
    let phi = TangentRotation(dx.fixed_rows::<3>(3).into_owned());
    SrbState {
        r: xbar.r + dx.fixed_rows::<3>(0),
        q: xbar.q.mul(&cayley(&phi)),
        v: xbar.v + dx.fixed_rows::<3>(6),
        omega: xbar.omega + dx.fixed_rows::<3>(9),
    }
}

/// `E(x) = blkdiag(I3, G(q), I3, I3)`.
pub fn error_state_jacobian(x: &SrbState) -> ErrorJacobian {
    error_state_jacobian_q(&x.q)
}

fn error_state_jacobian_q(q: &Quaternion) -> ErrorJacobian {
    let mut e = ErrorJacobian::zeros();
    e.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    e.fixed_view_mut::<4, 3>(3, 3).copy_from(&attitude_jacobian(q));
    e.fixed_view_mut::<3, 3>(7, 6).fill_with_identity();
    e.fixed_view_mut::<3, 3>(10, 9).fill_with_identity();
    e
}

fn check_arity(model: &RobotModel, u: &DVector<f64>, feet: &[Vector3<f64>]) -> Result<(), ModelError> {
    if u.len() != model.control_dim() {
        return Err(ModelError::DimensionMismatch {
            what: "control",
            expected: model.control_dim(),
            got: u.len(),
        });
    }
    if model.variant == ModelVariant::FootForce && feet.len() != model.num_contacts() {
        return Err(ModelError::DimensionMismatch {
            what: "feet",
            expected: model.num_contacts(),
            got: feet.len(),
        });
    }
    Ok(())
}

/// Precomputed per-model constants used in the inner loops.
#[derive(Clone, Debug)]
pub struct SrbParams {
    pub variant: ModelVariant,
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub inertia_inv: Matrix3<f64>,
    pub gravity: Vector3<f64>,
    pub control_dim: usize,
}

impl SrbParams {
    pub fn new(model: &RobotModel) -> Self {
        SrbParams {
            variant: model.variant,
            mass: model.mass,
            inertia: model.inertia_matrix(),
            inertia_inv: model.inertia_inverse(),
            gravity: model.gravity_vector(),
            control_dim: model.control_dim(),
        }
    }

    /// Continuous vector field on the raw 13-vector (`q` may be off the sphere).
    pub fn vector_field(&self, x: &StateVector, u: &DVector<f64>, feet: &[Vector3<f64>]) -> StateVector {
        let r = x.fixed_rows::<3>(0).into_owned();
        let q: Vector4<f64> = x.fixed_rows::<4>(3).into_owned();
        let v = x.fixed_rows::<3>(7).into_owned();
        let w = x.fixed_rows::<3>(10).into_owned();

        let qdot = 0.5 * lmat_raw(&q) * hat_vec(&w);
        let (force, torque) = match self.variant {
            ModelVariant::FootForce => {
                let mut f_sum = Vector3::zeros();
                let mut m_world = Vector3::zeros();
                for (i, p) in feet.iter().enumerate() {
                    let f = Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
                    f_sum += f;
                    m_world += (p - r).cross(&f);
                }
                (f_sum, rotation_matrix_raw(&q).transpose() * m_world)
            }
            ModelVariant::ReactionWheel => (Vector3::zeros(), Vector3::new(u[0], u[1], 0.0)),
        };
        let vdot = force / self.mass - self.gravity;
        let wdot = self.inertia_inv * (torque - w.cross(&(self.inertia * w)));

        let mut xd = StateVector::zeros();
        xd.fixed_rows_mut::<3>(0).copy_from(&v);
        xd.fixed_rows_mut::<4>(3).copy_from(&qdot);
        xd.fixed_rows_mut::<3>(7).copy_from(&vdot);
        xd.fixed_rows_mut::<3>(10).copy_from(&wdot);
        xd
    }

    /// Jacobians of [`Self::vector_field`] with `q` treated as a free 4-vector.
    pub fn vector_field_jacobians(
        &self,
        x: &StateVector,
        u: &DVector<f64>,
        feet: &[Vector3<f64>],
    ) -> (StateJacobian, DMatrix<f64>) {
        let r = x.fixed_rows::<3>(0).into_owned();
        let q: Vector4<f64> = x.fixed_rows::<4>(3).into_owned();
        let w = x.fixed_rows::<3>(10).into_owned();
        let m = self.control_dim;

        let mut fx = StateJacobian::zeros();
        let mut fu = DMatrix::zeros(STATE_DIM, m);

        fx.fixed_view_mut::<3, 3>(0, 7).fill_with_identity();
        fx.fixed_view_mut::<4, 4>(3, 3)
            .copy_from(&(0.5 * rmat_raw(&hat_vec(&w))));
        fx.fixed_view_mut::<4, 3>(3, 10)
            .copy_from(&(0.5 * attitude_jacobian_raw(&q)));

        let iw = self.inertia * w;
        let dwdot_dw = self.inertia_inv * (skew(&iw) - skew(&w) * self.inertia);
        fx.fixed_view_mut::<3, 3>(10, 10).copy_from(&dwdot_dw);

        match self.variant {
            ModelVariant::FootForce => {
                let rot_t = rotation_matrix_raw(&q).transpose();
                let mut m_world = Vector3::zeros();
                let mut f_skew_sum = Matrix3::zeros();
                for (i, p) in feet.iter().enumerate() {
                    let f = Vector3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]);
                    let lever = p - r;
                    m_world += lever.cross(&f);
                    f_skew_sum += skew(&f);
                    let mut blk = fu.view_mut((7, 3 * i), (3, 3));
                    blk.fill_diagonal(1.0 / self.mass);
                    let dw = self.inertia_inv * rot_t * skew(&lever);
                    fu.view_mut((10, 3 * i), (3, 3)).copy_from(&dw);
                }
                fx.fixed_view_mut::<3, 3>(10, 0)
                    .copy_from(&(self.inertia_inv * rot_t * f_skew_sum));
                fx.fixed_view_mut::<3, 4>(10, 3)
                    .copy_from(&(self.inertia_inv * rotate_transpose_jacobian_raw(&q, &m_world)));
            }
            ModelVariant::ReactionWheel => {
                fu.view_mut((10, 0), (3, 1)).copy_from(&self.inertia_inv.column(0));
                fu.view_mut((10, 1), (3, 1)).copy_from(&self.inertia_inv.column(1));
            }
        }
        (fx, fu)
    }

    /// Explicit midpoint step on the raw vector, without renormalization.
    pub fn midpoint_raw(&self, x: &StateVector, u: &DVector<f64>, feet: &[Vector3<f64>], dt: f64) -> StateVector {
        let k1 = self.vector_field(x, u, feet);
        let xm = x + 0.5 * dt * k1;
        x + dt * self.vector_field(&xm, u, feet)
    }

    /// Midpoint step followed by quaternion renormalization.
    pub fn step(&self, x: &SrbState, u: &DVector<f64>, feet: &[Vector3<f64>], dt: f64) -> SrbState {
        SrbState::from_vector(&self.midpoint_raw(&x.to_vector(), u, feet, dt))
    }

    /// Chain rule through the midpoint stage.
    pub fn midpoint_jacobians(
        &self,
        x: &StateVector,
        u: &DVector<f64>,
        feet: &[Vector3<f64>],
        dt: f64,
    ) -> (StateJacobian, DMatrix<f64>, StateVector) {
        let k1 = self.vector_field(x, u, feet);
        let xm = x + 0.5 * dt * k1;
        let (ax, bu) = self.vector_field_jacobians(x, u, feet);
        let (amx, bmu) = self.vector_field_jacobians(&xm, u, feet);
        let dxm_dx = StateJacobian::identity() + 0.5 * dt * ax;
        let fx = StateJacobian::identity() + dt * amx * dxm_dx;
        let amx_d = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, amx.as_slice());
        let fu = dt * (&amx_d * (0.5 * dt) * &bu + &bmu);
        let next = x + dt * self.vector_field(&xm, u, feet);
        (fx, fu, next)
    }

    pub fn linearize(
        &self,
        xk: &SrbState,
        uk: &DVector<f64>,
        xk1: &SrbState,
        feet: &[Vector3<f64>],
        dt: f64,
    ) -> Result<LinearizedStep, ModelError> {
        let (mut fx, mut fu, next_raw) = self.midpoint_jacobians(&xk.to_vector(), uk, feet, dt);
        let next = SrbState::from_vector(&next_raw);
        // the stepper renormalizes q; chain through q ↦ q/|q|
        let q_raw: Vector4<f64> = next_raw.fixed_rows::<4>(3).into_owned();
        let qn = q_raw / q_raw.norm();
        let dnorm = (SMatrix::<f64, 4, 4>::identity() - qn * qn.transpose()) / q_raw.norm();
        let rows = dnorm * fx.fixed_rows::<4>(3);
        fx.fixed_rows_mut::<4>(3).copy_from(&rows);
        let dnorm_d = DMatrix::from_column_slice(4, 4, dnorm.as_slice());
        let rows_u = &dnorm_d * fu.rows(3, 4);
        fu.rows_mut(3, 4).copy_from(&rows_u);
        let gap = (next.to_vector() - xk1.to_vector()).amax();
        if !(gap <= REFERENCE_TOL) {
            return Err(ModelError::ReferenceInconsistent { error: gap });
        }
        let e0 = error_state_jacobian(xk);
        let e1 = error_state_jacobian(xk1);
        let a = e1.transpose() * fx * e0;
        let e1t = DMatrix::from_column_slice(ERROR_DIM, STATE_DIM, e1.transpose().as_slice());
        let b = e1t * fu;
        Ok(LinearizedStep {
            a: DMatrix::from_column_slice(ERROR_DIM, ERROR_DIM, a.as_slice()),
            b,
        })
    }
}

/// Error-state transition `δx⁺ = A δx + B δu`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedStep {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// `ẋ` for a unit-quaternion state. `feet` are World-frame contact positions.
pub fn continuous_dynamics(
    model: &RobotModel,
    x: &SrbState,
    u: &DVector<f64>,
    feet: &[Vector3<f64>],
) -> Result<StateVector, ModelError> {
    check_arity(model, u, feet)?;
    Ok(SrbParams::new(model).vector_field(&x.to_vector(), u, feet))
}

/// One explicit midpoint step of length `dt`, quaternion renormalized.
pub fn discrete_dynamics(
    model: &RobotModel,
    x: &SrbState,
    u: &DVector<f64>,
    feet: &[Vector3<f64>],
    dt: f64,
) -> Result<SrbState, ModelError> {
    check_arity(model, u, feet)?;
    Ok(SrbParams::new(model).step(x, u, feet, dt))
}

/// Raw Jacobians `(∂f/∂x, ∂f/∂u)` of the midpoint map, `q` as a free 4-vector.
pub fn raw_jacobians(
    model: &RobotModel,
    x: &SrbState,
    u: &DVector<f64>,
    feet: &[Vector3<f64>],
    dt: f64,
) -> Result<(StateJacobian, DMatrix<f64>), ModelError> {
    check_arity(model, u, feet)?;
    let (fx, fu, _) = SrbParams::new(model).midpoint_jacobians(&x.to_vector(), u, feet, dt);
    Ok((fx, fu))
}

/// Error-state linearization about `(x̄_k, ū_k)` with successor `x̄_{k+1}`.
pub fn linearize(
    model: &RobotModel,
    xk: &SrbState,
    uk: &DVector<f64>,
    xk1: &SrbState,
    feet: &[Vector3<f64>],
    dt: f64,
) -> Result<LinearizedStep, ModelError> {
    check_arity(model, uk, feet)?;
    SrbParams::new(model).linearize(xk, uk, xk1, feet, dt)
}

/// World-frame angular momentum `R(q) I ω`.
pub fn angular_momentum_world(model: &RobotModel, x: &SrbState) -> Vector3<f64> {
    quat::rotate(&x.q, &(model.inertia_matrix() * x.omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn stance_feet(model: &RobotModel, x: &SrbState) -> Vec<Vector3<f64>> {
        model
            .contacts
            .iter()
            .map(|c| {
                let h = x.r + x.q.rotate(&c.hip());
                Vector3::new(h.x, h.y, 0.0)
            })
            .collect()
    }

    fn hover_control(model: &RobotModel) -> DVector<f64> {
        let n = model.num_contacts();
        let mut u = DVector::zeros(3 * n);
        for i in 0..n {
            u[3 * i + 2] = model.weight() / n as f64;
        }
        u
    }

    fn standing() -> (RobotModel, SrbState, Vec<Vector3<f64>>) {
        let model = RobotModel::quadruped();
        let x = SrbState::at(Vector3::new(0.0, 0.0, 0.28), Quaternion::identity());
        let feet = stance_feet(&model, &x);
        (model, x, feet)
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let (model, x, feet) = standing();
        let u = hover_control(&model);
        let xd = continuous_dynamics(&model, &x, &u, &feet).unwrap();
        assert!(xd.amax() < 1e-12, "{xd}");
        let x1 = discrete_dynamics(&model, &x, &u, &feet, 0.01).unwrap();
        assert!((x1.r - x.r).amax() <= 1e-12);
    }

    #[test]
    fn free_fall_and_gyroscopic_terms() {
        let model = RobotModel::quadruped();
        let mut x = SrbState::at(Vector3::new(0.0, 0.0, 1.0), Quaternion::identity());
        x.omega = Vector3::new(0.3, -1.0, 2.0);
        let feet = stance_feet(&model, &x);
        let u = DVector::zeros(12);
        let xd = continuous_dynamics(&model, &x, &u, &feet).unwrap();
        assert_relative_eq!(xd.fixed_rows::<3>(7).into_owned(), Vector3::new(0.0, 0.0, -9.81));
        let i = model.inertia_matrix();
        let expect = -model.inertia_inverse() * x.omega.cross(&(i * x.omega));
        assert_relative_eq!(xd.fixed_rows::<3>(10).into_owned(), expect, epsilon = 1e-12);

        let mut sym = model.clone();
        sym.inertia = [[0.2, 0.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, 0.2]];
        let xd = continuous_dynamics(&sym, &x, &u, &feet).unwrap();
        assert!(xd.fixed_rows::<3>(10).amax() < 1e-15);
    }

    #[test]
    fn arity_is_checked() {
        let (model, x, feet) = standing();
        let err = continuous_dynamics(&model, &x, &DVector::zeros(6), &feet).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { what: "control", .. }));
        let err = continuous_dynamics(&model, &x, &DVector::zeros(12), &feet[..3]).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { what: "feet", .. }));
    }

    #[test]
    fn midpoint_free_fall_matches_ballistic() {
        let model = RobotModel::quadruped();
        let mut x = SrbState::at(Vector3::new(0.0, 0.0, 2.0), Quaternion::identity());
        let feet = stance_feet(&model, &x);
        let u = DVector::zeros(12);
        for _ in 0..100 {
            x = discrete_dynamics(&model, &x, &u, &feet, 0.01).unwrap();
        }
        // 100 steps of 0.01 s is one second of flight: ½ g t² = 4.905 m
        assert!((x.r.z - 2.0 + 4.905).abs() < 1e-4, "{}", x.r.z);
    }

    #[test]
    fn midpoint_spin_about_z_reaches_half_turn() {
        let model = RobotModel::reaction_wheel_quadruped();
        let mut x = SrbState {
            omega: Vector3::new(0.0, 0.0, PI),
            ..SrbState::default()
        };
        let u = DVector::zeros(2);
        for _ in 0..1000 {
            x = discrete_dynamics(&model, &x, &u, &[], 1e-3).unwrap();
        }
        let target = Quaternion::from_axis_angle(&Vector3::z(), PI);
        assert!(x.q.angle_to(&target) < 1e-3);
        assert!(x.q.norm_error() < 1e-9);
    }

    #[test]
    fn translation_block_of_control_jacobian() {
        let (model, x, feet) = standing();
        let dt = 0.01;
        let (_, fu) = raw_jacobians(&model, &x, &hover_control(&model), &feet, dt).unwrap();
        for i in 0..4 {
            let blk = fu.view((0, 3 * i), (3, 3));
            assert_relative_eq!(
                blk.clone_owned(),
                DMatrix::identity(3, 3) * dt * dt / (2.0 * model.mass),
                epsilon = 1e-15
            );
            let vblk = fu.view((7, 3 * i), (3, 3));
            assert_relative_eq!(
                vblk.clone_owned(),
                DMatrix::identity(3, 3) * dt / model.mass,
                epsilon = 1e-15
            );
        }
        let (fx0, _) = raw_jacobians(&model, &x, &hover_control(&model), &feet, 0.0).unwrap();
        assert_eq!(fx0, StateJacobian::identity());
    }

    #[test]
    fn hover_linearization() {
        let (model, x, feet) = standing();
        let u = hover_control(&model);
        let p = SrbParams::new(&model);
        let x1 = p.step(&x, &u, &feet, 1e-12);
        let lin = p.linearize(&x, &u, &x1, &feet, 1e-12).unwrap();
        assert!((lin.a.clone() - DMatrix::identity(12, 12)).amax() < 1e-8);

        let dt = 0.01;
        let x1 = p.step(&x, &u, &feet, dt);
        let lin = p.linearize(&x, &u, &x1, &feet, dt).unwrap();
        for i in 0..4 {
            let blk = lin.b.view((6, 3 * i), (3, 3)).clone_owned();
            assert_relative_eq!(blk, DMatrix::identity(3, 3) * dt / model.mass, epsilon = 1e-12);
        }
    }

    #[test]
    fn linearize_rejects_inconsistent_successor() {
        let (model, x, feet) = standing();
        let u = hover_control(&model);
        let mut x1 = discrete_dynamics(&model, &x, &u, &feet, 0.01).unwrap();
        x1.r.x += 1e-3;
        let err = linearize(&model, &x, &u, &x1, &feet, 0.01).unwrap_err();
        assert!(matches!(err, ModelError::ReferenceInconsistent { .. }));
    }

    #[test]
    fn error_state_jacobian_structure() {
        let x = SrbState::default();
        let e = error_state_jacobian(&x);
        assert_eq!(e.fixed_view::<4, 3>(3, 3).into_owned(), quat::hmat());
        let q = Quaternion::new(0.2, -0.5, 0.7, 0.1);
        let e = error_state_jacobian(&SrbState::at(Vector3::zeros(), q));
        assert!((e.transpose() * e - SMatrix::<f64, 12, 12>::identity()).amax() < 1e-12);
        // one nonzero block per block-row
        let rows = [(0, 3), (3, 4), (7, 3), (10, 3)];
        let cols = [(0, 3), (3, 3), (6, 3), (9, 3)];
        for (bi, &(r0, nr)) in rows.iter().enumerate() {
            for (bj, &(c0, nc)) in cols.iter().enumerate() {
                let nz = e.view((r0, c0), (nr, nc)).amax() > 0.0;
                assert_eq!(nz, bi == bj);
            }
        }
    }

    #[test]
    fn state_error_round_trip_and_double_cover() {
        let xbar = SrbState {
            r: Vector3::new(0.1, 0.2, 0.3),
            q: Quaternion::new(0.9, 0.1, -0.3, 0.2),
            v: Vector3::new(1.0, 0.0, -1.0),
            omega: Vector3::new(0.0, 2.0, 0.5),
        };
        assert!(state_error(&xbar, &xbar).unwrap().amax() < 1e-15);
        let mut dx = ErrorState::zeros();
        dx.fixed_rows_mut::<3>(3).copy_from(&Vector3::new(0.3, -0.2, 0.4));
        dx[0] = 0.5;
        let x = retract(&xbar, &dx);
        assert!((state_error(&x, &xbar).unwrap() - dx).amax() < 1e-10);

        let mut xf = x;
        xf.q = x.q.neg();
        let mut xbf = xbar;
        xbf.q = xbar.q.neg();
        assert!((state_error(&xf, &xbf).unwrap() - dx).amax() < 1e-10);
    }

    #[test]
    fn sign_flip_gives_same_physics() {
        let (model, mut x, feet) = standing();
        x.q = Quaternion::new(0.8, 0.3, -0.2, 0.4);
        x.omega = Vector3::new(0.4, -0.1, 0.9);
        let u = DVector::from_fn(12, |i, _| 10.0 + i as f64);
        let a = continuous_dynamics(&model, &x, &u, &feet).unwrap();
        let mut xf = x;
        xf.q = x.q.neg();
        let b = continuous_dynamics(&model, &xf, &u, &feet).unwrap();
        for i in 0..13 {
            let sign = if (3..7).contains(&i) { -1.0 } else { 1.0 };
            assert!((a[i] - sign * b[i]).abs() < 1e-12);
        }
    }
}
