//! Unit-quaternion algebra and the differential rules used to differentiate
//! through rotations.
//!
//! Storage order is `[scalar, x, y, z]` everywhere, including every wire format.
//! Differential rotations are 3-vectors mapped onto the sphere with the Cayley
//! map `phi -> [1, phi] / sqrt(1 + |phi|^2)`.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::QuatError;

/// Smallest `|q_s|` accepted by [`cayley_inv`].
pub const CHART_FLOOR: f64 = 1e-8;

/// Norm drift tolerated before a composed quaternion is renormalized.
pub const RENORM_DRIFT: f64 = 1e-12;

/// Unit quaternion stored as `[s, x, y, z]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", from = "[f64; 4]")]
pub struct Quaternion(Vector4<f64>);

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.0[0], q.0[1], q.0[2], q.0[3]]
    }
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl Quaternion {
    /// Builds a unit quaternion, normalizing the input. A zero input yields identity.
    pub fn new(s: f64, x: f64, y: f64, z: f64) -> Self {
        Self::from_vector(Vector4::new(s, x, y, z))
    }

    pub fn from_vector(v: Vector4<f64>) -> Self {
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::identity();
        }
        Quaternion(v / n)
    }

    pub fn identity() -> Self {
        Quaternion(Vector4::new(1.0, 0.0, 0.0, 0.0))
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n * s;
        Quaternion(Vector4::new(c, a.x, a.y, a.z))
    }

    /// ZYX intrinsic Euler angles (roll, pitch, yaw) to quaternion.
    pub fn from_euler_zyx(roll: f64, pitch: f64, yaw: f64) -> Self {
        let qz = Self::from_axis_angle(&Vector3::z(), yaw);
        let qy = Self::from_axis_angle(&Vector3::y(), pitch);
        let qx = Self::from_axis_angle(&Vector3::x(), roll);
        qz.mul(&qy).mul(&qx)
    }

    pub fn scalar(&self) -> f64 {
        self.0[0]
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.0[1], self.0[2], self.0[3])
    }

    pub fn as_vector(&self) -> &Vector4<f64> {
        &self.0
    }

    pub fn to_array(self) -> [f64; 4] {
        self.into()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn neg(&self) -> Quaternion {
        Quaternion(-self.0)
    }

    pub fn conj(&self) -> Quaternion {
        conj(self)
    }

    pub fn mul(&self, rhs: &Quaternion) -> Quaternion {
        quat_mul(self, rhs)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        rotate(self, v)
    }

    /// Flips sign so the scalar part is nonnegative.
    pub fn canonical(&self) -> Quaternion {
        if self.0[0] < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    /// True when both quaternions describe the same rotation (double cover aware).
    pub fn same_rotation(&self, other: &Quaternion, tol: f64) -> bool {
        1.0 - self.dot(other).abs() <= tol
    }

    /// Geodesic angle in radians between the two rotations.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        2.0 * self.dot(other).abs().min(1.0).acos()
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        rotation_matrix(self)
    }

    /// ZYX Euler angles `[roll, pitch, yaw]`. Pitch lies in `[-pi/2, pi/2]`.
    pub fn to_euler_zyx(&self) -> Vector3<f64> {
        let r = self.to_rotation_matrix();
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Vector3::new(roll, pitch, yaw)
    }

    pub fn norm_error(&self) -> f64 {
        (self.0.norm_squared() - 1.0).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Differential rotation in Cayley coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentRotation(pub Vector3<f64>);

impl TangentRotation {
    pub fn zero() -> Self {
        TangentRotation(Vector3::zeros())
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `H = [0; I3]`, embeds a 3-vector as a pure-vector quaternion.
pub fn hmat() -> Matrix4x3<f64> {
    Matrix4x3::new(
        0.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, //
        0.0, 0.0, 1.0,
    )
}

/// `T = diag(1, -1, -1, -1)`, the conjugation matrix.
pub fn tmat() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0))
}

/// Left-multiplication matrix: `q1 ⊗ q2 = L(q1) q2`. Works on raw 4-vectors.
pub fn lmat_raw(q: &Vector4<f64>) -> Matrix4<f64> {
    let (s, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix4::new(
        s, -x, -y, -z, //
        x, s, -z, y, //
        y, z, s, -x, //
        z, -y, x, s,
    )
}

/// Right-multiplication matrix: `q1 ⊗ q2 = R(q2) q1`. Works on raw 4-vectors.
pub fn rmat_raw(q: &Vector4<f64>) -> Matrix4<f64> {
    let (s, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix4::new(
        s, -x, -y, -z, //
        x, s, z, -y, //
        y, -z, s, x, //
        z, y, -x, s,
    )
}

pub fn lmat(q: &Quaternion) -> Matrix4<f64> {
    lmat_raw(&q.0)
}

pub fn rmat(q: &Quaternion) -> Matrix4<f64> {
    rmat_raw(&q.0)
}

/// Hamilton product, renormalized when roundoff pushes the norm off by more
/// than [`RENORM_DRIFT`].
pub fn quat_mul(q1: &Quaternion, q2: &Quaternion) -> Quaternion {
    let p = lmat(q1) * q2.0;
    let n2 = p.norm_squared();
    if (n2 - 1.0).abs() > RENORM_DRIFT {
        Quaternion(p / n2.sqrt())
    } else {
        Quaternion(p)
    }
}

pub fn conj(q: &Quaternion) -> Quaternion {
    Quaternion(Vector4::new(q.0[0], -q.0[1], -q.0[2], -q.0[3]))
}

/// Pure-vector quaternion `[0, v]`.
pub fn hat_vec(v: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(0.0, v.x, v.y, v.z)
}

pub fn cayley(phi: &TangentRotation) -> Quaternion {
    let p = phi.0;
    let inv = 1.0 / (1.0 + p.norm_squared()).sqrt();
    Quaternion(Vector4::new(inv, p.x * inv, p.y * inv, p.z * inv))
}

/// Inverse Cayley map with double-cover canonicalization.
pub fn cayley_inv(q: &Quaternion) -> Result<TangentRotation, QuatError> {
    let q = q.canonical();
    let s = q.scalar();
    if s < CHART_FLOOR {
        return Err(QuatError::NearSingularChart { scalar: s });
    }
    Ok(TangentRotation(q.vector() / s))
}

/// Attitude Jacobian `G(q) = L(q) H`.
pub fn attitude_jacobian(q: &Quaternion) -> Matrix4x3<f64> {
    attitude_jacobian_raw(&q.0)
}

pub fn attitude_jacobian_raw(q: &Vector4<f64>) -> Matrix4x3<f64> {
    let (s, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix4x3::new(
        -x, -y, -z, //
        s, -z, y, //
        z, s, -x, //
        -y, x, s,
    )
}

/// Jacobian of a quaternion-valued map in tangent coordinates:
/// `G(f(q))^T (df/dq) G(q)`.
pub fn quat_fn_jacobian(fq: &Quaternion, dfdq: &Matrix4<f64>, q: &Quaternion) -> Matrix3<f64> {
    attitude_jacobian(fq).transpose() * dfdq * attitude_jacobian(q)
}

/// Gradient of a scalar function of a quaternion in tangent coordinates.
pub fn scalar_fn_gradient(dhdq: &Vector4<f64>, q: &Quaternion) -> Vector3<f64> {
    attitude_jacobian(q).transpose() * dhdq
}

/// Hessian of a scalar function of a quaternion in tangent coordinates:
/// `G^T (d2h/dq2) G - I3 (dh/dq . q)`.
pub fn scalar_fn_hessian(dhdq: &Vector4<f64>, d2hdq2: &Matrix4<f64>, q: &Quaternion) -> Matrix3<f64> {
    let g = attitude_jacobian(q);
    g.transpose() * d2hdq2 * g - Matrix3::identity() * dhdq.dot(&q.0)
}

/// Rotation matrix of a (possibly non-unit) raw quaternion: `H^T L(q) R(q)^T H`.
/// Scales by `|q|^2` for non-unit input.
pub fn rotation_matrix_raw(q: &Vector4<f64>) -> Matrix3<f64> {
    let h = hmat();
    h.transpose() * lmat_raw(q) * rmat_raw(q).transpose() * h
}

pub fn rotation_matrix(q: &Quaternion) -> Matrix3<f64> {
    let (s, x, y, z) = (q.0[0], q.0[1], q.0[2], q.0[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - s * z),
        2.0 * (x * z + s * y),
        2.0 * (x * y + s * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - s * x),
        2.0 * (x * z - s * y),
        2.0 * (y * z + s * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn rotate(q: &Quaternion, v: &Vector3<f64>) -> Vector3<f64> {
    rotation_matrix(q) * v
}

/// `d/dq [R(q) v]` for a raw 4-vector `q` (the rotation is quadratic in `q`).
pub fn rotate_jacobian_raw(q: &Vector4<f64>, v: &Vector3<f64>) -> Matrix3x4<f64> {
    // R(q) v = H^T q ⊗ v̂ ⊗ q*, differentiate both occurrences of q.
    let vh = hat_vec(v);
    let qc = tmat() * q;
    let left = rmat_raw(&(lmat_raw(&vh) * qc));
    let right = lmat_raw(&(lmat_raw(q) * vh)) * tmat();
    hmat().transpose() * (left + right)
}

/// `d/dq [R(q)^T w]` for a raw 4-vector `q`.
pub fn rotate_transpose_jacobian_raw(q: &Vector4<f64>, w: &Vector3<f64>) -> Matrix3x4<f64> {
    // R(q)^T w = H^T q* ⊗ ŵ ⊗ q
    let wh = hat_vec(w);
    let qc = tmat() * q;
    let left = rmat_raw(&(lmat_raw(&wh) * q)) * tmat();
    let right = lmat_raw(&(lmat_raw(&qc) * wh));
    hmat().transpose() * (left + right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn hamilton(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
        let (a0, a1, a2, a3) = (a[0], a[1], a[2], a[3]);
        let (b0, b1, b2, b3) = (b[0], b[1], b[2], b[3]);
        Vector4::new(
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        )
    }

    fn unit_quat() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("nonzero", |a| a.iter().map(|x| x * x).sum::<f64>() > 1e-3)
            .prop_map(Quaternion::from)
    }

    fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
        prop::array::uniform3(-r..r).prop_map(|a| Vector3::new(a[0], a[1], a[2]))
    }

    #[test]
    fn lmat_identity_and_basis() {
        assert_eq!(lmat(&Quaternion::identity()), Matrix4::identity());
        let l = lmat(&Quaternion::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(l.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, -1.0, 0.0, 0.0]);
        assert_eq!(l.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(l.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, -1.0]);
        assert_eq!(l.row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn ninety_about_z_squared_is_half_turn() {
        let q = Quaternion::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        let qq = quat_mul(&q, &q);
        assert_relative_eq!(*qq.as_vector(), Vector4::new(0.0, 0.0, 0.0, 1.0), epsilon = 1e-15);
        // rotation-matrix composition oracle
        let r = rotation_matrix(&q) * rotation_matrix(&q);
        assert_relative_eq!(r, rotation_matrix(&qq), epsilon = 1e-15);
        assert_relative_eq!(rotate(&q, &Vector3::x()), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn conj_and_hat() {
        assert_eq!(conj(&Quaternion::identity()), Quaternion::identity());
        assert_eq!(
            conj(&Quaternion::new(0.0, 1.0, 0.0, 0.0)).to_array(),
            [0.0, -1.0, 0.0, 0.0]
        );
        assert_eq!(hat_vec(&Vector3::zeros()), Vector4::zeros());
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(hat_vec(&v), Vector4::new(0.0, 1.0, 2.0, 3.0));
        assert_eq!(hmat().transpose() * hat_vec(&v), v);
    }

    #[test]
    fn cayley_known_values() {
        assert_eq!(cayley(&TangentRotation::zero()), Quaternion::identity());
        let q = cayley(&TangentRotation(Vector3::x()));
        assert_relative_eq!(
            *q.as_vector(),
            Vector4::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0),
            epsilon = 1e-15
        );
        assert_relative_eq!(cayley_inv(&Quaternion::identity()).unwrap().0, Vector3::zeros());
        assert_relative_eq!(cayley_inv(&q).unwrap().0, Vector3::x(), epsilon = 1e-15);
    }

    #[test]
    fn cayley_inv_rejects_half_turn() {
        let q = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        assert!(matches!(cayley_inv(&q), Err(QuatError::NearSingularChart { .. })));
        let q = Quaternion::new(1e-9, 0.0, 0.0, 1.0);
        assert!(cayley_inv(&q).is_err());
        let q = Quaternion::new(1e-7, 0.0, 0.0, 1.0);
        assert!(cayley_inv(&q).is_ok());
    }

    #[test]
    fn g_of_identity_is_h() {
        assert_eq!(attitude_jacobian(&Quaternion::identity()), hmat());
    }

    #[test]
    fn scalar_hessian_of_dot_at_reference_is_minus_identity() {
        let qb = Quaternion::new(0.3, -0.2, 0.7, 0.1);
        let h = scalar_fn_hessian(qb.as_vector(), &Matrix4::zeros(), &qb);
        assert_relative_eq!(h, -Matrix3::identity(), epsilon = 1e-14);
        let h0 = scalar_fn_hessian(&Vector4::zeros(), &Matrix4::zeros(), &qb);
        assert_eq!(h0, Matrix3::zeros());
    }

    #[test]
    fn euler_round_trip_away_from_gimbal_lock() {
        let q = Quaternion::from_euler_zyx(0.3, -0.4, 2.0);
        assert_relative_eq!(q.to_euler_zyx(), Vector3::new(0.3, -0.4, 2.0), epsilon = 1e-12);
        let yaw = Quaternion::from_axis_angle(&Vector3::z(), PI / 3.0);
        assert_relative_eq!(yaw.to_euler_zyx().z, PI / 3.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn lmat_matches_hamilton(a in unit_quat(), b in unit_quat()) {
            let got = lmat(&a) * b.as_vector();
            prop_assert!((got - hamilton(a.as_vector(), b.as_vector())).norm() < 1e-14);
            prop_assert!((rmat(&b) * a.as_vector() - got).norm() < 1e-14);
        }

        #[test]
        fn product_closure_and_inverse(a in unit_quat(), b in unit_quat()) {
            prop_assert!(quat_mul(&a, &b).norm_error() <= 1e-9);
            let e = quat_mul(&a, &conj(&a));
            prop_assert!(e.same_rotation(&Quaternion::identity(), 1e-12));
            prop_assert!((quat_mul(&Quaternion::identity(), &a).as_vector() - a.as_vector()).norm() < 1e-15);
        }

        #[test]
        fn rotation_is_an_isometry(q in unit_quat(), v in vec3(5.0)) {
            let w = rotate(&q, &v);
            prop_assert!((w.norm() - v.norm()).abs() < 1e-12);
            prop_assert!((rotate(&conj(&q), &w) - v).norm() < 1e-12);
            prop_assert!((rotate(&q.neg(), &v) - w).norm() < 1e-12);
            prop_assert!((rotation_matrix_raw(q.as_vector()) * v - w).norm() < 1e-12);
            let r = rotation_matrix(&q);
            prop_assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cayley_round_trips(p in vec3(10.0)) {
            let phi = TangentRotation(p);
            let q = cayley(&phi);
            prop_assert!(q.norm_error() < 1e-12);
            prop_assert!(q.scalar() > 0.0);
            let back = cayley_inv(&q).unwrap();
            prop_assert!((back.0 - p).norm() <= 1e-12 * (1.0 + p.norm()));
        }

        #[test]
        fn cayley_inv_is_sign_invariant(q in unit_quat()) {
            prop_assume!(q.scalar().abs() > 1e-3);
            let a = cayley_inv(&q).unwrap();
            let b = cayley_inv(&q.neg()).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(cayley(&a).same_rotation(&q, 1e-12));
            prop_assert!(cayley(&a).scalar() > 0.0);
        }

        #[test]
        fn attitude_jacobian_has_orthonormal_columns(q in unit_quat()) {
            let g = attitude_jacobian(&q);
            prop_assert!((g.transpose() * g - Matrix3::identity()).norm() < 1e-14);
            prop_assert!((lmat(&q) * hmat() - g).norm() < 1e-15);
        }

        #[test]
        fn rotate_jacobians_match_finite_differences(q in unit_quat(), v in vec3(2.0)) {
            let qv = *q.as_vector();
            let ja = rotate_jacobian_raw(&qv, &v);
            let jb = rotate_transpose_jacobian_raw(&qv, &v);
            let h = 1e-6;
            for i in 0..4 {
                let mut e = Vector4::zeros();
                e[i] = h;
                let fa = (rotation_matrix_raw(&(qv + e)) * v - rotation_matrix_raw(&(qv - e)) * v) / (2.0 * h);
                let fb = (rotation_matrix_raw(&(qv + e)).transpose() * v
                    - rotation_matrix_raw(&(qv - e)).transpose() * v) / (2.0 * h);
                prop_assert!((ja.column(i) - fa).norm() < 1e-8);
                prop_assert!((jb.column(i) - fb).norm() < 1e-8);
            }
        }
    }
}
