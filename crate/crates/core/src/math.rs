//! Rotation algebra and the cubic Bézier path used to resample visual odometry.
//!
//! Quaternions are stored **scalar-last**: `(x, y, z, w)`, the vector part
//! first and the scalar part last. Products are Hamilton products and a
//! quaternion `q` describes the rotation of the body frame into the world
//! frame (`R_WB`). Mixing this up with scalar-first storage silently produces
//! wrong attitudes, so every constructor takes the components by name.

use alloc::vec::Vec;
use core::ops::{Mul, Neg};

use nalgebra::{Matrix3, Vector3};

/// Below this rotation angle (rad) the exponential map switches to its series form.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Standard gravity vector in the world frame (m/s²), z pointing up.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// Unit quaternion, scalar-last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    /// Builds a quaternion from raw components and normalizes it.
    ///
    /// A zero quaternion has no direction; it maps to the identity.
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        let n = libm::sqrt(x * x + y * y + z * z + w * w);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        UnitQuat { x: x / n, y: y / n, z: z / n, w: w / n }
    }

    /// Builds from components that are already unit length, without renormalizing.
    pub const fn from_raw(x: f64, y: f64, z: f64, w: f64) -> Self {
        UnitQuat { x, y, z, w }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w)
    }

    pub fn conjugate(&self) -> Self {
        UnitQuat { x: -self.x, y: -self.y, z: -self.z, w: self.w }
    }

    pub fn dot(&self, other: &UnitQuat) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    /// Representative with a non-negative scalar part. Only used where a
    /// unique sign matters (serialization, residuals).
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            -*self
        } else {
            *self
        }
    }

    /// Rotation matrix `R_WB`.
    pub fn to_rotation(&self) -> RotationMatrix {
        quat_to_rot(self)
    }

    /// Rotates a body-frame vector into the world frame.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        quat_to_rot(self).0 * v
    }

    /// Exponential map of a rotation vector (rad).
    pub fn exp(rotation: &Vector3<f64>) -> Self {
        quat_exp(rotation, 1.0)
    }

    /// Rotation vector of this quaternion, with the angle in `[0, π]`.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.canonical();
        let v = q.vector();
        let s = v.norm();
        if s < SMALL_ANGLE {
            // sin(θ/2) ≈ θ/2, w ≈ 1
            return v * (2.0 / q.w);
        }
        let angle = 2.0 * libm::atan2(s, q.w);
        v * (angle / s)
    }

    /// Geodesic distance (rad) between two attitudes.
    pub fn angle_to(&self, other: &UnitQuat) -> f64 {
        (self.conjugate() * *other).log().norm()
    }

    /// ZYX Euler angles `(roll, pitch, yaw)` in radians.
    pub fn euler_zyx(&self) -> Vector3<f64> {
        let r = self.to_rotation().0;
        let pitch = libm::asin((-r[(2, 0)]).clamp(-1.0, 1.0));
        let roll = libm::atan2(r[(2, 1)], r[(2, 2)]);
        let yaw = libm::atan2(r[(1, 0)], r[(0, 0)]);
        Vector3::new(roll, pitch, yaw)
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;

    fn mul(self, rhs: UnitQuat) -> UnitQuat {
        quat_mul(&self, &rhs)
    }
}

impl Neg for UnitQuat {
    type Output = UnitQuat;

    fn neg(self) -> UnitQuat {
        UnitQuat { x: -self.x, y: -self.y, z: -self.z, w: -self.w }
    }
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuat,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rotation: UnitQuat::IDENTITY, translation: Vector3::new(0.0, 0.0, 0.0) };

    pub fn new(rotation: UnitQuat, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.conjugate();
        Pose { rotation: r, translation: -r.rotate(&self.translation) }
    }

    pub fn transform(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(x) + self.translation
    }

    /// Expresses a relative motion given in the frame `self` maps from in
    /// the frame it maps to: `self · rel · self⁻¹`.
    pub fn conjugate_motion(&self, rel: &Pose) -> Pose {
        *self * *rel * self.inverse()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose { rotation: self.rotation * rhs.rotation, translation: self.transform(&rhs.translation) }
    }
}

/// Proper rotation matrix `R_WB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    /// Largest deviation of `RᵀR` from the identity plus `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.0.transpose() * self.0 - Matrix3::identity()).abs().max();
        e + (self.0.determinant() - 1.0).abs()
    }
}

/// Quaternion of the rotation `ω·dt` (the ζ map): `[sin(½‖ω‖dt)·ω/‖ω‖ ; cos(½‖ω‖dt)]`.
pub fn quat_exp(omega: &Vector3<f64>, dt: f64) -> UnitQuat {
    let theta_vec = omega * dt;
    let theta = theta_vec.norm();
    if theta < SMALL_ANGLE {
        // sin(θ/2)/θ ≈ ½ − θ²/48, cos(θ/2) ≈ 1 − θ²/8
        let s = 0.5 - theta * theta / 48.0;
        let w = 1.0 - theta * theta / 8.0;
        return UnitQuat::new(theta_vec.x * s, theta_vec.y * s, theta_vec.z * s, w);
    }
    let half = 0.5 * theta;
    let s = libm::sin(half) / theta;
    UnitQuat::new(theta_vec.x * s, theta_vec.y * s, theta_vec.z * s, libm::cos(half))
}

/// Hamilton product `a ⊗ b`, renormalized.
pub fn quat_mul(a: &UnitQuat, b: &UnitQuat) -> UnitQuat {
    let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
    let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
    let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
    let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
    UnitQuat::new(x, y, z, w)
}

pub fn quat_to_rot(q: &UnitQuat) -> RotationMatrix {
    let (x, y, z, w) = (q.x, q.y, q.z, q.w);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    RotationMatrix(Matrix3::new(
        1.0 - 2.0 * (yy + zz),
        2.0 * (xy - wz),
        2.0 * (xz + wy),
        2.0 * (xy + wz),
        1.0 - 2.0 * (xx + zz),
        2.0 * (yz - wx),
        2.0 * (xz - wy),
        2.0 * (yz + wx),
        1.0 - 2.0 * (xx + yy),
    ))
}

/// Cross-product matrix: `skew(v) * u == v × u`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BezierError {
    #[error("a cubic segment needs at least four control points, got {0}")]
    FewerThanFourControlPoints(usize),
    #[error("{0} control points do not close a cubic segment (need 3·k + 1)")]
    IncompleteSegment(usize),
    #[error("control points and knot times differ in length")]
    KnotCountMismatch,
    #[error("knot times must be strictly increasing")]
    NonIncreasingKnots,
    #[error("sample time {0} lies outside the path")]
    SampleTimeOutOfRange(f64),
}

/// Piecewise cubic Bézier curve. Segment `s` uses control points
/// `3s ..= 3s + 3`; consecutive segments share their boundary point, so the
/// curve is continuous. Each segment is parameterized linearly in time
/// between its first and last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierPath {
    control_points: Vec<Vector3<f64>>,
    knot_times: Vec<f64>,
}

impl BezierPath {
    pub fn new(control_points: Vec<Vector3<f64>>, knot_times: Vec<f64>) -> Result<Self, BezierError> {
        if control_points.len() != knot_times.len() {
            return Err(BezierError::KnotCountMismatch);
        }
        let n = control_points.len();
        if n < 4 {
            return Err(BezierError::FewerThanFourControlPoints(n));
        }
        if (n - 1) % 3 != 0 {
            return Err(BezierError::IncompleteSegment(n));
        }
        if knot_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BezierError::NonIncreasingKnots);
        }
        Ok(BezierPath { control_points, knot_times })
    }

    pub fn control_points(&self) -> &[Vector3<f64>] {
        &self.control_points
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn segment_count(&self) -> usize {
        (self.control_points.len() - 1) / 3
    }

    pub fn start_time(&self) -> f64 {
        self.knot_times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.knot_times.last().unwrap()
    }

    /// Position on the curve at time `t`.
    pub fn evaluate(&self, t: f64) -> Result<Vector3<f64>, BezierError> {
        if !(t >= self.start_time() && t <= self.end_time()) {
            return Err(BezierError::SampleTimeOutOfRange(t));
        }
        let segments = self.segment_count();
        // Last segment whose start knot is <= t.
        let mut seg = 0;
        while seg + 1 < segments && self.knot_times[3 * (seg + 1)] <= t {
            seg += 1;
        }
        let t0 = self.knot_times[3 * seg];
        let t1 = self.knot_times[3 * seg + 3];
        let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let p = &self.control_points[3 * seg..3 * seg + 4];
        Ok(de_casteljau(p, u))
    }
}

impl BezierPath {
    /// Like [`BezierPath::evaluate`], but times before the first or after
    /// the last knot continue the end segment's cubic.
    pub fn evaluate_extrapolated(&self, t: f64) -> Vector3<f64> {
        if t >= self.start_time() && t <= self.end_time() {
            return self.evaluate(t).unwrap();
        }
        let seg = if t < self.start_time() { 0 } else { self.segment_count() - 1 };
        let (t0, t1) = (self.knot_times[3 * seg], self.knot_times[3 * seg + 3]);
        de_casteljau(&self.control_points[3 * seg..3 * seg + 4], (t - t0) / (t1 - t0))
    }
}

fn de_casteljau(p: &[Vector3<f64>], u: f64) -> Vector3<f64> {
    if u == 0.0 {
        return p[0];
    }
    if u == 1.0 {
        return p[3];
    }
    let v = 1.0 - u;
    let a = p[0] * v + p[1] * u;
    let b = p[1] * v + p[2] * u;
    let c = p[2] * v + p[3] * u;
    let d = a * v + b * u;
    let e = b * v + c * u;
    d * v + e * u
}

/// Evaluates `path` at each sample time. Differences of consecutive outputs
/// are the per-interval increments fed to the estimator.
pub fn bezier_interpolate(path: &BezierPath, sample_times: &[f64]) -> Result<Vec<Vector3<f64>>, BezierError> {
    sample_times.iter().map(|&t| path.evaluate(t)).collect()
}

/// Builds a Bézier path that passes through every `knot` at its `time`.
///
/// Each knot interval becomes one cubic segment whose two inner handles
/// follow the local tangent, estimated by the three-point derivative
/// formula (exact for quadratic motion, non-uniform spacing allowed). With
/// only two knots the segment degenerates to a straight line.
pub fn bezier_through_knots(knots: &[Vector3<f64>], times: &[f64]) -> Result<BezierPath, BezierError> {
    if knots.len() != times.len() {
        return Err(BezierError::KnotCountMismatch);
    }
    if knots.len() < 2 {
        return Err(BezierError::FewerThanFourControlPoints(knots.len()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(BezierError::NonIncreasingKnots);
    }
    let n = knots.len();
    let tangents: Vec<Vector3<f64>> = (0..n).map(|i| knot_tangent(knots, times, i)).collect();

    let mut control = Vec::with_capacity(3 * (n - 1) + 1);
    let mut ktimes = Vec::with_capacity(3 * (n - 1) + 1);
    for i in 0..n - 1 {
        let h = times[i + 1] - times[i];
        control.push(knots[i]);
        control.push(knots[i] + tangents[i] * (h / 3.0));
        control.push(knots[i + 1] - tangents[i + 1] * (h / 3.0));
        ktimes.push(times[i]);
        ktimes.push(times[i] + h / 3.0);
        ktimes.push(times[i] + 2.0 * h / 3.0);
    }
    control.push(knots[n - 1]);
    ktimes.push(times[n - 1]);
    BezierPath::new(control, ktimes)
}

fn knot_tangent(p: &[Vector3<f64>], t: &[f64], i: usize) -> Vector3<f64> {
    let n = p.len();
    if n == 2 {
        return (p[1] - p[0]) / (t[1] - t[0]);
    }
    if i == 0 {
        let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
        return p[0] * (-(2.0 * h0 + h1) / (h0 * (h0 + h1))) + p[1] * ((h0 + h1) / (h0 * h1))
            - p[2] * (h0 / (h1 * (h0 + h1)));
    }
    if i == n - 1 {
        let (h0, h1) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
        return p[n - 3] * (h1 / (h0 * (h0 + h1))) - p[n - 2] * ((h0 + h1) / (h0 * h1))
            + p[n - 1] * ((2.0 * h1 + h0) / (h1 * (h0 + h1)));
    }
    let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
    p[i - 1] * (-h1 / (h0 * (h0 + h1))) + p[i] * ((h1 - h0) / (h0 * h1)) + p[i + 1] * (h0 / (h1 * (h0 + h1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    // Rodrigues' formula, written independently of the quaternion path.
    fn rodrigues(rv: &Vector3<f64>) -> Matrix3<f64> {
        let theta = rv.norm();
        if theta == 0.0 {
            return Matrix3::identity();
        }
        let k = skew(&(rv / theta));
        Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
    }

    fn quat_strategy() -> impl Strategy<Value = UnitQuat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(x, y, z, w)| x * x + y * y + z * z + w * w > 1e-3)
            .prop_map(|(x, y, z, w)| UnitQuat::new(x, y, z, w))
    }

    #[test]
    fn exp_of_zero_rate_is_identity() {
        let q = quat_exp(&Vector3::zeros(), 0.005);
        assert_eq!(q, UnitQuat::IDENTITY);
    }

    #[test]
    fn exp_half_turn_about_z() {
        let q = quat_exp(&Vector3::new(0.0, 0.0, 2.0), PI / 2.0);
        assert_relative_eq!(q.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(q.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(q.z, 1.0, epsilon = 1e-15);
        assert_relative_eq!(q.w, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_rodrigues() {
        let omega = Vector3::new(0.3, -0.1, 0.2);
        let dt = 0.005;
        let r = quat_to_rot(&quat_exp(&omega, dt)).0;
        let expected = rodrigues(&(omega * dt));
        assert!((r - expected).abs().max() < 1e-12);
    }

    #[test]
    fn exp_small_angle_branch_is_continuous() {
        let axis = Vector3::new(0.6, -0.8, 0.0);
        let below = quat_exp(&(axis * 0.999e-8), 1.0);
        let above = quat_exp(&(axis * 1.001e-8), 1.0);
        assert!((below.vector() - axis * 0.4995e-8).norm() < 1e-22);
        assert!((above.vector() - axis * 0.5005e-8).norm() < 1e-22);
        assert!((below.w - 1.0).abs() < 1e-15 && (above.w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_and_conjugate_products() {
        let q = UnitQuat::new(0.1, -0.4, 0.3, 0.8);
        assert_eq!(UnitQuat::IDENTITY * q, q);
        let e = q * q.conjugate();
        assert_relative_eq!(e.w, 1.0, epsilon = 1e-15);
        assert!(e.vector().norm() < 1e-15);
    }

    #[test]
    fn rotation_of_known_quaternions() {
        assert_eq!(quat_to_rot(&UnitQuat::IDENTITY).0, Matrix3::identity());
        let r = quat_to_rot(&UnitQuat::from_raw(0.0, 0.0, 1.0, 0.0)).0;
        assert_eq!(r, Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)));
    }

    #[test]
    fn skew_cases() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let u = skew(&Vector3::x()) * Vector3::y();
        assert_eq!(u, Vector3::z());
    }

    #[test]
    fn log_inverts_exp() {
        let rv = Vector3::new(0.4, -1.1, 2.0);
        let back = UnitQuat::exp(&rv).log();
        assert!((back - rv).norm() < 1e-12);
    }

    #[test]
    fn euler_of_pure_yaw() {
        let q = quat_exp(&Vector3::new(0.0, 0.0, 0.7), 1.0);
        let e = q.euler_zyx();
        assert_relative_eq!(e.z, 0.7, epsilon = 1e-14);
        assert!(e.x.abs() < 1e-14 && e.y.abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn product_matches_matrix_product(a in quat_strategy(), b in quat_strategy()) {
            let lhs = quat_to_rot(&(a * b)).0;
            let rhs = quat_to_rot(&a).0 * quat_to_rot(&b).0;
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
            prop_assert!(((a * b).norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn rotations_are_orthonormal(q in quat_strategy()) {
            prop_assert!(quat_to_rot(&q).orthonormality_error() < 1e-12);
        }

        #[test]
        fn exp_is_inverse_consistent(
            wx in -5.0..5.0f64, wy in -5.0..5.0f64, wz in -5.0..5.0f64, dt in 0.0..0.5f64
        ) {
            let w = Vector3::new(wx, wy, wz);
            let e = quat_exp(&w, dt) * quat_exp(&-w, dt);
            prop_assert!((e.w - 1.0).abs() < 1e-12);
            prop_assert!(e.vector().norm() < 1e-12);
        }

        #[test]
        fn skew_is_cross_product(
            a in proptest::array::uniform3(-10.0..10.0f64),
            b in proptest::array::uniform3(-10.0..10.0f64),
        ) {
            let (v, u) = (Vector3::from(a), Vector3::from(b));
            prop_assert!((skew(&v) * u - v.cross(&u)).abs().max() < 1e-15 * 100.0);
        }
    }

    fn line_path() -> BezierPath {
        let pts = (0..4).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        BezierPath::new(pts, vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn straight_line_reproduces_control_points() {
        let path = line_path();
        let out = bezier_interpolate(&path, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        for (i, p) in out.iter().enumerate() {
            assert!((p - Vector3::new(i as f64, 0.0, 0.0)).norm() < 1e-14);
        }
        let sum: Vector3<f64> = out.windows(2).map(|w| w[1] - w[0]).sum();
        assert!((sum - Vector3::new(3.0, 0.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn midpoint_matches_bernstein_weights() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 2.0, 0.5),
            Vector3::new(3.0, -1.0, 1.0),
            Vector3::new(4.0, 0.0, -2.0),
        ];
        let path = BezierPath::new(pts.clone(), vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        let mid = path.evaluate(0.15).unwrap();
        let expected = (pts[0] + pts[1] * 3.0 + pts[2] * 3.0 + pts[3]) / 8.0;
        assert!((mid - expected).norm() < 1e-14);
    }

    #[test]
    fn repeated_sample_times_give_zero_increment() {
        let out = bezier_interpolate(&line_path(), &[1.3, 1.3]).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn path_errors() {
        let pts: Vec<_> = (0..3).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(
            BezierPath::new(pts, vec![0.0, 1.0, 2.0]),
            Err(BezierError::FewerThanFourControlPoints(3))
        );
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(
            BezierPath::new(pts, vec![0.0, 1.0, 2.0, 3.0, 4.0]),
            Err(BezierError::IncompleteSegment(5))
        );
        assert_eq!(line_path().evaluate(3.5), Err(BezierError::SampleTimeOutOfRange(3.5)));
    }

    #[test]
    fn knot_path_hits_every_knot_and_reproduces_quadratics() {
        let times = [0.0, 0.035, 0.065, 0.1, 0.135];
        let f = |t: f64| Vector3::new(1.0 + 2.0 * t - 3.0 * t * t, 0.5 * t * t, -t);
        let knots: Vec<_> = times.iter().map(|&t| f(t)).collect();
        let path = bezier_through_knots(&knots, &times).unwrap();
        for (t, k) in times.iter().zip(&knots) {
            assert!((path.evaluate(*t).unwrap() - k).norm() < 1e-14);
        }
        for i in 0..=27 {
            let t = 0.005 * i as f64;
            assert!((path.evaluate(t).unwrap() - f(t)).norm() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn increments_telescope(
            knots in proptest::collection::vec(proptest::array::uniform3(-1.0..1.0f64), 2..7),
            samples in proptest::collection::vec(0.0..1.0f64, 2..40),
        ) {
            let n = knots.len();
            let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.03 + (i % 2) as f64 * 0.005).collect();
            let knots: Vec<Vector3<f64>> = knots.into_iter().map(Vector3::from).collect();
            let path = bezier_through_knots(&knots, &times).unwrap();
            let span = times[n - 1];
            let mut ts: Vec<f64> = samples.iter().map(|s| s * span).collect();
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = bezier_interpolate(&path, &ts).unwrap();
            let sum: Vector3<f64> = pos.windows(2).map(|w| w[1] - w[0]).sum();
            let direct = pos[pos.len() - 1] - pos[0];
            prop_assert!((sum - direct).norm() < 1e-12);
        }
    }
}
