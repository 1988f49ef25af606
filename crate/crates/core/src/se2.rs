//! SE(2) pose algebra.
//!
//! Poses are `(x, y, theta)` with `theta` wrapped to `(-pi, pi]` at
//! construction. Local coordinates of a pose are `(dx, dy, dtheta)` applied on
//! the right: `retract(p, v) = p ⊕ Pose2(v)`. Points use plain additive local
//! coordinates.
//!
//! Jacobians are taken of the vector-valued output `(x, y, theta)` (or `(x, y)`
//! for points) with respect to the local coordinates of each argument.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// A rigid 2D transform / robot pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    x: f64,
    y: f64,
    theta: f64,
}

impl From<[f64; 3]> for Pose2 {
    fn from(v: [f64; 3]) -> Self {
        Pose2::new(v[0], v[1], v[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6}, {:.6})", self.x, self.y, self.theta)
    }
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn rotation_matrix(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    /// `self ⊕ other`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.rotation_matrix() * Vector2::new(other.x, other.y);
        Pose2::new(self.x + t[0], self.y + t[1], self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        let t = self.rotation_matrix().transpose() * Vector2::new(self.x, self.y);
        Pose2::new(-t[0], -t[1], -self.theta)
    }

    /// `self⁻¹ ⊕ other`: `other` expressed in the frame of `self`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let d = Vector2::new(other.x - self.x, other.y - self.y);
        let t = self.rotation_matrix().transpose() * d;
        Pose2::new(t[0], t[1], other.theta - self.theta)
    }

    /// Expresses a world point in this pose's frame.
    pub fn transform_to(&self, p: &Point2) -> Point2 {
        let d = Vector2::new(p.x - self.x, p.y - self.y);
        let t = self.rotation_matrix().transpose() * d;
        Point2::new(t[0], t[1])
    }

    /// Maps a point in this pose's frame to the world frame.
    pub fn transform_from(&self, p: &Point2) -> Point2 {
        let t = self.rotation_matrix() * Vector2::new(p.x, p.y);
        Point2::new(self.x + t[0], self.y + t[1])
    }

    pub fn retract(&self, v: &Vector3<f64>) -> Pose2 {
        self.compose(&Pose2::from_vector(v))
    }

    pub fn local(&self, other: &Pose2) -> Vector3<f64> {
        self.between(other).to_vector()
    }

    /// Component-wise difference `self - other` with the angle wrapped.
    pub fn vector_difference(&self, other: &Pose2) -> Vector3<f64> {
        Vector3::new(
            self.x - other.x,
            self.y - other.y,
            wrap_angle(self.theta - other.theta),
        )
    }

    /// Jacobians of `compose(a, b)` w.r.t. `a` and `b`.
    pub fn compose_jacobians(a: &Pose2, b: &Pose2) -> (Matrix3<f64>, Matrix3<f64>) {
        let ra = a.rotation_matrix();
        let rb_t = ra * Vector2::new(b.x, b.y);
        let mut ja = Matrix3::zeros();
        ja.fixed_view_mut::<2, 2>(0, 0).copy_from(&ra);
        ja[(0, 2)] = -rb_t[1];
        ja[(1, 2)] = rb_t[0];
        ja[(2, 2)] = 1.0;

        let mut jb = Matrix3::zeros();
        jb.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&rotation(a.theta + b.theta));
        jb[(2, 2)] = 1.0;
        (ja, jb)
    }

    /// Jacobians of `between(a, b)` w.r.t. `a` and `b`.
    pub fn between_jacobians(a: &Pose2, b: &Pose2) -> (Matrix3<f64>, Matrix3<f64>) {
        let rel = a.between(b);
        let ja = Matrix3::new(
            -1.0, 0.0, rel.y, //
            0.0, -1.0, -rel.x, //
            0.0, 0.0, -1.0,
        );
        let mut jb = Matrix3::zeros();
        jb.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&rotation(b.theta - a.theta));
        jb[(2, 2)] = 1.0;
        (ja, jb)
    }

    /// Jacobians of `transform_to(frame, p)` w.r.t. the frame and the point.
    pub fn transform_to_jacobians(frame: &Pose2, p: &Point2) -> (Matrix2x3<f64>, Matrix2<f64>) {
        let q = frame.transform_to(p);
        let jf = Matrix2x3::new(
            -1.0, 0.0, q.y, //
            0.0, -1.0, -q.x,
        );
        (jf, frame.rotation_matrix().transpose())
    }
}

/// A 2D landmark position in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.x, self.y)
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_squared(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn retract(&self, v: &Vector2<f64>) -> Point2 {
        Point2::new(self.x + v[0], self.y + v[1])
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FD_STEP: f64 = 1e-6;

    fn homogeneous(p: &Pose2) -> Matrix3<f64> {
        let (s, c) = p.theta().sin_cos();
        Matrix3::new(c, -s, p.x(), s, c, p.y(), 0.0, 0.0, 1.0)
    }

    fn from_homogeneous(m: &Matrix3<f64>) -> Pose2 {
        Pose2::new(m[(0, 2)], m[(1, 2)], m[(1, 0)].atan2(m[(0, 0)]))
    }

    fn random_pose(rng: &mut impl Rng) -> Pose2 {
        Pose2::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-PI..PI),
        )
    }

    fn random_point(rng: &mut impl Rng) -> Point2 {
        Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))
    }

    fn assert_pose_close(a: &Pose2, b: &Pose2, tol: f64) {
        let d = a.vector_difference(b);
        assert!(d.amax() < tol, "{a} vs {b}");
    }

    /// Central differences of a vector function under right-perturbation of a pose.
    fn fd_pose<F: Fn(&Pose2) -> DVector<f64>>(p: &Pose2, f: F) -> DMatrix<f64> {
        let f0 = f(p);
        let mut j = DMatrix::zeros(f0.len(), 3);
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = FD_STEP;
            let plus = f(&p.retract(&d));
            let minus = f(&p.retract(&-d));
            let mut col = (&plus - &minus) / (2.0 * FD_STEP);
            if f0.len() == 3 {
                // angle outputs are wrapped
                col[2] = wrap_angle(plus[2] - minus[2]) / (2.0 * FD_STEP);
            }
            j.set_column(k, &col);
        }
        j
    }

    fn fd_point<F: Fn(&Point2) -> DVector<f64>>(p: &Point2, f: F) -> DMatrix<f64> {
        let f0 = f(p);
        let mut j = DMatrix::zeros(f0.len(), 2);
        for k in 0..2 {
            let mut d = Vector2::zeros();
            d[k] = FD_STEP;
            let col = (f(&p.retract(&d)) - f(&p.retract(&-d))) / (2.0 * FD_STEP);
            j.set_column(k, &col);
        }
        j
    }

    fn dv3(p: Pose2) -> DVector<f64> {
        DVector::from_column_slice(p.to_vector().as_slice())
    }

    fn dv2(p: Point2) -> DVector<f64> {
        DVector::from_column_slice(&[p.x, p.y])
    }

    fn assert_matrix_close(analytic: &[f64], numeric: &DMatrix<f64>, tol: f64) {
        // nalgebra storage is column-major on both sides
        for (a, n) in analytic.iter().zip(numeric.as_slice()) {
            assert!((a - n).abs() < tol, "analytic {analytic:?} numeric {numeric}");
        }
    }

    #[test]
    fn compose_examples() {
        assert_pose_close(
            &Pose2::identity().compose(&Pose2::new(1.0, 2.0, 0.5)),
            &Pose2::new(1.0, 2.0, 0.5),
            1e-12,
        );
        assert_pose_close(
            &Pose2::new(1.0, 0.0, PI / 2.0).compose(&Pose2::new(1.0, 0.0, 0.0)),
            &Pose2::new(1.0, 1.0, PI / 2.0),
            1e-12,
        );
        let a = Pose2::new(0.3, -0.2, 0.7);
        let b = Pose2::new(0.5, 0.1, -0.3);
        let expected = from_homogeneous(&(homogeneous(&a) * homogeneous(&b)));
        assert_pose_close(&a.compose(&b), &expected, 1e-12);
    }

    #[test]
    fn between_examples() {
        let p = Pose2::new(0.4, -1.3, 2.9);
        assert_pose_close(&p.between(&p), &Pose2::identity(), 1e-12);
        assert_pose_close(
            &Pose2::identity().between(&Pose2::new(2.0, 0.0, 0.0)),
            &Pose2::new(2.0, 0.0, 0.0),
            1e-12,
        );
        let a = Pose2::new(1.0, 1.0, PI / 2.0);
        let b = Pose2::new(1.0, 3.0, PI / 2.0);
        let oracle = from_homogeneous(&(homogeneous(&a).try_inverse().unwrap() * homogeneous(&b)));
        assert_pose_close(&oracle, &Pose2::new(2.0, 0.0, 0.0), 1e-12);
        assert_pose_close(&a.between(&b), &oracle, 1e-12);
    }

    #[test]
    fn transform_to_examples() {
        let p = Pose2::identity().transform_to(&Point2::new(3.0, 4.0));
        assert!(p.distance(&Point2::new(3.0, 4.0)) < 1e-12);
        let p = Pose2::new(1.0, 1.0, PI / 2.0).transform_to(&Point2::new(1.0, 3.0));
        assert!(p.distance(&Point2::new(2.0, 0.0)) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = random_pose(&mut rng);
            let q = random_point(&mut rng);
            let h = homogeneous(&f).try_inverse().unwrap() * Vector3::new(q.x, q.y, 1.0);
            assert!(f.transform_to(&q).distance(&Point2::new(h[0], h[1])) < 1e-12);
            assert!(f.transform_from(&f.transform_to(&q)).distance(&q) < 1e-12);
        }
    }

    #[test]
    fn between_jacobian_wrt_b_at_equal_poses_is_identity() {
        let p = Pose2::new(0.7, -0.4, 1.1);
        let (_, jb) = Pose2::between_jacobians(&p, &p);
        assert!((jb - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let q = random_point(&mut rng);

            let (ja, jb) = Pose2::compose_jacobians(&a, &b);
            assert_matrix_close(ja.as_slice(), &fd_pose(&a, |x| dv3(x.compose(&b))), 1e-5);
            assert_matrix_close(jb.as_slice(), &fd_pose(&b, |x| dv3(a.compose(x))), 1e-5);

            let (ja, jb) = Pose2::between_jacobians(&a, &b);
            assert_matrix_close(ja.as_slice(), &fd_pose(&a, |x| dv3(x.between(&b))), 1e-5);
            assert_matrix_close(jb.as_slice(), &fd_pose(&b, |x| dv3(a.between(x))), 1e-5);

            let (jf, jp) = Pose2::transform_to_jacobians(&a, &q);
            assert_matrix_close(jf.as_slice(), &fd_pose(&a, |x| dv2(x.transform_to(&q))), 1e-5);
            assert_matrix_close(jp.as_slice(), &fd_point(&q, |x| dv2(a.transform_to(x))), 1e-5);
        }
    }

    #[test]
    fn transform_to_jacobian_at_zero_heading() {
        let frame = Pose2::new(0.5, -0.25, 0.0);
        let q = Point2::new(2.0, 1.5);
        let (jf, _) = Pose2::transform_to_jacobians(&frame, &q);
        let numeric = fd_pose(&frame, |x| dv2(x.transform_to(&q)));
        assert_matrix_close(jf.as_slice(), &numeric, 1e-5);
    }

    #[test]
    fn group_laws_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            assert_pose_close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-9);
            assert_pose_close(&a.compose(&a.between(&b)), &b, 1e-9);
            assert_pose_close(&Pose2::identity().compose(&a), &a, 1e-12);
            assert_pose_close(&a.compose(&Pose2::identity()), &a, 1e-12);
            assert_pose_close(&a.compose(&a.inverse()), &Pose2::identity(), 1e-9);
        }
    }

    #[test]
    fn wrap_boundary_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(Pose2::new(0.0, 0.0, 3.0 * PI).theta(), PI);
    }

    proptest! {
        #[test]
        fn wrap_is_periodic(theta in -50.0f64..50.0, k in -20i32..20) {
            let a = wrap_angle(theta);
            let b = wrap_angle(theta + 2.0 * PI * k as f64);
            prop_assert!(a.abs() <= PI && a > -PI);
            prop_assert!(wrap_angle(a - b).abs() < 1e-9);
        }

        #[test]
        fn retract_local_round_trip(
            x in -5.0f64..5.0, y in -5.0f64..5.0, t in -3.1f64..3.1,
            dx in -0.5f64..0.5, dy in -0.5f64..0.5, dt in -0.5f64..0.5,
        ) {
            let p = Pose2::new(x, y, t);
            let v = Vector3::new(dx, dy, dt);
            prop_assert!((p.local(&p.retract(&v)) - v).amax() < 1e-9);
            prop_assert_eq!(p.retract(&Vector3::zeros()), p);
        }
    }
}
