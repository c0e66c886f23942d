//! Scalar helpers, vector aliases and rigid poses.
//!
//! Every transcendental function used by the core goes through `libm` so
//! that results do not depend on the platform libm or on whether `std` is
//! linked. Keep it that way: log determinism depends on it.

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

pub const PI: f64 = core::f64::consts::PI;
pub const SQRT_2: f64 = core::f64::consts::SQRT_2;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn tan(x: f64) -> f64 {
    libm::tan(x)
}
#[inline]
pub fn atan(x: f64) -> f64 {
    libm::atan(x)
}
#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}
#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x)
}
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a - two_pi * floor((a + PI) / two_pi);
    if r <= -PI {
        r += two_pi;
    }
    r
}

/// Log-odds to probability.
#[inline]
pub fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + exp(-l))
}

/// Probability to log-odds.
#[inline]
pub fn logit(p: f64) -> f64 {
    libm::log(p / (1.0 - p))
}

/// Quaternion for a rotation of `angle` radians about the unit `axis`.
///
/// Built from raw coordinates so the result is bit-reproducible.
pub fn quat_axis_angle(axis: &Vec3, angle: f64) -> Quat {
    let half = 0.5 * angle;
    let s = sin(half);
    Quat::new_unchecked(Quaternion::new(
        cos(half),
        axis.x * s,
        axis.y * s,
        axis.z * s,
    ))
}

pub fn quat_from_yaw(yaw: f64) -> Quat {
    quat_axis_angle(&Vec3::z(), yaw)
}

/// Exponential map of a rotation vector.
pub fn quat_exp(rotvec: &Vec3) -> Quat {
    let angle = sqrt(rotvec.norm_squared());
    if angle < 1e-12 {
        // second order accurate, renormalized
        let q = Quaternion::new(1.0, 0.5 * rotvec.x, 0.5 * rotvec.y, 0.5 * rotvec.z);
        return normalize_quat(q);
    }
    quat_axis_angle(&(rotvec / angle), angle)
}

/// Rotation vector of a unit quaternion (shortest arc).
pub fn quat_log(q: &Quat) -> Vec3 {
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = sqrt(v.norm_squared());
    if s < 1e-12 {
        return 2.0 * v;
    }
    let angle = 2.0 * atan2(s, w);
    v * (angle / s)
}

pub fn normalize_quat(q: Quaternion<f64>) -> Quat {
    let n = sqrt(q.coords.norm_squared());
    Quat::new_unchecked(Quaternion::from(q.coords / n))
}

/// Yaw (rotation about inertial z) of an attitude, ZYX convention.
pub fn yaw_of(q: &Quat) -> f64 {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
}

/// Roll, pitch, yaw (ZYX convention).
pub fn euler_of(q: &Quat) -> (f64, f64, f64) {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let roll = atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
    let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    let pitch = libm::asin(sp);
    (roll, pitch, yaw_of(q))
}

/// Spherical interpolation from `a` towards `b` by `t` in `[0, 1]`.
pub fn slerp(a: &Quat, b: &Quat, t: f64) -> Quat {
    if t <= 0.0 {
        return *a;
    }
    if t >= 1.0 {
        return *b;
    }
    let delta = a.inverse() * b;
    a * quat_exp(&(quat_log(&delta) * t))
}

/// Rigid transform: orientation then translation. Maps points from the
/// child frame into the parent frame.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: Quat::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self {
            position,
            orientation: Quat::identity(),
        }
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    pub fn yaw(&self) -> f64 {
        yaw_of(&self.orientation)
    }

    /// Builds a pose from a row-major 3x4 `[R | t]` block, re-normalizing
    /// the rotation through a quaternion.
    pub fn from_matrix_rows(rows: [[f64; 4]; 3]) -> Pose {
        let m = nalgebra::Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        );
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        Pose {
            position: Vec3::new(rows[0][3], rows[1][3], rows[2][3]),
            orientation: Quat::from_rotation_matrix(&rot),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = 0.37 + k as f64;
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert!((sin(w) - sin(a)).abs() < 1e-12);
        }
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn exp_log_roundtrip() {
        let v = Vec3::new(0.3, -0.2, 1.1);
        let q = quat_exp(&v);
        assert!((quat_log(&q) - v).norm() < 1e-12);
    }

    #[test]
    fn pose_inverse() {
        let p = Pose::new(
            Vec3::new(1.0, 2.0, 3.0),
            quat_exp(&Vec3::new(0.1, 0.2, 0.3)),
        );
        let id = p.compose(&p.inverse());
        assert!(id.position.norm() < 1e-12);
        assert!(id.orientation.angle() < 1e-12);
    }

    #[test]
    fn yaw_extraction() {
        assert!((yaw_of(&quat_from_yaw(1.2)) - 1.2).abs() < 1e-12);
        let (r, p, y) = euler_of(&(quat_from_yaw(0.5) * quat_axis_angle(&Vec3::y(), 0.2)));
        assert!(r.abs() < 1e-12 && (p - 0.2).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
    }
}
