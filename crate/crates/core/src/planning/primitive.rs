#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::Vec3;

/// Per-axis cubic `p(t) = c0 + c1 t + c2 t^2 + c3 t^3` on `[0, duration]`,
/// started at `start_time`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MotionPrimitive {
    /// `coeffs[axis] = [c0, c1, c2, c3]`.
    pub coeffs: [[f64; 4]; 3],
    pub duration: f64,
    pub start_time: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrimitiveError {
    #[error("duration {duration} s below the minimum {t_min} s")]
    DegenerateDuration { duration: f64, t_min: f64 },
}

/// Position, velocity and acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimitiveSample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl MotionPrimitive {
    /// Holds `p` with zero velocity for `duration`.
    pub fn hold(p: Vec3, duration: f64, start_time: f64) -> Self {
        Self {
            coeffs: [
                [p.x, 0.0, 0.0, 0.0],
                [p.y, 0.0, 0.0, 0.0],
                [p.z, 0.0, 0.0, 0.0],
            ],
            duration,
            start_time,
        }
    }

    /// Sample at local time `t`, clamped to `[0, duration]`.
    pub fn sample(&self, t: f64) -> PrimitiveSample {
        let t = t.clamp(0.0, self.duration);
        let mut p = Vec3::zeros();
        let mut v = Vec3::zeros();
        let mut a = Vec3::zeros();
        for ax in 0..3 {
            let [c0, c1, c2, c3] = self.coeffs[ax];
            p[ax] = c0 + t * (c1 + t * (c2 + t * c3));
            v[ax] = c1 + t * (2.0 * c2 + 3.0 * c3 * t);
            a[ax] = 2.0 * c2 + 6.0 * c3 * t;
        }
        PrimitiveSample {
            position: p,
            velocity: v,
            acceleration: a,
        }
    }

    /// Sample at absolute time.
    pub fn sample_at(&self, time: f64) -> PrimitiveSample {
        self.sample(time - self.start_time)
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    /// `integral of |a|^2` over the primitive.
    pub fn cost(&self) -> f64 {
        let t = self.duration;
        self.coeffs
            .iter()
            .map(|[_, _, c2, c3]| {
                4.0 * c2 * c2 * t + 12.0 * c2 * c3 * t * t + 12.0 * c3 * c3 * t * t * t
            })
            .sum()
    }

    /// Largest speed over a sampling of the primitive at `step` seconds
    /// (endpoints included).
    pub fn max_speed(&self, step: f64) -> f64 {
        let n = (self.duration / step) as usize + 1;
        (0..=n)
            .map(|k| {
                self.sample(self.duration * k as f64 / n as f64)
                    .velocity
                    .norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Cubic minimising the integrated squared acceleration between fixed
/// position and velocity at both ends.
pub fn min_acc_primitive(
    p0: &Vec3,
    v0: &Vec3,
    p1: &Vec3,
    v1: &Vec3,
    duration: f64,
    t_min: f64,
    start_time: f64,
) -> Result<MotionPrimitive, PrimitiveError> {
    if !(duration >= t_min && duration > 0.0) {
        return Err(PrimitiveError::DegenerateDuration { duration, t_min });
    }
    let t = duration;
    let mut coeffs = [[0.0; 4]; 3];
    for ax in 0..3 {
        let d = p1[ax] - p0[ax];
        coeffs[ax] = [
            p0[ax],
            v0[ax],
            (3.0 * d - (2.0 * v0[ax] + v1[ax]) * t) / (t * t),
            (-2.0 * d + (v0[ax] + v1[ax]) * t) / (t * t * t),
        ];
    }
    Ok(MotionPrimitive {
        coeffs,
        duration,
        start_time,
    })
}
