#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{quat_exp, quat_from_yaw, slerp, sqrt, Pose, Vec3};
use crate::rng::SimRng;
use crate::sensors::ImuSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OdometrySource {
    ImuPropagated,
    VisionCorrected,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OdometryEstimate {
    pub pose: Pose,
    pub velocity: Vec3,
    pub timestamp: f64,
    pub source: OdometrySource,
}

impl OdometryEstimate {
    pub fn at(pose: Pose, velocity: Vec3, timestamp: f64) -> Self {
        Self {
            pose,
            velocity,
            timestamp,
            source: OdometrySource::ImuPropagated,
        }
    }
}

/// Strapdown step: orientation from the gyro, specific force rotated at the
/// interval midpoint attitude, gravity added back, then velocity and
/// position integrated.
pub fn propagate_imu(
    prev: &OdometryEstimate,
    sample: &ImuSample,
    gravity: f64,
) -> OdometryEstimate {
    let dt = sample.timestamp - prev.timestamp;
    if !(dt > 0.0) {
        return *prev;
    }
    let q0 = prev.pose.orientation;
    let q_mid = q0 * quat_exp(&(sample.omega_m * (0.5 * dt)));
    let q1 = q0 * quat_exp(&(sample.omega_m * dt));
    let accel = q_mid * sample.a_m + Vec3::new(0.0, 0.0, -gravity);
    let velocity = prev.velocity + accel * dt;
    let position = prev.pose.position + prev.velocity * dt + accel * (0.5 * dt * dt);
    OdometryEstimate {
        pose: Pose::new(position, q1),
        velocity,
        timestamp: sample.timestamp,
        source: OdometrySource::ImuPropagated,
    }
}

/// Output statistics of the emulated visual odometry.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VioNoiseModel {
    /// White position noise per fix, m.
    pub fix_position_sigma: f64,
    /// White yaw noise per fix, rad.
    pub fix_yaw_sigma: f64,
    /// Drift random walk, m per sqrt(m) travelled.
    pub drift_rate_sigma: f64,
    pub fix_rate: f64,
}

impl Default for VioNoiseModel {
    fn default() -> Self {
        Self {
            fix_position_sigma: 0.02,
            fix_yaw_sigma: 0.005,
            drift_rate_sigma: 0.025,
            fix_rate: 30.0,
        }
    }
}

impl VioNoiseModel {
    pub fn zero() -> Self {
        Self {
            fix_position_sigma: 0.0,
            fix_yaw_sigma: 0.0,
            drift_rate_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.fix_position_sigma,
            self.fix_yaw_sigma,
            self.drift_rate_sigma,
        ]
        .iter()
        .all(|s| s.is_finite() && *s >= 0.0)
            && self.fix_rate > 0.0
    }
}

/// Accumulated drift and the position at which it was last advanced.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct VioDrift {
    pub offset: Vec3,
    pub last_position: Option<Vec3>,
    pub distance: f64,
}

/// One emulated vision fix for the ground-truth pose.
pub fn vision_fix(
    gt_pose: &Pose,
    model: &VioNoiseModel,
    drift: &mut VioDrift,
    rng: &mut SimRng,
) -> Pose {
    let travelled = drift
        .last_position
        .map_or(0.0, |p| (gt_pose.position - p).norm());
    drift.last_position = Some(gt_pose.position);
    drift.distance += travelled;
    if model.drift_rate_sigma > 0.0 && travelled > 0.0 {
        drift.offset += rng.normal3(model.drift_rate_sigma) * sqrt(travelled);
    }
    let mut pose = *gt_pose;
    pose.position += drift.offset;
    if model.fix_position_sigma > 0.0 {
        pose.position += rng.normal3(model.fix_position_sigma);
    }
    if model.fix_yaw_sigma > 0.0 {
        pose.orientation = quat_from_yaw(rng.normal(model.fix_yaw_sigma)) * pose.orientation;
    }
    pose
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FusionParams {
    /// Pose blend factor per fix, in [0, 1].
    pub gain: f64,
    /// Fraction of the pose innovation rate fed into velocity.
    pub velocity_gain: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            gain: 0.3,
            velocity_gain: 0.02,
        }
    }
}

/// Complementary update toward a vision fix. `period` is the fix interval
/// used to turn the position innovation into a velocity correction.
pub fn fuse(
    propagated: &OdometryEstimate,
    fix: &Pose,
    gain: f64,
    velocity_gain: f64,
    period: f64,
) -> OdometryEstimate {
    let gain = gain.clamp(0.0, 1.0);
    let innovation = fix.position - propagated.pose.position;
    let (position, orientation) = if gain >= 1.0 {
        (fix.position, fix.orientation)
    } else {
        (
            propagated.pose.position + innovation * gain,
            slerp(&propagated.pose.orientation, &fix.orientation, gain),
        )
    };
    let mut velocity = propagated.velocity;
    if period > 0.0 && gain > 0.0 {
        velocity += innovation * (gain * velocity_gain / period);
    }
    OdometryEstimate {
        pose: Pose::new(position, orientation),
        velocity,
        timestamp: propagated.timestamp,
        source: OdometrySource::VisionCorrected,
    }
}

/// IMU-rate estimator with vision-rate corrections.
#[derive(Clone, Debug)]
pub struct Estimator {
    estimate: OdometryEstimate,
    gravity: f64,
    fusion: FusionParams,
    model: VioNoiseModel,
    drift: VioDrift,
    rng: SimRng,
}

impl Estimator {
    pub fn new(
        initial: OdometryEstimate,
        gravity: f64,
        fusion: FusionParams,
        model: VioNoiseModel,
        rng: SimRng,
    ) -> Self {
        Self {
            estimate: initial,
            gravity,
            fusion,
            model,
            drift: VioDrift::default(),
            rng,
        }
    }

    pub fn estimate(&self) -> &OdometryEstimate {
        &self.estimate
    }

    pub fn drift(&self) -> &VioDrift {
        &self.drift
    }

    pub fn on_imu(&mut self, sample: &ImuSample) -> OdometryEstimate {
        self.estimate = propagate_imu(&self.estimate, sample, self.gravity);
        self.estimate
    }

    /// Emulates a vision fix of `gt_pose` and fuses it. Returns the fix and
    /// the corrected estimate.
    pub fn on_vision(&mut self, gt_pose: &Pose) -> (Pose, OdometryEstimate) {
        let fix = vision_fix(gt_pose, &self.model, &mut self.drift, &mut self.rng);
        self.estimate = fuse(
            &self.estimate,
            &fix,
            self.fusion.gain,
            self.fusion.velocity_gain,
            1.0 / self.model.fix_rate,
        );
        (fix, self.estimate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;
    use crate::rng::Stream;

    fn sample(a: Vec3, w: Vec3, t: f64) -> ImuSample {
        ImuSample {
            omega_m: w,
            a_m: a,
            timestamp: t,
        }
    }

    #[test]
    fn hover_stays_put() {
        let mut e = OdometryEstimate::at(
            Pose::from_translation(Vec3::new(0.0, 0.0, 1.0)),
            Vec3::zeros(),
            0.0,
        );
        for k in 1..=200 {
            e = propagate_imu(
                &e,
                &sample(Vec3::new(0.0, 0.0, 9.81), Vec3::zeros(), k as f64 * 0.005),
                9.81,
            );
        }
        assert!((e.pose.position - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-6);
    }

    #[test]
    fn constant_climb() {
        let mut e = OdometryEstimate::at(Pose::identity(), Vec3::zeros(), 0.0);
        for k in 1..=200 {
            e = propagate_imu(
                &e,
                &sample(Vec3::new(0.0, 0.0, 10.81), Vec3::zeros(), k as f64 * 0.005),
                9.81,
            );
        }
        assert!((e.pose.position.z - 0.5).abs() < 1e-9);
        assert!((e.velocity.z - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_model_fix_is_exact() {
        let gt = Pose::new(Vec3::new(1.0, 2.0, 3.0), quat_from_yaw(0.7));
        let mut d = VioDrift::default();
        let mut rng = SimRng::new(3, Stream::Vision);
        assert_eq!(
            vision_fix(&gt, &VioNoiseModel::zero(), &mut d, &mut rng),
            gt
        );
        let moved = Pose::new(Vec3::new(5.0, 2.0, 3.0), quat_from_yaw(0.7));
        assert_eq!(
            vision_fix(&moved, &VioNoiseModel::zero(), &mut d, &mut rng),
            moved
        );
        assert_eq!(d.distance, 4.0);
    }

    #[test]
    fn fuse_gain_extremes() {
        let prop = OdometryEstimate::at(Pose::identity(), Vec3::new(0.3, 0.0, 0.0), 1.0);
        let fix = Pose::new(Vec3::new(1.0, 0.0, 0.0), quat_from_yaw(0.4));
        let full = fuse(&prop, &fix, 1.0, 0.2, 1.0 / 30.0);
        assert_eq!(full.pose, fix);
        assert_eq!(full.source, OdometrySource::VisionCorrected);
        let again = fuse(&full, &fix, 1.0, 0.2, 1.0 / 30.0);
        assert_eq!(again.pose, full.pose);
        assert_eq!(again.velocity, full.velocity);
        let none = fuse(&prop, &fix, 0.0, 0.2, 1.0 / 30.0);
        assert_eq!(none.pose, prop.pose);
        assert_eq!(none.velocity, prop.velocity);
        let half = fuse(&prop, &fix, 0.5, 0.2, 1.0 / 30.0);
        assert_eq!(half.pose.position, Vec3::new(0.5, 0.0, 0.0));
        let _ = Quat::identity();
    }
}
