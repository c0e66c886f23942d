//! Odometry emulation and trajectory evaluation.
//!
//! The estimator integrates IMU samples at IMU rate and blends in vision
//! fixes, which are ground truth perturbed by a distance-scaled drift and
//! white noise.

mod ate;
mod estimator;

pub use ate::{
    compute_ate_rmse, Alignment, AteError, StampedPose, TrajectoryPair, ASSOCIATION_TOLERANCE,
};
pub use estimator::{
    fuse, propagate_imu, vision_fix, Estimator, FusionParams, OdometryEstimate, OdometrySource,
    VioDrift, VioNoiseModel,
};
