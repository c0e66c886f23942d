//! Simulated depth camera and IMU.

mod camera;
mod imu;

pub use camera::{
    add_depth_noise, depth_to_pointcloud, intrinsics_from_fov, render_depth, CameraExtrinsics,
    CameraIntrinsics, DepthImage, PointCloud,
};
pub use imu::{sample_imu, ImuBias, ImuParams, ImuSample};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensorError {
    #[error("domain error: {0}")]
    Domain(&'static str),
}
