//! Simulation configuration with defaults for every field.

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControllerGains, VehicleParams};
use crate::localization::{FusionParams, VioNoiseModel};
use crate::mapping::{LocalMapParams, OccupancyParams};
use crate::math::{Pose, Vec3};
use crate::planning::PlannerParams;
use crate::sensors::{
    intrinsics_from_fov, CameraExtrinsics, CameraIntrinsics, ImuParams, SensorError,
};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub hfov: f64,
    pub max_range: f64,
    /// Additive Gaussian depth noise, m.
    pub depth_noise_sigma: f64,
    /// Depth is rendered at `1/render_decimation` of the nominal resolution.
    pub render_decimation: u32,
    /// Pixel stride of the point cloud taken from the rendered image.
    pub cloud_stride: u32,
    pub extrinsics: CameraExtrinsics,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            hfov: 1.5,
            max_range: 8.0,
            depth_noise_sigma: 0.0,
            render_decimation: 4,
            cloud_stride: 1,
            extrinsics: CameraExtrinsics::default(),
        }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics, SensorError> {
        intrinsics_from_fov(self.width, self.height, self.hfov)
    }

    pub fn render_intrinsics(&self) -> Result<CameraIntrinsics, SensorError> {
        self.intrinsics()?.decimated(self.render_decimation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MappingConfig {
    pub occupancy: OccupancyParams,
    /// Height band collapsed into the 2-D grid, m.
    pub z_band: [f64; 2],
    pub local: LocalMapParams,
    /// Global map integration rate, Hz.
    pub integrate_hz: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            occupancy: OccupancyParams::default(),
            z_band: [0.6, 2.0],
            local: LocalMapParams::default(),
            integrate_hz: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    pub physics_dt: f64,
    pub gravity: f64,
    pub vehicle_mass: f64,
    pub inertia_diag: [f64; 3],
    pub camera_hz: f64,
    pub imu_hz: f64,
    pub ground_truth_hz: f64,
    pub speed_limit: f64,
    pub voxel_size: f64,
    pub map_dims: [usize; 3],
    pub map_origin: [f64; 3],
    pub inflation_radius: f64,
    pub rng_seed: u64,
    pub camera: CameraConfig,
    /// IMU pose in the body frame.
    pub imu_extrinsic: Pose,
    pub imu: ImuParams,
    pub vio: VioNoiseModel,
    pub fusion: FusionParams,
    pub mapping: MappingConfig,
    pub planner: PlannerParams,
    pub controller: ControllerGains,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            physics_dt: 1.0 / 400.0,
            gravity: 9.81,
            vehicle_mass: 1.5,
            inertia_diag: [0.029125, 0.029125, 0.055225],
            camera_hz: 30.0,
            imu_hz: 200.0,
            ground_truth_hz: 50.0,
            speed_limit: 1.0,
            voxel_size: 0.2,
            map_dims: [110, 110, 15],
            map_origin: [-11.0, -11.0, 0.0],
            inflation_radius: 0.4,
            rng_seed: 0,
            camera: CameraConfig::default(),
            imu_extrinsic: Pose::identity(),
            imu: ImuParams::default(),
            vio: VioNoiseModel::default(),
            fusion: FusionParams::default(),
            mapping: MappingConfig::default(),
            planner: PlannerParams::default(),
            controller: ControllerGains::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid {
        field: &'static str,
        reason: &'static str,
    },
}

fn check(ok: bool, field: &'static str, reason: &'static str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid { field, reason })
    }
}

/// Whether `rate` divides `base` to an integer within 1e-9.
fn divides(base: f64, rate: f64) -> bool {
    if !(rate > 0.0) {
        return false;
    }
    let r = base / rate;
    (r - crate::math::round(r)).abs() < 1e-9 && r >= 1.0 - 1e-9
}

impl SimConfig {
    pub fn vehicle(&self) -> VehicleParams {
        VehicleParams {
            mass: self.vehicle_mass,
            inertia: Vec3::from(self.inertia_diag),
            gravity: self.gravity,
        }
    }

    pub fn physics_hz(&self) -> f64 {
        1.0 / self.physics_dt
    }

    /// Every periodic task rate, physics first.
    pub fn task_rates(&self) -> [(&'static str, f64); 7] {
        [
            ("physics", self.physics_hz()),
            ("imu", self.imu_hz),
            ("camera", self.camera_hz),
            ("ground_truth", self.ground_truth_hz),
            ("mapping", self.mapping.integrate_hz),
            ("global_planner", self.planner.global_hz),
            ("local_planner", self.planner.local_hz),
        ]
    }

    /// Scheduler tick rate: the least common multiple of the task rates
    /// (rates must be integers in Hz).
    pub fn tick_hz(&self) -> Result<u64, ConfigError> {
        let mut l: u64 = 1;
        for (name, r) in self.task_rates() {
            let ri = crate::math::round(r);
            if !(r > 0.0) || (r - ri).abs() > 1e-9 {
                return Err(ConfigError::Invalid {
                    field: name,
                    reason: "rate must be a positive integer in Hz",
                });
            }
            let ri = ri as u64;
            l = l / gcd(l, ri) * ri;
            if l > 1_000_000 {
                return Err(ConfigError::Invalid {
                    field: name,
                    reason: "rates have no common tick below 1 MHz",
                });
            }
        }
        Ok(l)
    }

    /// Vehicle planning speed setting fed to the local planner.
    pub fn planner_params(&self) -> PlannerParams {
        let mut p = self.planner;
        p.has.corridor_radius = self.inflation_radius;
        p
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check(
            self.physics_dt > 0.0 && self.physics_dt <= 0.01,
            "physics_dt",
            "must lie in (0, 0.01]",
        )?;
        check(
            self.gravity > 0.0 && self.gravity.is_finite(),
            "gravity",
            "must be positive",
        )?;
        check(self.vehicle_mass > 0.0, "vehicle_mass", "must be positive")?;
        check(
            self.inertia_diag.iter().all(|i| *i > 0.0),
            "inertia_diag",
            "must be positive",
        )?;
        check(
            self.speed_limit > 0.0 && self.speed_limit.is_finite(),
            "speed_limit",
            "must be positive",
        )?;
        check(self.voxel_size > 0.0, "voxel_size", "must be positive")?;
        check(
            self.map_dims.iter().all(|d| *d >= 1),
            "map_dims",
            "all dimensions must be at least 1",
        )?;
        check(
            self.inflation_radius >= 0.0,
            "inflation_radius",
            "must be non-negative",
        )?;
        let tick = self.tick_hz()? as f64;
        for (name, r) in self.task_rates() {
            check(
                divides(tick, r),
                name,
                "rate must divide the scheduler tick rate",
            )?;
        }
        check(
            self.vio.fix_rate == self.camera_hz,
            "vio.fix_rate",
            "must equal camera_hz",
        )?;
        check(
            self.imu.is_valid(),
            "imu",
            "noise parameters must be non-negative",
        )?;
        check(
            self.vio.is_valid(),
            "vio",
            "noise parameters must be non-negative",
        )?;
        check(
            (0.0..=1.0).contains(&self.fusion.gain),
            "fusion.gain",
            "must lie in [0, 1]",
        )?;
        check(
            self.camera.intrinsics().is_ok(),
            "camera",
            "width/height >= 1 and hfov in (0, pi)",
        )?;
        check(
            self.camera.render_intrinsics().is_ok(),
            "camera.render_decimation",
            "too large for the image",
        )?;
        check(
            self.camera.max_range > 0.0,
            "camera.max_range",
            "must be positive",
        )?;
        check(
            self.camera.depth_noise_sigma >= 0.0,
            "camera.depth_noise_sigma",
            "must be non-negative",
        )?;
        check(
            self.camera.cloud_stride >= 1,
            "camera.cloud_stride",
            "must be at least 1",
        )?;
        check(
            self.camera.extrinsics.is_valid(),
            "camera.extrinsics",
            "rotations must be orthonormal",
        )?;
        check(
            self.mapping.occupancy.is_valid(),
            "mapping.occupancy",
            "inconsistent log-odds parameters",
        )?;
        check(
            self.mapping.z_band[1] > self.mapping.z_band[0],
            "mapping.z_band",
            "upper bound must exceed lower",
        )?;
        check(
            self.mapping.local.is_valid(),
            "mapping.local",
            "bin counts >= 1 and positive extents",
        )?;
        let p = &self.planner;
        check(
            p.cruise_speed > 0.0,
            "planner.cruise_speed",
            "must be positive",
        )?;
        check(
            p.t_min > 0.0 && p.t_max >= p.t_min,
            "planner.t_min",
            "need 0 < t_min <= t_max",
        )?;
        check(
            p.goal_tolerance > 0.0,
            "planner.goal_tolerance",
            "must be positive",
        )?;
        check(
            p.has.step > 0.0 && p.has.delta > 0.0,
            "planner.has",
            "step and delta must be positive",
        )?;
        check(
            p.speed_margin >= 0.0 && p.speed_margin < self.speed_limit,
            "planner.speed_margin",
            "must lie in [0, speed_limit)",
        )?;
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_valid() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tick_hz().unwrap(), 1200);
        assert_eq!(c.map_dims.iter().product::<usize>(), 181_500);
        let k = c.camera.intrinsics().unwrap();
        assert!((k.fx - 343.4963).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = SimConfig::default();
        c.speed_limit = 0.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.imu_hz = 199.5;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.map_dims = [0, 10, 10];
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.physics_dt = 0.0;
        assert!(c.validate().is_err());
    }
}
