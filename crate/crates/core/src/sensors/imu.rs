//! IMU with white noise and random-walk biases.

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::dynamics::RigidBodyState;
use crate::math::{sqrt, Vec3};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ImuParams {
    /// Gyro white noise, rad/s.
    pub sigma_omega: f64,
    /// Accelerometer white noise, m/s^2.
    pub sigma_a: f64,
    /// Gyro bias random walk, rad/s per sqrt(s).
    pub sigma_omega_b: f64,
    /// Accelerometer bias random walk, m/s^2 per sqrt(s).
    pub sigma_a_b: f64,
}

impl Default for ImuParams {
    fn default() -> Self {
        Self {
            sigma_omega: 0.005,
            sigma_a: 0.05,
            sigma_omega_b: 1e-4,
            sigma_a_b: 1e-3,
        }
    }
}

impl ImuParams {
    pub fn zero() -> Self {
        Self {
            sigma_omega: 0.0,
            sigma_a: 0.0,
            sigma_omega_b: 0.0,
            sigma_a_b: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.sigma_omega,
            self.sigma_a,
            self.sigma_omega_b,
            self.sigma_a_b,
        ]
        .iter()
        .all(|s| s.is_finite() && *s >= 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ImuBias {
    pub gyro: Vec3,
    pub accel: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ImuSample {
    pub omega_m: Vec3,
    pub a_m: Vec3,
    pub timestamp: f64,
}

/// Measures the state with the current biases, then advances the biases by
/// one random-walk step of length `dt`.
///
/// `accel_inertial` is the kinematic acceleration; the accelerometer reports
/// specific force `R^T (a - g_vec)` in the body frame.
pub fn sample_imu(
    state: &RigidBodyState,
    accel_inertial: &Vec3,
    gravity: f64,
    params: &ImuParams,
    bias: &mut ImuBias,
    rng: &mut SimRng,
    dt: f64,
    timestamp: f64,
) -> ImuSample {
    let g_vec = Vec3::new(0.0, 0.0, -gravity);
    let specific = state
        .orientation
        .inverse_transform_vector(&(accel_inertial - g_vec));
    let omega_m = state.angular_velocity + bias.gyro + rng.normal3(params.sigma_omega);
    let a_m = specific + bias.accel + rng.normal3(params.sigma_a);
    let sdt = sqrt(dt.max(0.0));
    bias.gyro += rng.normal3(params.sigma_omega_b) * sdt;
    bias.accel += rng.normal3(params.sigma_a_b) * sdt;
    ImuSample {
        omega_m,
        a_m,
        timestamp,
    }
}
