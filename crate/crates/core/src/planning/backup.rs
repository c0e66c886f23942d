#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::Vec3;

use super::MotionPrimitive;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BackupReason {
    NoFeasibleWaypoint,
    NoGlobalPath,
    PrimitiveInfeasible,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BackupPlan {
    pub primitive: MotionPrimitive,
    /// Request a yaw sweep so the camera refreshes the surroundings.
    pub yaw_scan: bool,
    pub reason: BackupReason,
}

/// Straight-line deceleration to hover at constant `decel`; a vehicle
/// already at rest gets a hold primitive of `hold_time`.
pub fn backup_plan(
    position: &Vec3,
    velocity: &Vec3,
    decel: f64,
    hold_time: f64,
    start_time: f64,
    reason: BackupReason,
) -> BackupPlan {
    let speed = velocity.norm();
    let primitive = if speed <= 1e-9 || decel <= 0.0 {
        MotionPrimitive::hold(*position, hold_time, start_time)
    } else {
        let t = speed / decel;
        let c2 = -velocity / (2.0 * t);
        MotionPrimitive {
            coeffs: [
                [position.x, velocity.x, c2.x, 0.0],
                [position.y, velocity.y, c2.y, 0.0],
                [position.z, velocity.z, c2.z, 0.0],
            ],
            duration: t,
            start_time,
        }
    };
    BackupPlan {
        primitive,
        yaw_scan: true,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decelerates_monotonically() {
        let b = backup_plan(
            &Vec3::zeros(),
            &Vec3::new(1.0, 0.0, 0.0),
            2.0,
            0.5,
            0.0,
            BackupReason::NoFeasibleWaypoint,
        );
        let m = b.primitive;
        assert!(m.sample(m.duration).velocity.norm() < 1e-12);
        let mut last = f64::INFINITY;
        for k in 0..=100 {
            let s = m.sample(m.duration * k as f64 / 100.0).velocity.norm();
            assert!(s <= last + 1e-15);
            last = s;
        }
        assert!((m.sample(m.duration).position.x - 0.25).abs() < 1e-12);
        assert!(b.yaw_scan);
    }

    #[test]
    fn hover_holds() {
        let p = Vec3::new(1.0, 2.0, 1.0);
        let b = backup_plan(
            &p,
            &Vec3::zeros(),
            2.0,
            0.5,
            3.0,
            BackupReason::NoFeasibleWaypoint,
        );
        assert_eq!(b.primitive.sample(0.3).position, p);
        assert_eq!(b.primitive.sample(0.3).velocity, Vec3::zeros());
    }
}
