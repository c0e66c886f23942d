//! Static obstacle world: axis-aligned boxes over a ground plane at `z = 0`.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::dynamics::RigidBodyState;
use crate::math::{sqrt, Pose, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("obstacle {index}: min must be < max on every axis (min={min:?}, max={max:?})")]
    InvertedBox {
        index: usize,
        min: [f64; 3],
        max: [f64; 3],
    },
    #[error("obstacle {index}: non-finite coordinate")]
    NonFinite { index: usize },
    #[error("obstacle {index} lies entirely outside the world bounds")]
    OutsideBounds { index: usize },
    #[error("world bounds are empty or inverted")]
    BadBounds,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Bounds2 {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds2 {
    pub fn square(half: f64) -> Self {
        Self {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn depth(&self) -> f64 {
        self.y_max - self.y_min
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// Strict interior test.
    pub fn contains_strict(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            let d = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            acc += d * d;
        }
        sqrt(acc)
    }

    /// Slab test. Returns the entry distance along the ray when the ray hits
    /// the box in front of the origin.
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3) -> Option<f64> {
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        for i in 0..3 {
            if inv_dir[i].is_infinite() {
                // parallel to this slab
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let t1 = (self.min[i] - origin[i]) * inv_dir[i];
            let t2 = (self.max[i] - origin[i]) * inv_dir[i];
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            if lo > t_enter {
                t_enter = lo;
            }
            if hi < t_exit {
                t_exit = hi;
            }
        }
        if t_enter <= t_exit && t_exit > 0.0 {
            Some(if t_enter > 0.0 { t_enter } else { 0.0 })
        } else {
            None
        }
    }
}

/// Immutable obstacle world.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WorldModel {
    bounds: Bounds2,
    obstacles: Vec<Aabb>,
}

impl WorldModel {
    pub fn new(bounds: Bounds2, obstacles: Vec<Aabb>) -> Result<Self, WorldError> {
        let finite = [bounds.x_min, bounds.x_max, bounds.y_min, bounds.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || bounds.x_min >= bounds.x_max || bounds.y_min >= bounds.y_max {
            return Err(WorldError::BadBounds);
        }
        for (index, b) in obstacles.iter().enumerate() {
            if !(b.min.iter().chain(b.max.iter()).all(|v| v.is_finite())) {
                return Err(WorldError::NonFinite { index });
            }
            if (0..3).any(|i| b.min[i] >= b.max[i]) {
                return Err(WorldError::InvertedBox {
                    index,
                    min: [b.min.x, b.min.y, b.min.z],
                    max: [b.max.x, b.max.y, b.max.z],
                });
            }
            let overlaps = b.max.x > bounds.x_min
                && b.min.x < bounds.x_max
                && b.max.y > bounds.y_min
                && b.min.y < bounds.y_max;
            if !overlaps {
                return Err(WorldError::OutsideBounds { index });
            }
        }
        Ok(Self { bounds, obstacles })
    }

    pub fn empty(bounds: Bounds2) -> Self {
        Self {
            bounds,
            obstacles: Vec::new(),
        }
    }

    pub fn bounds(&self) -> &Bounds2 {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Aabb] {
        &self.obstacles
    }

    /// Distance to the first surface hit along a unit-length ray, or `None`
    /// if nothing is hit within `max_range`. Rays starting inside an
    /// obstacle (or below ground) report `0.0`.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        self.ray_hit_inv(origin, dir, &inv, max_range)
    }

    pub(crate) fn ray_hit_inv(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        inv_dir: &Vec3,
        max_range: f64,
    ) -> Option<f64> {
        if origin.z < 0.0 {
            return Some(0.0);
        }
        let mut best = f64::INFINITY;
        if dir.z < 0.0 {
            best = origin.z / -dir.z;
        }
        for b in &self.obstacles {
            if b.contains_strict(origin) {
                return Some(0.0);
            }
            if let Some(t) = b.ray_entry(origin, inv_dir) {
                if t < best {
                    best = t;
                }
            }
        }
        if best <= max_range {
            Some(best)
        } else {
            None
        }
    }

    /// Whether a point lies inside an obstacle or below ground.
    pub fn is_occupied(&self, p: &Vec3) -> bool {
        p.z < 0.0 || self.obstacles.iter().any(|b| b.contains(p))
    }

    /// Distance from `p` to the nearest obstacle box (ground excluded).
    pub fn clearance(&self, p: &Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|b| b.distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Pose of the IMU link in the inertial frame.
pub fn ground_truth_pose(state: &RigidBodyState, body_to_imu: &Pose) -> Pose {
    state.pose().compose(body_to_imu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{quat_exp, quat_log, Quat};
    use crate::rng::{SimRng, Stream};

    fn world_20() -> WorldModel {
        WorldModel::new(Bounds2::square(10.0), Vec::new()).unwrap()
    }

    fn box_world() -> WorldModel {
        WorldModel::new(
            Bounds2::square(10.0),
            alloc::vec![
                Aabb::new(Vec3::new(2.0, -1.0, 0.0), Vec3::new(3.0, 1.0, 2.0)),
                Aabb::new(Vec3::new(-4.0, -4.0, 0.0), Vec3::new(-2.5, -3.0, 1.2)),
                Aabb::new(Vec3::new(-1.0, 3.0, 0.5), Vec3::new(1.0, 4.0, 3.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn empty_world_has_no_obstacles() {
        assert_eq!(world_20().obstacles().len(), 0);
    }

    #[test]
    fn inverted_box_rejected() {
        let err = WorldModel::new(
            Bounds2::square(10.0),
            alloc::vec![Aabb::new(
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 2.0, 1.0)
            )],
        )
        .unwrap_err();
        assert!(matches!(err, WorldError::InvertedBox { index: 0, .. }));
    }

    #[test]
    fn box_outside_bounds_rejected() {
        let err = WorldModel::new(
            Bounds2::square(10.0),
            alloc::vec![Aabb::new(
                Vec3::new(11.0, 0.0, 0.0),
                Vec3::new(12.0, 1.0, 1.0)
            )],
        )
        .unwrap_err();
        assert_eq!(err, WorldError::OutsideBounds { index: 0 });
    }

    #[test]
    fn ground_hit() {
        let d = world_20().ray_hit(&Vec3::new(0.0, 0.0, 1.0), &Vec3::new(0.0, 0.0, -1.0), 10.0);
        assert_eq!(d, Some(1.0));
    }

    #[test]
    fn inside_box_is_zero() {
        let w = box_world();
        let d = w.ray_hit(&Vec3::new(2.5, 0.0, 1.0), &Vec3::x(), 10.0);
        assert_eq!(d, Some(0.0));
    }

    #[test]
    fn horizon_ray_misses() {
        assert_eq!(
            world_20().ray_hit(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x(), 100.0),
            None
        );
    }

    #[test]
    fn face_hit_exact() {
        let w = box_world();
        let d = w
            .ray_hit(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x(), 10.0)
            .unwrap();
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn max_range_monotone() {
        let w = box_world();
        let mut rng = SimRng::new(3, Stream::Test);
        for _ in 0..500 {
            let o = Vec3::new(
                rng.uniform(-6.0, 6.0),
                rng.uniform(-6.0, 6.0),
                rng.uniform(0.1, 2.5),
            );
            let d = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalize();
            let full = w.ray_hit(&o, &d, 50.0);
            for r in [0.5, 2.0, 5.0, 20.0] {
                match (full, w.ray_hit(&o, &d, r)) {
                    (Some(a), Some(b)) => assert_eq!(a, b),
                    (Some(a), None) => assert!(a > r),
                    (None, None) => {}
                    (None, Some(_)) => panic!("shrinking range created a hit"),
                }
            }
        }
    }

    #[test]
    fn clearance_to_box() {
        let w = box_world();
        assert!((w.clearance(&Vec3::new(0.0, 0.0, 1.0)) - 2.0).abs() < 1e-12);
        assert_eq!(w.clearance(&Vec3::new(2.5, 0.0, 1.0)), 0.0);
    }

    #[test]
    fn gt_pose_identity_and_offset() {
        let s = RigidBodyState::at_rest(Vec3::zeros(), Quat::identity());
        assert_eq!(ground_truth_pose(&s, &Pose::identity()), Pose::identity());
        let imu = Pose::from_translation(Vec3::new(0.12, 0.0, 0.0));
        let p = ground_truth_pose(&s, &imu);
        assert_eq!(p.position, Vec3::new(0.12, 0.0, 0.0));
    }

    #[test]
    fn gt_pose_roundtrip() {
        let mut rng = SimRng::new(11, Stream::Test);
        for _ in 0..100 {
            let q = quat_exp(&rng.normal3(1.0));
            let s = RigidBodyState::at_rest(rng.normal3(5.0), q);
            let ext = Pose::new(rng.normal3(0.2), quat_exp(&rng.normal3(0.5)));
            let imu = ground_truth_pose(&s, &ext);
            let back = imu.compose(&ext.inverse());
            assert!((back.position - s.position).norm() < 1e-12);
            assert!(quat_log(&(back.orientation.inverse() * s.orientation)).norm() < 1e-12);
        }
    }
}
