use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::mapping::{EsdfMap2D, LocalCylindricalMap};
use crate::math::{atan2, cos, sin, sqrt, Vec3};

use super::LocalGoal;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct HasParams {
    /// Horizontal offset increment, rad.
    pub delta: f64,
    /// Largest horizontal offset, rad.
    pub delta_max: f64,
    /// Step length, m.
    pub step: f64,
    /// Vertical tilt per tier, rad.
    pub tilt: f64,
    pub tilt_tiers: u32,
    /// Swept corridor radius checked against the local map, m.
    pub corridor_radius: f64,
    /// Required distance-field clearance along the step, m.
    pub safe_radius: f64,
    /// Allowed waypoint altitude band, m.
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for HasParams {
    fn default() -> Self {
        Self {
            delta: 10f64.to_radians(),
            delta_max: 80f64.to_radians(),
            step: 1.0,
            tilt: 15f64.to_radians(),
            tilt_tiers: 1,
            corridor_radius: 0.4,
            safe_radius: 0.3,
            z_min: 0.4,
            z_max: 2.2,
        }
    }
}

/// Angular offsets `(horizontal, vertical)` in evaluation order: by
/// `|horizontal|`, then `|vertical|`, positive before negative.
pub fn has_candidates(p: &HasParams) -> Vec<(f64, f64)> {
    let nh = if p.delta > 0.0 {
        (p.delta_max / p.delta + 1e-9) as i64
    } else {
        0
    };
    let nv = p.tilt_tiers as i64;
    let mut idx: Vec<(i64, i64)> = Vec::new();
    for h in -nh..=nh {
        for v in -nv..=nv {
            idx.push((h, v));
        }
    }
    idx.sort_by_key(|&(h, v)| (h.abs(), v.abs(), h < 0, v < 0));
    idx.into_iter()
        .map(|(h, v)| (h as f64 * p.delta, v as f64 * p.tilt))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct HasResult {
    pub waypoint: Vec3,
    pub offset: (f64, f64),
}

/// Candidate waypoint for an offset pair.
pub fn candidate_waypoint(
    position: &Vec3,
    goal: &LocalGoal,
    offset: (f64, f64),
    step: f64,
) -> Vec3 {
    let d = goal.point - position;
    let horiz = sqrt(d.x * d.x + d.y * d.y);
    let bearing = if horiz > 1e-9 {
        atan2(d.y, d.x)
    } else {
        goal.heading
    };
    let elevation = atan2(d.z, horiz.max(1e-9)) + offset.1;
    let b = bearing + offset.0;
    let len = step.min(d.norm());
    let dir = Vec3::new(
        cos(elevation) * cos(b),
        cos(elevation) * sin(b),
        sin(elevation),
    );
    position + dir * len
}

/// Whether moving from `a` to `b` keeps the required clearances. Obstacles
/// already inside a clearance radius at `a` only require the motion to
/// increase the distance to them.
pub fn candidate_passes(
    local: &LocalCylindricalMap,
    esdf: Option<&EsdfMap2D>,
    a: &Vec3,
    b: &Vec3,
    p: &HasParams,
) -> bool {
    if b.z < p.z_min || b.z > p.z_max {
        return false;
    }
    let len = (b - a).norm();
    let spacing = 0.05;
    let n = (len / spacing) as usize + 1;
    let la = local.to_local(a);
    let lb = local.to_local(b);
    let margin = spacing / 2.0;
    for c in local.nonzero_cells() {
        let d0 = local.distance_to_cell(&la, c);
        if d0 < p.corridor_radius + margin {
            if local.distance_to_cell(&lb, c) <= d0 {
                return false;
            }
            continue;
        }
        for k in 1..=n {
            let q = la + (lb - la) * (k as f64 / n as f64);
            if local.distance_to_cell(&q, c) < p.corridor_radius + margin {
                return false;
            }
        }
    }
    if let Some(e) = esdf {
        let d0 = e.distance_or_blocked(&a.xy());
        let need = if d0 < p.safe_radius {
            d0
        } else {
            p.safe_radius
        };
        let mut last = d0;
        for k in 1..=n {
            let q = a + (b - a) * (k as f64 / n as f64);
            last = e.distance_or_blocked(&q.xy());
            if last < need {
                return false;
            }
        }
        if d0 < p.safe_radius && last <= d0 {
            return false;
        }
    }
    true
}

/// First candidate, in [`has_candidates`] order, that passes
/// [`candidate_passes`].
pub fn heuristic_angular_search(
    local: &LocalCylindricalMap,
    esdf: Option<&EsdfMap2D>,
    position: &Vec3,
    goal: &LocalGoal,
    p: &HasParams,
) -> Option<HasResult> {
    if (goal.point - position).norm() < 1e-6 {
        return Some(HasResult {
            waypoint: goal.point,
            offset: (0.0, 0.0),
        });
    }
    has_candidates(p).into_iter().find_map(|off| {
        let w = candidate_waypoint(position, goal, off, p.step);
        candidate_passes(local, esdf, position, &w, p).then_some(HasResult {
            waypoint: w,
            offset: off,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{rebuild_local_map, LocalMapParams};
    use crate::math::{Pose, PI};
    use crate::sensors::PointCloud;

    fn goal_ahead() -> LocalGoal {
        LocalGoal {
            point: Vec3::new(3.0, 0.0, 1.0),
            heading: 0.0,
        }
    }

    #[test]
    fn candidate_order() {
        let c = has_candidates(&HasParams::default());
        assert_eq!(c.len(), 17 * 3);
        assert_eq!(c[0], (0.0, 0.0));
        assert!(c[1].0 == 0.0 && c[1].1 > 0.0);
        assert!(c[3].0 > 0.0 && c[3].1 == 0.0);
        assert!(c[4].0 < 0.0 && c[4].1 == 0.0);
        assert!(c[5].0 > 0.0 && c[5].1 > 0.0);
    }

    #[test]
    fn empty_map_goes_straight() {
        let pos = Vec3::new(0.0, 0.0, 1.0);
        let local = rebuild_local_map(
            &PointCloud::default(),
            &Pose::identity(),
            &Pose::from_translation(pos),
            &LocalMapParams::default(),
        );
        let r = heuristic_angular_search(&local, None, &pos, &goal_ahead(), &HasParams::default())
            .unwrap();
        assert_eq!(r.offset, (0.0, 0.0));
        assert!((r.waypoint - Vec3::new(1.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn enclosed_has_no_waypoint() {
        let pos = Vec3::new(0.0, 0.0, 1.0);
        let mut pts = Vec::new();
        for k in 0..720 {
            let a = k as f64 * PI / 360.0;
            for z in [-0.6, -0.3, 0.0, 0.3, 0.6] {
                pts.push(Vec3::new(0.8 * cos(a), 0.8 * sin(a), 1.0 + z));
            }
        }
        let local = rebuild_local_map(
            &PointCloud {
                timestamp: 0.0,
                points: pts,
            },
            &Pose::identity(),
            &Pose::from_translation(pos),
            &LocalMapParams::default(),
        );
        assert!(
            heuristic_angular_search(&local, None, &pos, &goal_ahead(), &HasParams::default())
                .is_none()
        );
    }
}
