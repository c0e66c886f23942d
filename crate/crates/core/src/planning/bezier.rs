#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{atan2, Vec2, Vec3};

use super::GlobalPath;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LocalGoal {
    pub point: Vec3,
    pub heading: f64,
}

/// Quadratic Bezier point for control points `p0, p1, p2`.
pub fn bezier2(p0: &Vec2, p1: &Vec2, p2: &Vec2, t: f64) -> Vec2 {
    let s = 1.0 - t;
    p0 * (s * s) + p1 * (2.0 * s * t) + p2 * (t * t)
}

/// Local goal on the tangent of the Bezier curve through the first three
/// path waypoints, `lookahead` metres from the first one (or less when the
/// path is shorter). Paths of one waypoint yield that waypoint; two
/// waypoints give the straight segment.
pub fn bezier_local_goal(
    path: &GlobalPath,
    vehicle_xy: &Vec2,
    cruise_alt: f64,
    lookahead: f64,
) -> Option<LocalGoal> {
    let w = &path.waypoints;
    let p0 = *w.first()?;
    let goal_xy = if w.len() == 1 {
        p0
    } else {
        // B'(0) = 2 (P1 - P0); the second control point only bends the
        // curve and does not change the tangent at P0.
        let tangent = (w[1] - p0) * 2.0;
        let remaining: f64 = w.windows(2).map(|s| (s[1] - s[0]).norm()).sum();
        let n = tangent.norm();
        if n == 0.0 {
            p0
        } else {
            p0 + tangent * (lookahead.min(remaining) / n)
        }
    };
    let d = goal_xy - vehicle_xy;
    let heading = if d.norm() > 1e-9 {
        atan2(d.y, d.x)
    } else if w.len() > 1 {
        atan2(w[1].y - p0.y, w[1].x - p0.x)
    } else {
        0.0
    };
    Some(LocalGoal {
        point: Vec3::new(goal_xy.x, goal_xy.y, cruise_alt),
        heading,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::GridCost;
    use alloc::vec::Vec;

    fn path(w: Vec<Vec2>) -> GlobalPath {
        GlobalPath {
            waypoints: w,
            length: 0.0,
            cost: GridCost::ZERO,
            goal_relocated: None,
            start_relocated: None,
        }
    }

    #[test]
    fn single_waypoint_is_goal() {
        let g = bezier_local_goal(
            &path(alloc::vec![Vec2::new(3.0, 4.0)]),
            &Vec2::zeros(),
            1.0,
            2.0,
        )
        .unwrap();
        assert_eq!(g.point, Vec3::new(3.0, 4.0, 1.0));
    }

    #[test]
    fn collinear_stays_on_line() {
        let p = path(alloc::vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(3.0, 3.0)
        ]);
        let g = bezier_local_goal(&p, &Vec2::zeros(), 1.0, 2.0).unwrap();
        assert!((g.point.x - g.point.y).abs() < 1e-12);
        assert!((g.point.xy().norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_of_corner() {
        let p = path(alloc::vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0)
        ]);
        let g = bezier_local_goal(&p, &Vec2::zeros(), 1.0, 1.5).unwrap();
        assert_eq!(g.point, Vec3::new(1.5, 0.0, 1.0));
        assert_eq!(g.heading, 0.0);
        // B'(0) by finite difference
        let d = (bezier2(&p.waypoints[0], &p.waypoints[1], &p.waypoints[2], 1e-7) - p.waypoints[0])
            / 1e-7;
        assert!((d - Vec2::new(2.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn short_path_clips() {
        let p = path(alloc::vec![Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0)]);
        let g = bezier_local_goal(&p, &Vec2::zeros(), 1.0, 2.0).unwrap();
        assert_eq!(g.point, Vec3::new(0.5, 0.0, 1.0));
    }
}
