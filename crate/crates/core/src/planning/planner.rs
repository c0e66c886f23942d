#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::dynamics::Setpoint;
use crate::mapping::{EsdfMap2D, LocalCylindricalMap, ProjectedGrid2D, UnknownPolicy};
use crate::math::{atan2, cos, wrap_angle, Vec2, Vec3};

use super::{
    backup_plan, bezier_local_goal, heuristic_angular_search, jps_plan, min_acc_primitive,
    preprocess_grid, BackupPlan, BackupReason, GlobalPath, HasParams, LocalGoal, MotionPrimitive,
    PlanError,
};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PlannerParams {
    pub global_hz: f64,
    pub local_hz: f64,
    pub cruise_alt: f64,
    pub cruise_speed: f64,
    /// Primitives stay this far below the speed limit, m/s.
    pub speed_margin: f64,
    pub lookahead: f64,
    pub has: HasParams,
    pub t_min: f64,
    pub t_max: f64,
    /// Horizontal distance at which a goal counts as reached, m.
    pub goal_tolerance: f64,
    pub backup_decel: f64,
    pub backup_hold: f64,
    /// Yaw lead commanded while scanning, rad.
    pub yaw_scan_step: f64,
    pub unknown_is: UnknownPolicy,
    pub esdf_max: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            global_hz: 15.0,
            local_hz: 60.0,
            cruise_alt: 1.0,
            cruise_speed: 0.7,
            speed_margin: 0.15,
            lookahead: 2.0,
            has: HasParams::default(),
            t_min: 0.2,
            t_max: 5.0,
            goal_tolerance: 0.15,
            backup_decel: 1.5,
            backup_hold: 0.5,
            yaw_scan_step: 0.6,
            unknown_is: UnknownPolicy::Free,
            esdf_max: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPlanOutput {
    pub path: GlobalPath,
    pub local_goal: LocalGoal,
}

/// Path search on the inflated projected grid plus local-goal extraction.
#[derive(Clone, Debug)]
pub struct GlobalPlanner {
    pub params: PlannerParams,
    pub inflation_radius: f64,
}

impl GlobalPlanner {
    pub fn new(params: PlannerParams, inflation_radius: f64) -> Self {
        Self {
            params,
            inflation_radius,
        }
    }

    pub fn plan(
        &self,
        grid: &ProjectedGrid2D,
        vehicle: &Vec2,
        goal: &Vec2,
    ) -> Result<GlobalPlanOutput, PlanError> {
        let inflated = preprocess_grid(
            grid,
            self.inflation_radius,
            self.params.unknown_is,
            &[*vehicle, *goal],
        );
        let path = jps_plan(&inflated, vehicle, goal)?;
        let local_goal = bezier_local_goal(
            &path,
            vehicle,
            self.params.cruise_alt,
            self.params.lookahead,
        )
        .ok_or(PlanError::NoPath)?;
        Ok(GlobalPlanOutput { path, local_goal })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalStep {
    pub setpoint: Setpoint,
    pub waypoint: Option<Vec3>,
    pub primitive: Option<MotionPrimitive>,
    /// Set on the tick a backup plan starts.
    pub backup: Option<BackupPlan>,
    pub reached: bool,
}

/// Receding-horizon local loop: every tick searches a waypoint, fits a
/// primitive from the commanded velocity and emits its next velocity.
#[derive(Clone, Debug)]
pub struct LocalPlanner {
    pub params: PlannerParams,
    speed_limit: f64,
    last_cmd: Vec3,
    backup: Option<BackupPlan>,
    backup_count: u32,
}

impl LocalPlanner {
    pub fn new(params: PlannerParams, speed_limit: f64) -> Self {
        Self {
            params,
            speed_limit,
            last_cmd: Vec3::zeros(),
            backup: None,
            backup_count: 0,
        }
    }

    pub fn reset(&mut self) {
        self.last_cmd = Vec3::zeros();
        self.backup = None;
    }

    pub fn backup_count(&self) -> u32 {
        self.backup_count
    }

    pub fn in_backup(&self) -> bool {
        self.backup.is_some()
    }

    fn speed_cap(&self) -> f64 {
        (self.speed_limit - self.params.speed_margin).max(0.1 * self.speed_limit)
    }

    fn fit(&self, position: &Vec3, waypoint: &Vec3, v1: Vec3, t: f64) -> Option<MotionPrimitive> {
        let p = &self.params;
        let dist = (waypoint - position).norm();
        let cap = self.speed_cap();
        for terminal in [v1, Vec3::zeros()] {
            let mut duration = (dist / p.cruise_speed).clamp(p.t_min, p.t_max);
            for _ in 0..40 {
                let prim = min_acc_primitive(
                    position,
                    &self.last_cmd,
                    waypoint,
                    &terminal,
                    duration,
                    p.t_min,
                    t,
                )
                .ok()?;
                if prim.max_speed(1e-3) <= cap {
                    return Some(prim);
                }
                duration *= 1.15;
            }
        }
        None
    }

    fn start_backup(&mut self, position: &Vec3, t: f64, reason: BackupReason) -> BackupPlan {
        let plan = backup_plan(
            position,
            &self.last_cmd,
            self.params.backup_decel,
            self.params.backup_hold,
            t,
            reason,
        );
        if self.backup.is_none() {
            self.backup_count += 1;
        }
        self.backup = Some(plan);
        plan
    }

    /// One local-loop tick. `final_goal` is the mission target (at cruise
    /// altitude), `local_goal` the latest output of the global loop.
    pub fn step(
        &mut self,
        t: f64,
        position: &Vec3,
        yaw: f64,
        local: &LocalCylindricalMap,
        esdf: Option<&EsdfMap2D>,
        local_goal: Option<&LocalGoal>,
        final_goal: &Vec3,
    ) -> LocalStep {
        let p = self.params;
        let dt = 1.0 / p.local_hz;
        if (final_goal.xy() - position.xy()).norm() <= p.goal_tolerance {
            self.reset();
            return LocalStep {
                setpoint: Setpoint::position(*final_goal, yaw),
                waypoint: None,
                primitive: None,
                backup: None,
                reached: true,
            };
        }
        let found = local_goal.and_then(|g| {
            heuristic_angular_search(local, esdf, position, g, &p.has).map(|r| (g, r))
        });
        let planned = found.and_then(|(g, r)| {
            let to_wp = r.waypoint - position;
            let is_final =
                (g.point - final_goal).norm() < 1e-6 && (r.waypoint - g.point).norm() < 1e-6;
            let v1 = if is_final || to_wp.norm() < 1e-9 {
                Vec3::zeros()
            } else {
                to_wp.normalize() * p.cruise_speed.min(self.speed_cap())
            };
            self.fit(position, &r.waypoint, v1, t).map(|prim| (r, prim))
        });
        let Some((r, prim)) = planned else {
            let reason = match (local_goal, found) {
                (None, _) => BackupReason::NoGlobalPath,
                (_, None) => BackupReason::NoFeasibleWaypoint,
                _ => BackupReason::PrimitiveInfeasible,
            };
            let fresh = self.backup.is_none();
            let plan = match self.backup {
                Some(b) => b,
                None => self.start_backup(position, t, reason),
            };
            let target = wrap_angle(yaw + p.yaw_scan_step);
            // decelerate along the primitive, then hold its end point
            let setpoint = if t + dt < plan.primitive.end_time() {
                let v = plan.primitive.sample_at(t + dt).velocity;
                self.last_cmd = v;
                Setpoint::velocity(v, target)
            } else {
                self.last_cmd = Vec3::zeros();
                Setpoint::position(
                    plan.primitive.sample(plan.primitive.duration).position,
                    target,
                )
            };
            return LocalStep {
                setpoint,
                waypoint: None,
                primitive: Some(plan.primitive),
                backup: fresh.then_some(plan),
                reached: false,
            };
        };
        self.backup = None;
        let to_wp = r.waypoint - position;
        let desired_yaw = if to_wp.xy().norm() > 0.05 {
            atan2(to_wp.y, to_wp.x)
        } else {
            yaw
        };
        // slow down while the camera is not looking where the vehicle goes
        let c45 = cos(core::f64::consts::FRAC_PI_4);
        let scale = ((cos(wrap_angle(desired_yaw - yaw)) - c45) / (1.0 - c45)).clamp(0.0, 1.0);
        let v = prim.sample(dt).velocity * scale;
        self.last_cmd = v;
        LocalStep {
            setpoint: Setpoint::velocity(v, desired_yaw),
            waypoint: Some(r.waypoint),
            primitive: Some(prim),
            backup: None,
            reached: false,
        }
    }
}
