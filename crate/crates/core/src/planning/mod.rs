//! Two-loop planner: global grid search with a Bezier local goal, and a
//! local loop of heuristic angular search plus minimum-acceleration
//! primitives, with a hover-and-scan backup.

mod backup;
mod bezier;
mod grid;
mod has;
mod jps;
mod planner;
mod primitive;

pub use backup::{backup_plan, BackupPlan, BackupReason};
pub use bezier::{bezier2, bezier_local_goal, LocalGoal};
pub use grid::{disk_offsets, preprocess_grid, InflatedGrid};
pub use has::{
    candidate_passes, candidate_waypoint, has_candidates, heuristic_angular_search, HasParams,
    HasResult,
};
pub use jps::{
    dijkstra_cost, jps_cells, jps_plan, nearest_free, neighbours, GlobalPath, GridCost, PlanError,
    RELOCATE_RADIUS,
};
pub use planner::{GlobalPlanOutput, GlobalPlanner, LocalPlanner, LocalStep, PlannerParams};
pub use primitive::{min_acc_primitive, MotionPrimitive, PrimitiveError, PrimitiveSample};
