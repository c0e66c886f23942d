use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::dynamics::{BodyWrench, RigidBodyState, Setpoint};
use crate::localization::OdometryEstimate;
use crate::mapping::ProjectedGrid2D;
use crate::math::{Pose, Vec2, Vec3};
use crate::planning::{BackupReason, GlobalPath, LocalGoal, PlanError};
use crate::sensors::ImuSample;
use crate::world::WorldModel;

use super::bus::topics;
use super::scenario::{Mode, ScenarioScript};

pub const SCHEMA_VERSION: u32 = 1;

/// Stage of a scheduler tick. Records within one tick appear in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    Input,
    Physics,
    Sensors,
    Estimator,
    Mapping,
    Planning,
    Control,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Command {
    SetGoal {
        x: f64,
        y: f64,
    },
    /// Velocity in the heading frame (x forward, z up) and yaw rate.
    Teleop {
        velocity: Vec3,
        yaw_rate: f64,
    },
    SetMode {
        mode: Mode,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CommandSource {
    Planner,
    Backup,
    Teleop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FailureReason {
    Collision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "outcome", rename_all = "snake_case"))]
pub enum Verdict {
    Success,
    Failure { reason: FailureReason },
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "event", rename_all = "snake_case"))]
pub enum Event {
    GoalAccepted {
        index: u32,
        goal: Vec2,
    },
    GoalReached {
        index: u32,
        goal: Vec2,
        estimate: Vec3,
        truth: Vec3,
    },
    PlanFailed {
        error: PlanError,
    },
    Backup {
        reason: BackupReason,
    },
    Failsafe,
    ModeChanged {
        mode: Mode,
    },
    Collision {
        position: Vec3,
    },
    Verdict {
        verdict: Verdict,
    },
}

/// One depth frame turned into points. Points are kept in memory only
/// when cloud recording is enabled; file writers move them to a side file
/// and fill in `offset`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CloudFrame {
    pub frame: u64,
    /// Camera pose the points are expressed in.
    pub sensor_pose: Pose,
    pub count: u32,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub offset: Option<u64>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub points: Vec<[f32; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", content = "data", rename_all = "snake_case")
)]
pub enum RecordBody {
    /// Rigid-body state after a physics step and the wrench that produced it.
    State {
        state: RigidBodyState,
        wrench: BodyWrench,
    },
    Imu(ImuSample),
    GroundTruth {
        pose: Pose,
        velocity: Vec3,
    },
    PointCloud(CloudFrame),
    ImuPath(OdometryEstimate),
    VisionPath {
        fix: Pose,
        estimate: OdometryEstimate,
    },
    LocalMap {
        points: u32,
        occupied_cells: u32,
    },
    GlobalMap {
        observed_voxels: u32,
        occupied_voxels: u32,
    },
    OccupancyGrid {
        free: u32,
        occupied: u32,
        unknown: u32,
    },
    EsdfMap {
        min_distance: f64,
    },
    JpsPath {
        goal: Vec2,
        path: GlobalPath,
    },
    GlobalGoal(LocalGoal),
    LocalWaypoint {
        waypoint: Vec3,
    },
    CmdVel {
        setpoint: Setpoint,
        source: CommandSource,
    },
    Operator(Command),
    Event(Event),
    MapSnapshot(ProjectedGrid2D),
}

impl RecordBody {
    pub fn topic(&self) -> &'static str {
        match self {
            RecordBody::State { .. } => topics::STATE,
            RecordBody::Imu(_) => topics::IMU,
            RecordBody::GroundTruth { .. } => topics::GROUND_TRUTH,
            RecordBody::PointCloud(_) => topics::CAMERA_POINTS,
            RecordBody::ImuPath(_) => topics::IMU_PATH,
            RecordBody::VisionPath { .. } => topics::VISION_PATH,
            RecordBody::LocalMap { .. } => topics::LOCALMAP,
            RecordBody::GlobalMap { .. } => topics::GLOBALMAP,
            RecordBody::OccupancyGrid { .. } => topics::OCCUPANCY_GRID,
            RecordBody::EsdfMap { .. } => topics::ESDF_MAP,
            RecordBody::JpsPath { .. } => topics::JPS_PATH,
            RecordBody::GlobalGoal(_) => topics::GLOBAL_GOAL,
            RecordBody::LocalWaypoint { .. } => topics::LOCAL_WP,
            RecordBody::CmdVel { .. } => topics::CMD_VEL,
            RecordBody::Operator(_) => topics::OPERATOR,
            RecordBody::Event(_) => topics::EVENTS,
            RecordBody::MapSnapshot(_) => topics::MAP_SNAPSHOT,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Record {
    pub seq: u64,
    pub tick: u64,
    pub phase: Phase,
    pub t: f64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub body: RecordBody,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LogHeader {
    pub schema_version: u32,
    pub tick_hz: u64,
    pub config: SimConfig,
    pub world: WorldModel,
    pub script: ScenarioScript,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimLog {
    pub header: LogHeader,
    pub records: Vec<Record>,
}

impl SimLog {
    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    /// Sim time of the last record.
    pub fn duration(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    pub fn topic_count(&self, topic: &str) -> usize {
        self.records
            .iter()
            .filter(|r| r.body.topic() == topic)
            .count()
    }

    pub fn events(&self) -> impl Iterator<Item = (&Record, &Event)> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Event(e) => Some((r, e)),
            _ => None,
        })
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.events().find_map(|(_, e)| match e {
            Event::Verdict { verdict } => Some(*verdict),
            _ => None,
        })
    }

    /// Checks the ordering contract: sequence numbers consecutive, time
    /// non-decreasing, and phases non-decreasing within a tick.
    pub fn check_order(&self) -> Result<(), usize> {
        for (i, w) in self.records.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            let ok = b.seq == a.seq + 1
                && b.t >= a.t
                && b.tick >= a.tick
                && (b.tick > a.tick || b.phase >= a.phase);
            if !ok {
                return Err(i + 1);
            }
        }
        Ok(())
    }
}
