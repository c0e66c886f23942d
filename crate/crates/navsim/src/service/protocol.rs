//! Wire types of the WebSocket protocol. See `docs/protocol.md`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use navsim_core::runtime::{Mode, Verdict};
use navsim_core::world::Bounds2;

pub const PROTOCOL_VERSION: u32 = 1;
/// Magic of binary voxel frames.
pub const VOXEL_MAGIC: [u8; 4] = *b"NVS1";

/// Server-side rate caps in sim-time Hz.
pub const TELEMETRY_MAX_HZ: f64 = 30.0;
pub const MAP_MAX_HZ: f64 = 2.0;
pub const VOXELS_MAX_HZ: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub t_sim: f64,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Observer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientHello {
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub speed_limit: f64,
    pub inflation_radius: f64,
    pub voxel_size: f64,
    pub map_origin: [f64; 3],
    pub map_dims: [usize; 3],
    pub grid: GridInfo,
    pub tick_hz: u64,
    pub camera_hz: f64,
    pub imu_hz: f64,
    pub cruise_alt: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Sim seconds per wall second.
    pub time_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub name: String,
    /// `None` for event-driven streams that are never throttled.
    pub max_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerHello {
    pub protocol_version: u32,
    pub world_bounds: Bounds2,
    pub config: ConfigSummary,
    pub streams: Vec<StreamInfo>,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub name: String,
    #[serde(default)]
    pub max_hz: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subscribe {
    pub streams: Vec<Subscription>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandKind {
    SetGoal {
        x: f64,
        y: f64,
    },
    /// Heading-frame velocity (x forward, z up) and yaw rate.
    Teleop {
        vx: f64,
        vy: f64,
        vz: f64,
        #[serde(default)]
        yaw_rate: f64,
    },
    Mode {
        mode: Mode,
    },
    Pause {
        #[serde(default = "yes")]
        paused: bool,
    },
    Reset {
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    /// Client-chosen id echoed in the ack or nack.
    pub id: u64,
    #[serde(flatten)]
    pub command: CommandKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// Id of the acknowledged command; absent for hello and subscribe.
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(rename = "for")]
    pub to: String,
    /// Sim time of the tick at which the command takes effect.
    #[serde(default)]
    pub applied_t: Option<f64>,
    #[serde(default)]
    pub clamped: bool,
    /// The command as applied (after clamping).
    #[serde(default)]
    pub applied: Option<CommandKind>,
    #[serde(default)]
    pub role: Option<Role>,
    #[serde(default)]
    pub streams: Option<Vec<StreamInfo>>,
}

impl Ack {
    pub fn new(to: &str) -> Self {
        Self {
            id: None,
            to: to.into(),
            applied_t: None,
            clamped: false,
            applied: None,
            role: None,
            streams: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NackReason {
    NoAuthority,
    InvalidGoal,
    SimPaused,
    WrongMode,
    GoalOutsideMap,
    NonFinite,
    Malformed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nack {
    #[serde(default)]
    pub id: Option<u64>,
    pub reason: NackReason,
    pub message: String,
    /// Free cell centre closest to a rejected goal.
    #[serde(default)]
    pub nearest_free: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateMsg {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub tick: u64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Quaternion as x, y, z, w.
    pub orientation: [f64; 4],
    pub yaw: f64,
    pub estimate: EstimateMsg,
    pub mode: Mode,
    pub goal: Option<[f64; 2]>,
    pub queued_goals: usize,
    pub goals_reached: u32,
    pub verdict: Option<Verdict>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathMsg {
    pub goal: [f64; 2],
    pub waypoints: Vec<[f64; 2]>,
    pub length: f64,
    pub goal_relocated: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelsMsg {
    pub count: usize,
    pub voxel_size: f64,
    /// The points follow in the next binary frame.
    pub binary: bool,
}

/// Binary voxel frame: magic, u32 count, then `count` xyz f32 triples, all
/// little-endian.
pub fn encode_voxels(points: &[[f32; 3]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 12 * points.len());
    out.extend_from_slice(&VOXEL_MAGIC);
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_voxels(bytes: &[u8]) -> Option<Vec<[f32; 3]>> {
    if bytes.len() < 8 || bytes[..4] != VOXEL_MAGIC {
        return None;
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().ok()?) as usize;
    let body = &bytes[8..];
    if body.len() != 12 * n {
        return None;
    }
    Some(
        body.chunks_exact(12)
            .map(|c| {
                let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
                [f(0), f(1), f(2)]
            })
            .collect(),
    )
}
