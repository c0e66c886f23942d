use alloc::boxed::Box;
use alloc::vec::Vec;

use super::log::{Phase, Record, RecordBody};

/// Normalized topic names.
pub mod topics {
    pub const STATE: &str = "state";
    pub const IMU: &str = "imu";
    pub const GROUND_TRUTH: &str = "ground_truth";
    pub const CAMERA_POINTS: &str = "camera/points";
    pub const IMU_PATH: &str = "imu_path";
    pub const VISION_PATH: &str = "vision_path";
    pub const LOCALMAP: &str = "localmap";
    pub const GLOBALMAP: &str = "globalmap";
    pub const OCCUPANCY_GRID: &str = "occupancygrid";
    pub const ESDF_MAP: &str = "esdf_map";
    pub const JPS_PATH: &str = "jps_path";
    pub const LOCAL_WP: &str = "local_wp";
    pub const GLOBAL_GOAL: &str = "global_goal";
    pub const CMD_VEL: &str = "cmd_vel";
    pub const OPERATOR: &str = "operator";
    pub const EVENTS: &str = "events";
    pub const MAP_SNAPSHOT: &str = "map_snapshot";
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TopicRate {
    /// Published every period of the given rate, Hz.
    Periodic(f64),
    /// Published at most at the given rate, Hz (only while the producer is
    /// active).
    UpTo(f64),
    /// Published when something happens.
    Aperiodic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopicSpec {
    pub name: &'static str,
    pub rate: TopicRate,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BusError {
    #[error("publish to undeclared topic `{0}`")]
    Undeclared(&'static str),
    #[error("topic `{0}` declared twice")]
    Redeclared(&'static str),
    #[error("sim time may not run backwards ({from} -> {to})")]
    TimeReversal { from: f64, to: f64 },
}

type Subscriber = Box<dyn FnMut(&Record) + Send>;

/// In-process publish/subscribe bus. Every message is stamped with the
/// current simulation time, assigned a global sequence number, delivered
/// synchronously to subscribers in subscription order and appended to the
/// log.
pub struct TopicBus {
    specs: Vec<TopicSpec>,
    counts: Vec<u64>,
    subscribers: Vec<(usize, Subscriber)>,
    next_seq: u64,
    tick: u64,
    now: f64,
    records: Vec<Record>,
}

impl core::fmt::Debug for TopicBus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TopicBus")
            .field("specs", &self.specs)
            .field("counts", &self.counts)
            .field("next_seq", &self.next_seq)
            .field("now", &self.now)
            .finish()
    }
}

impl Default for TopicBus {
    fn default() -> Self {
        Self::new()
    }
}

impl TopicBus {
    pub fn new() -> Self {
        Self {
            specs: Vec::new(),
            counts: Vec::new(),
            subscribers: Vec::new(),
            next_seq: 0,
            tick: 0,
            now: 0.0,
            records: Vec::new(),
        }
    }

    pub fn declare(&mut self, spec: TopicSpec) -> Result<(), BusError> {
        if self.index(spec.name).is_some() {
            return Err(BusError::Redeclared(spec.name));
        }
        self.specs.push(spec);
        self.counts.push(0);
        Ok(())
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn specs(&self) -> &[TopicSpec] {
        &self.specs
    }

    pub fn spec(&self, name: &str) -> Option<&TopicSpec> {
        self.index(name).map(|i| &self.specs[i])
    }

    /// Messages published so far on `name`.
    pub fn count(&self, name: &str) -> Option<u64> {
        self.index(name).map(|i| self.counts[i])
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn set_time(&mut self, tick: u64, t: f64) -> Result<(), BusError> {
        if t < self.now {
            return Err(BusError::TimeReversal {
                from: self.now,
                to: t,
            });
        }
        self.tick = tick;
        self.now = t;
        Ok(())
    }

    pub fn subscribe(&mut self, topic: &'static str, f: Subscriber) -> Result<(), BusError> {
        let i = self.index(topic).ok_or(BusError::Undeclared(topic))?;
        self.subscribers.push((i, f));
        Ok(())
    }

    pub fn publish(&mut self, phase: Phase, body: RecordBody) -> Result<u64, BusError> {
        let name = body.topic();
        let i = self.index(name).ok_or(BusError::Undeclared(name))?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.counts[i] += 1;
        let rec = Record {
            seq,
            tick: self.tick,
            phase,
            t: self.now,
            body,
        };
        for (topic, f) in self.subscribers.iter_mut() {
            if *topic == i {
                f(&rec);
            }
        }
        self.records.push(rec);
        Ok(seq)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Removes and returns the records published so far.
    pub fn take_records(&mut self) -> Vec<Record> {
        core::mem::take(&mut self.records)
    }
}
