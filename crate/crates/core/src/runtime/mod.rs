//! Fixed-step scheduler, topic bus, scenario scripts and the simulation log.
//!
//! The scheduler ticks at the least common multiple of all task rates
//! (1200 Hz with the defaults). Within one tick the due tasks run in a
//! fixed order: operator input, physics, sensors, estimator, mapping,
//! planning, control. Every published message carries the tick, the phase
//! and a global sequence number so the order can be checked after the fact.

mod bus;
mod log;
mod metrics;
mod scenario;
mod sim;

pub use bus::{topics, BusError, TopicBus, TopicRate, TopicSpec};
pub use log::{
    CloudFrame, Command, CommandSource, Event, FailureReason, LogHeader, Phase, Record, RecordBody,
    SimLog, Verdict, SCHEMA_VERSION,
};
pub use metrics::{
    evaluate, real_time_factor, replay_localization, trajectory_pair, MissionMetrics,
};
pub use scenario::{Mode, ScenarioAction, ScenarioEvent, ScenarioScript, ScriptError};
pub use sim::{
    run_scenario, run_scenario_observed, script_start, topic_specs, Clock, CommandError, NullClock,
    RunError, RunOptions, RunOutcome, Schedule, Sim, Stage, StageStats, StageTimings,
};
