use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::Vec3;

use super::log::Command;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    #[default]
    Manual,
    #[cfg_attr(feature = "serde", serde(alias = "auto"))]
    ClickAndFly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ScenarioAction {
    Goal {
        x: f64,
        y: f64,
    },
    /// Heading-frame velocity held for `duration`, then zeroed.
    Teleop {
        velocity: [f64; 3],
        #[cfg_attr(feature = "serde", serde(default))]
        yaw_rate: f64,
        duration: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScenarioEvent {
    pub t: f64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub action: ScenarioAction,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScenarioScript {
    /// Name or path of the world descriptor.
    #[cfg_attr(feature = "serde", serde(default))]
    pub world: String,
    pub initial_position: [f64; 3],
    #[cfg_attr(feature = "serde", serde(default))]
    pub initial_yaw: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub mode: Mode,
    #[cfg_attr(feature = "serde", serde(default))]
    pub events: Vec<ScenarioEvent>,
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error("timeout must be positive and finite")]
    BadTimeout,
    #[error("initial pose must be finite")]
    BadInitialPose,
    #[error("event {0}: time must be finite and non-negative")]
    BadTime(usize),
    #[error("event {0}: events must be ordered by time")]
    Unordered(usize),
    #[error("event {0}: goal events need click_and_fly mode")]
    GoalInManual(usize),
    #[error("event {0}: teleop events need manual mode")]
    TeleopInAuto(usize),
    #[error("event {0}: non-finite or non-positive teleop parameters")]
    BadTeleop(usize),
}

impl ScenarioScript {
    pub fn empty(timeout: f64) -> Self {
        Self {
            world: String::new(),
            initial_position: [0.0, 0.0, 1.0],
            initial_yaw: 0.0,
            mode: Mode::Manual,
            events: Vec::new(),
            timeout,
        }
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(ScriptError::BadTimeout);
        }
        if !(self.initial_position.iter().all(|v| v.is_finite()) && self.initial_yaw.is_finite()) {
            return Err(ScriptError::BadInitialPose);
        }
        let mut prev = 0.0;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.t.is_finite() && e.t >= 0.0) {
                return Err(ScriptError::BadTime(i));
            }
            if e.t < prev {
                return Err(ScriptError::Unordered(i));
            }
            prev = e.t;
            match e.action {
                ScenarioAction::Goal { x, y } => {
                    if self.mode != Mode::ClickAndFly {
                        return Err(ScriptError::GoalInManual(i));
                    }
                    if !(x.is_finite() && y.is_finite()) {
                        return Err(ScriptError::BadTime(i));
                    }
                }
                ScenarioAction::Teleop {
                    velocity,
                    yaw_rate,
                    duration,
                } => {
                    if self.mode != Mode::Manual {
                        return Err(ScriptError::TeleopInAuto(i));
                    }
                    let finite = velocity.iter().all(|v| v.is_finite()) && yaw_rate.is_finite();
                    if !finite || !(duration > 0.0 && duration.is_finite()) {
                        return Err(ScriptError::BadTeleop(i));
                    }
                }
            }
        }
        Ok(())
    }

    /// Timed commands in dispatch order. Teleop segments expand into a
    /// start command and a zero command at their end.
    pub fn commands(&self) -> Vec<(f64, Command)> {
        let mut out: Vec<(f64, Command)> = Vec::new();
        for e in &self.events {
            match e.action {
                ScenarioAction::Goal { x, y } => out.push((e.t, Command::SetGoal { x, y })),
                ScenarioAction::Teleop {
                    velocity,
                    yaw_rate,
                    duration,
                } => {
                    out.push((
                        e.t,
                        Command::Teleop {
                            velocity: Vec3::from(velocity),
                            yaw_rate,
                        },
                    ));
                    out.push((
                        e.t + duration,
                        Command::Teleop {
                            velocity: Vec3::zeros(),
                            yaw_rate: 0.0,
                        },
                    ));
                }
            }
        }
        // stable: equal times keep script order
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
        out
    }

    pub fn goal_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.action, ScenarioAction::Goal { .. }))
            .count()
    }
}
