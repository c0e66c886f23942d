use alloc::vec::Vec;

use crate::config::SimConfig;
use crate::localization::{
    compute_ate_rmse, Alignment, Estimator, OdometryEstimate, StampedPose, TrajectoryPair,
};
use crate::math::Vec3;
use crate::rng::{SimRng, Stream};
use crate::sensors::{sample_imu, ImuBias};
use crate::world::ground_truth_pose;

use super::log::{Event, RecordBody, SimLog, Verdict};

/// Evaluation results derived from a log alone. Equal logs give equal
/// metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MissionMetrics {
    pub sim_time: f64,
    pub physics_records: u64,
    /// Largest ground-truth speed, m/s.
    pub max_speed: f64,
    /// Smallest ground-truth distance to an obstacle box, m.
    pub min_clearance: f64,
    pub distance_travelled: f64,
    /// ATE RMSE of the estimate against ground truth, no alignment.
    pub ate_rmse: Option<f64>,
    pub goals_accepted: u32,
    pub goals_reached: u32,
    /// Largest horizontal ground-truth distance to the goal at a reach event.
    pub max_goal_error: Option<f64>,
    pub backups: u32,
    pub verdict: Option<Verdict>,
}

/// Ground truth and estimate trajectories recorded in a log. Estimates at
/// one timestamp collapse to the last one published (the vision-corrected
/// estimate on camera ticks).
pub fn trajectory_pair(log: &SimLog) -> TrajectoryPair {
    let mut estimated: Vec<StampedPose> = Vec::new();
    let mut ground_truth = Vec::new();
    let mut push_est = |e: &OdometryEstimate| match estimated.last_mut() {
        Some(last) if last.t == e.timestamp => last.pose = e.pose,
        _ => estimated.push(StampedPose {
            t: e.timestamp,
            pose: e.pose,
        }),
    };
    for r in &log.records {
        match &r.body {
            RecordBody::ImuPath(e) => push_est(e),
            RecordBody::VisionPath { estimate, .. } => push_est(estimate),
            RecordBody::GroundTruth { pose, .. } => ground_truth.push(StampedPose {
                t: r.t,
                pose: *pose,
            }),
            _ => {}
        }
    }
    TrajectoryPair {
        estimated,
        ground_truth,
    }
}

pub fn evaluate(log: &SimLog) -> MissionMetrics {
    let world = &log.header.world;
    let mut m = MissionMetrics {
        sim_time: log.duration(),
        physics_records: 0,
        max_speed: 0.0,
        min_clearance: f64::INFINITY,
        distance_travelled: 0.0,
        ate_rmse: None,
        goals_accepted: 0,
        goals_reached: 0,
        max_goal_error: None,
        backups: 0,
        verdict: None,
    };
    let mut last: Option<Vec3> = None;
    for r in &log.records {
        match &r.body {
            RecordBody::State { state, .. } => {
                m.physics_records += 1;
                m.max_speed = m.max_speed.max(state.velocity.norm());
                m.min_clearance = m.min_clearance.min(world.clearance(&state.position));
                if let Some(p) = last {
                    m.distance_travelled += (state.position - p).norm();
                }
                last = Some(state.position);
            }
            RecordBody::Event(e) => match e {
                Event::GoalAccepted { .. } => m.goals_accepted += 1,
                Event::GoalReached { goal, truth, .. } => {
                    m.goals_reached += 1;
                    let err = (truth.xy() - goal).norm();
                    m.max_goal_error = Some(m.max_goal_error.map_or(err, |e: f64| e.max(err)));
                }
                Event::Backup { .. } => m.backups += 1,
                Event::Verdict { verdict } => m.verdict = Some(*verdict),
                _ => {}
            },
            _ => {}
        }
    }
    m.ate_rmse = compute_ate_rmse(&trajectory_pair(log), Alignment::None).ok();
    m
}

/// Simulated seconds per wall-clock second.
pub fn real_time_factor(log: &SimLog, wall_elapsed: f64) -> f64 {
    log.duration() / wall_elapsed
}

/// Re-runs the IMU and visual odometry emulation over the ground-truth
/// motion recorded in `log` with a fresh seed and noise settings taken
/// from `config`. Sensor timing follows the log's own IMU and vision
/// records.
pub fn replay_localization(log: &SimLog, config: &SimConfig, seed: u64) -> TrajectoryPair {
    let vehicle = config.vehicle();
    let extrinsic = config.imu_extrinsic;
    let mut imu_rng = SimRng::new(seed, Stream::Imu);
    let mut bias = ImuBias::default();
    let mut estimator: Option<Estimator> = None;
    let mut current = None;
    let mut estimated = Vec::new();
    let mut ground_truth = Vec::new();
    for r in &log.records {
        match &r.body {
            RecordBody::State { state, wrench } => {
                current = Some((*state, *wrench));
                if estimator.is_none() {
                    let gt = ground_truth_pose(state, &extrinsic);
                    estimator = Some(Estimator::new(
                        OdometryEstimate::at(gt, state.velocity, r.t),
                        config.gravity,
                        config.fusion,
                        config.vio,
                        SimRng::new(seed, Stream::Vision),
                    ));
                }
            }
            RecordBody::Imu(_) => {
                let (Some((state, wrench)), Some(est)) = (current, estimator.as_mut()) else {
                    continue;
                };
                let (link, accel) = super::sim::imu_link(&state, &wrench, &vehicle, &extrinsic);
                let dt = 1.0 / config.imu_hz;
                let m = sample_imu(
                    &link,
                    &accel,
                    config.gravity,
                    &config.imu,
                    &mut bias,
                    &mut imu_rng,
                    dt,
                    r.t,
                );
                let e = est.on_imu(&m);
                push(&mut estimated, r.t, e.pose);
            }
            RecordBody::VisionPath { .. } => {
                let (Some((state, wrench)), Some(est)) = (current, estimator.as_mut()) else {
                    continue;
                };
                let (link, _) = super::sim::imu_link(&state, &wrench, &vehicle, &extrinsic);
                let (_, e) =
                    est.on_vision(&crate::math::Pose::new(link.position, link.orientation));
                push(&mut estimated, r.t, e.pose);
            }
            RecordBody::GroundTruth { pose, .. } => ground_truth.push(StampedPose {
                t: r.t,
                pose: *pose,
            }),
            _ => {}
        }
    }
    TrajectoryPair {
        estimated,
        ground_truth,
    }
}

fn push(v: &mut Vec<StampedPose>, t: f64, pose: crate::math::Pose) {
    match v.last_mut() {
        Some(last) if last.t == t => last.pose = pose,
        _ => v.push(StampedPose { t, pose }),
    }
}
