use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::config::{ConfigError, SimConfig};
use crate::dynamics::{
    inertial_acceleration, step_dynamics, BodyWrench, CascadeController, CommandLatch,
    DynamicsError, RigidBodyState, Setpoint, VehicleParams,
};
use crate::localization::{Estimator, OdometryEstimate};
use crate::mapping::{
    compute_esdf, project_to_2d, rebuild_local_map, CellState, EsdfMap2D, GlobalOccupancyMap,
    LocalCylindricalMap, ProjectedGrid2D,
};
use crate::math::{cos, quat_from_yaw, sin, wrap_angle, Pose, Vec2, Vec3};
use crate::planning::{GlobalPath, GlobalPlanner, LocalGoal, LocalPlanner};
use crate::rng::{SimRng, Stream};
use crate::sensors::{
    add_depth_noise, depth_to_pointcloud, render_depth, sample_imu, CameraIntrinsics, ImuBias,
    ImuSample, PointCloud, SensorError,
};
use crate::world::{ground_truth_pose, WorldModel};

use super::bus::{topics, BusError, TopicBus, TopicRate, TopicSpec};
use super::log::{
    CloudFrame, Command, CommandSource, Event, FailureReason, LogHeader, Phase, RecordBody, SimLog,
    Verdict, SCHEMA_VERSION,
};
use super::scenario::{Mode, ScenarioScript, ScriptError};

/// Wall-clock source for stage timings. Only timings read it; simulation
/// results never depend on it.
pub trait Clock {
    /// Seconds since an arbitrary origin.
    fn now(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Physics,
    Render,
    Localization,
    GlobalMap,
    LocalMap,
    Esdf,
    GlobalPlan,
    LocalPlan,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Physics,
        Stage::Render,
        Stage::Localization,
        Stage::GlobalMap,
        Stage::LocalMap,
        Stage::Esdf,
        Stage::GlobalPlan,
        Stage::LocalPlan,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Physics => "physics",
            Stage::Render => "render",
            Stage::Localization => "localization",
            Stage::GlobalMap => "global_map",
            Stage::LocalMap => "local_map",
            Stage::Esdf => "esdf",
            Stage::GlobalPlan => "global_plan",
            Stage::LocalPlan => "local_plan",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageStats {
    pub count: u64,
    /// Seconds.
    pub total: f64,
    pub max: f64,
}

impl StageStats {
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total / self.count as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    stats: [StageStats; 8],
}

impl StageTimings {
    pub fn record(&mut self, stage: Stage, seconds: f64) {
        let s = &mut self.stats[stage as usize];
        s.count += 1;
        s.total += seconds;
        if seconds > s.max {
            s.max = seconds;
        }
    }

    pub fn get(&self, stage: Stage) -> StageStats {
        self.stats[stage as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RunOptions {
    /// Keep point-cloud payloads in the log.
    pub record_clouds: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid scenario: {0}")]
    Script(#[from] ScriptError),
    #[error("sensor setup: {0}")]
    Sensor(#[from] SensorError),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("integration diverged at t = {t} s")]
    Diverged { t: f64, state: RigidBodyState },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("command needs {0:?} mode")]
    WrongMode(Mode),
    #[error("goal outside the map")]
    GoalOutsideMap,
    #[error("non-finite command value")]
    NonFinite,
}

/// Tick divisors of every periodic task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub tick_hz: u64,
    pub physics: u64,
    pub imu: u64,
    pub camera: u64,
    pub ground_truth: u64,
    pub mapping: u64,
    pub global: u64,
    pub local: u64,
}

impl Schedule {
    pub fn from_config(c: &SimConfig) -> Result<Self, ConfigError> {
        let tick_hz = c.tick_hz()?;
        let div = |r: f64| crate::math::round(tick_hz as f64 / r) as u64;
        Ok(Self {
            tick_hz,
            physics: div(c.physics_hz()),
            imu: div(c.imu_hz),
            camera: div(c.camera_hz),
            ground_truth: div(c.ground_truth_hz),
            mapping: div(c.mapping.integrate_hz),
            global: div(c.planner.global_hz),
            local: div(c.planner.local_hz),
        })
    }

    pub fn time_of(&self, tick: u64) -> f64 {
        tick as f64 / self.tick_hz as f64
    }
}

/// Declared topics and their rates for a configuration.
pub fn topic_specs(c: &SimConfig) -> Vec<TopicSpec> {
    use TopicRate::*;
    let spec = |name, rate| TopicSpec { name, rate };
    alloc::vec![
        spec(topics::STATE, Periodic(c.physics_hz())),
        spec(topics::IMU, Periodic(c.imu_hz)),
        spec(topics::GROUND_TRUTH, Periodic(c.ground_truth_hz)),
        spec(topics::CAMERA_POINTS, Periodic(c.camera_hz)),
        spec(topics::IMU_PATH, Periodic(c.imu_hz)),
        spec(topics::VISION_PATH, Periodic(c.camera_hz)),
        spec(topics::LOCALMAP, Periodic(c.camera_hz)),
        spec(topics::GLOBALMAP, Periodic(c.mapping.integrate_hz)),
        spec(topics::OCCUPANCY_GRID, Periodic(c.mapping.integrate_hz)),
        spec(topics::ESDF_MAP, Periodic(c.mapping.integrate_hz)),
        spec(topics::JPS_PATH, UpTo(c.planner.global_hz)),
        spec(topics::GLOBAL_GOAL, UpTo(c.planner.global_hz)),
        spec(topics::LOCAL_WP, UpTo(c.planner.local_hz)),
        spec(topics::CMD_VEL, UpTo(c.planner.local_hz)),
        spec(topics::OPERATOR, Aperiodic),
        spec(topics::EVENTS, Aperiodic),
        spec(topics::MAP_SNAPSHOT, Aperiodic),
    ]
}

/// Pose and inertial acceleration of the IMU link, with the lever-arm
/// terms of a rigidly mounted sensor.
pub(crate) fn imu_link(
    state: &RigidBodyState,
    wrench: &BodyWrench,
    params: &VehicleParams,
    extrinsic: &Pose,
) -> (RigidBodyState, Vec3) {
    let r = extrinsic.position;
    let w = state.angular_velocity;
    let torque = wrench.moment - w.cross(&params.inertia.component_mul(&w));
    let alpha = torque.component_div(&params.inertia);
    let a_body = alpha.cross(&r) + w.cross(&w.cross(&r));
    let accel = inertial_acceleration(state, wrench, params) + state.orientation * a_body;
    let link = RigidBodyState {
        position: state.position + state.orientation * r,
        velocity: state.velocity + state.orientation * w.cross(&r),
        orientation: state.orientation * extrinsic.orientation,
        angular_velocity: extrinsic.orientation.inverse_transform_vector(&w),
    };
    (link, accel)
}

struct ActiveGoal {
    index: u32,
    goal: Vec2,
}

/// The simulation: every subsystem plus the tick scheduler.
pub struct Sim {
    cfg: SimConfig,
    world: WorldModel,
    vehicle: VehicleParams,
    schedule: Schedule,
    options: RunOptions,
    clock: Box<dyn Clock + Send>,
    timings: StageTimings,
    bus: TopicBus,
    tick: u64,

    state: RigidBodyState,
    wrench: BodyWrench,

    render_intr: CameraIntrinsics,
    imu_bias: ImuBias,
    imu_rng: SimRng,
    depth_rng: SimRng,
    frame: u64,
    cloud: Option<PointCloud>,
    cloud_est_pose: Pose,

    estimator: Estimator,

    occupancy: GlobalOccupancyMap,
    grid: ProjectedGrid2D,
    esdf: Option<EsdfMap2D>,
    local: LocalCylindricalMap,

    global: GlobalPlanner,
    local_planner: LocalPlanner,
    local_goal: Option<LocalGoal>,
    path: Option<GlobalPath>,
    replan: bool,

    controller: CascadeController,
    latch: CommandLatch,

    mode: Mode,
    pending: VecDeque<Command>,
    goals: VecDeque<Vec2>,
    goal: Option<ActiveGoal>,
    next_goal_index: u32,
    goals_reached: u32,
    teleop: (Vec3, f64),
    teleop_yaw: f64,
    verdict: Option<Verdict>,
}

impl core::fmt::Debug for Sim {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Sim")
            .field("tick", &self.tick)
            .field("state", &self.state)
            .finish()
    }
}

impl Sim {
    pub fn new(
        config: SimConfig,
        world: WorldModel,
        start: Pose,
        mode: Mode,
        options: RunOptions,
        clock: Box<dyn Clock + Send>,
    ) -> Result<Self, RunError> {
        config.validate()?;
        let schedule = Schedule::from_config(&config)?;
        let mut bus = TopicBus::new();
        for s in topic_specs(&config) {
            bus.declare(s)?;
        }
        let vehicle = config.vehicle();
        let state = RigidBodyState::at_rest(start.position, start.orientation);
        let seed = config.rng_seed;
        let gt = ground_truth_pose(&state, &config.imu_extrinsic);
        let estimator = Estimator::new(
            OdometryEstimate::at(gt, Vec3::zeros(), 0.0),
            config.gravity,
            config.fusion,
            config.vio,
            SimRng::new(seed, Stream::Vision),
        );
        let occupancy = GlobalOccupancyMap::new(
            Vec3::from(config.map_origin),
            config.voxel_size,
            config.map_dims,
            config.mapping.occupancy,
        );
        let m = &config.mapping;
        let grid = project_to_2d(&occupancy, m.z_band, m.occupancy.p_occ, m.occupancy.p_free);
        let yaw = start.yaw();
        let planner = config.planner_params();
        Ok(Self {
            render_intr: config.camera.render_intrinsics()?,
            world,
            vehicle,
            schedule,
            options,
            clock,
            timings: StageTimings::default(),
            bus,
            tick: 0,
            state,
            wrench: BodyWrench {
                force: Vec3::new(0.0, 0.0, vehicle.mass * vehicle.gravity),
                moment: Vec3::zeros(),
            },
            imu_bias: ImuBias::default(),
            imu_rng: SimRng::new(seed, Stream::Imu),
            depth_rng: SimRng::new(seed, Stream::Depth),
            frame: 0,
            cloud: None,
            cloud_est_pose: gt,
            estimator,
            occupancy,
            grid,
            esdf: None,
            local: LocalCylindricalMap::empty(m.local, start.position, yaw),
            global: GlobalPlanner::new(planner, config.inflation_radius),
            local_planner: LocalPlanner::new(planner, config.speed_limit),
            local_goal: None,
            path: None,
            replan: false,
            controller: CascadeController::new(config.controller, config.speed_limit),
            latch: CommandLatch::new(
                Setpoint::position(start.position, yaw),
                CommandLatch::DEFAULT_TIMEOUT,
            ),
            mode,
            pending: VecDeque::new(),
            goals: VecDeque::new(),
            goal: None,
            next_goal_index: 0,
            goals_reached: 0,
            teleop: (Vec3::zeros(), 0.0),
            teleop_yaw: yaw,
            verdict: None,
            cfg: config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Sim time of the next tick to run.
    pub fn time(&self) -> f64 {
        self.schedule.time_of(self.tick)
    }

    pub fn state(&self) -> &RigidBodyState {
        &self.state
    }

    pub fn estimate(&self) -> &OdometryEstimate {
        self.estimator.estimate()
    }

    pub fn occupancy(&self) -> &GlobalOccupancyMap {
        &self.occupancy
    }

    pub fn grid(&self) -> &ProjectedGrid2D {
        &self.grid
    }

    pub fn esdf(&self) -> Option<&EsdfMap2D> {
        self.esdf.as_ref()
    }

    pub fn local_map(&self) -> &LocalCylindricalMap {
        &self.local
    }

    pub fn global_path(&self) -> Option<&GlobalPath> {
        self.path.as_ref()
    }

    pub fn local_goal(&self) -> Option<&LocalGoal> {
        self.local_goal.as_ref()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Active goal, if any.
    pub fn goal(&self) -> Option<Vec2> {
        self.goal.as_ref().map(|g| g.goal)
    }

    /// Goals accepted but not yet active.
    pub fn queued_goals(&self) -> usize {
        self.goals.len()
            + self
                .pending
                .iter()
                .filter(|c| matches!(c, Command::SetGoal { .. }))
                .count()
    }

    pub fn goals_reached(&self) -> u32 {
        self.goals_reached
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.verdict
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    pub fn bus(&self) -> &TopicBus {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut TopicBus {
        &mut self.bus
    }

    pub fn backup_count(&self) -> u32 {
        self.local_planner.backup_count()
    }

    /// Queues a command for the next tick boundary. Teleop velocities are
    /// clamped to the speed limit; the returned flag reports clamping.
    pub fn submit(&mut self, cmd: Command) -> Result<(Command, bool), CommandError> {
        let mut clamped = false;
        let cmd = match cmd {
            Command::SetGoal { x, y } => {
                if !(x.is_finite() && y.is_finite()) {
                    return Err(CommandError::NonFinite);
                }
                if self.mode != Mode::ClickAndFly {
                    return Err(CommandError::WrongMode(Mode::ClickAndFly));
                }
                let (i, j) = self.grid.cell_of(&Vec2::new(x, y));
                if self.grid.get(i, j).is_none() {
                    return Err(CommandError::GoalOutsideMap);
                }
                cmd
            }
            Command::Teleop { velocity, yaw_rate } => {
                if !(velocity.iter().all(|v| v.is_finite()) && yaw_rate.is_finite()) {
                    return Err(CommandError::NonFinite);
                }
                if self.mode != Mode::Manual {
                    return Err(CommandError::WrongMode(Mode::Manual));
                }
                let (v, c) = crate::dynamics::clamp_norm(velocity, self.cfg.speed_limit);
                clamped = c;
                Command::Teleop {
                    velocity: v,
                    yaw_rate,
                }
            }
            Command::SetMode { .. } => cmd,
        };
        self.pending.push_back(cmd);
        Ok((cmd, clamped))
    }

    fn publish(&mut self, phase: Phase, body: RecordBody) -> Result<(), RunError> {
        self.bus.publish(phase, body)?;
        Ok(())
    }

    fn event(&mut self, phase: Phase, e: Event) -> Result<(), RunError> {
        self.publish(phase, RecordBody::Event(e))
    }

    fn timed<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> T) -> T {
        let t0 = self.clock.now();
        let out = f(self);
        let dt = self.clock.now() - t0;
        self.timings.record(stage, dt);
        out
    }

    fn est_body_pose(&self) -> Pose {
        self.estimator
            .estimate()
            .pose
            .compose(&self.cfg.imu_extrinsic.inverse())
    }

    fn activate_next_goal(&mut self, phase: Phase) -> Result<(), RunError> {
        if self.goal.is_some() {
            return Ok(());
        }
        if let Some(goal) = self.goals.pop_front() {
            let index = self.next_goal_index;
            self.next_goal_index += 1;
            self.goal = Some(ActiveGoal { index, goal });
            self.local_goal = None;
            self.path = None;
            self.replan = true;
            self.event(phase, Event::GoalAccepted { index, goal })?;
        }
        Ok(())
    }

    fn apply_commands(&mut self) -> Result<(), RunError> {
        while let Some(cmd) = self.pending.pop_front() {
            self.publish(Phase::Input, RecordBody::Operator(cmd))?;
            match cmd {
                Command::SetGoal { x, y } => {
                    if self.mode == Mode::ClickAndFly {
                        self.goals.push_back(Vec2::new(x, y));
                    }
                }
                Command::Teleop { velocity, yaw_rate } => {
                    if self.mode == Mode::Manual {
                        if self.teleop.0 == Vec3::zeros() && self.teleop.1 == 0.0 {
                            self.teleop_yaw = self.estimator.estimate().pose.yaw();
                        }
                        self.teleop = (velocity, yaw_rate);
                    }
                }
                Command::SetMode { mode } => {
                    if mode != self.mode {
                        self.mode = mode;
                        self.goals.clear();
                        self.goal = None;
                        self.local_goal = None;
                        self.path = None;
                        self.teleop = (Vec3::zeros(), 0.0);
                        let body = self.est_body_pose();
                        self.teleop_yaw = body.yaw();
                        self.local_planner.reset();
                        self.latch
                            .submit(Setpoint::position(body.position, body.yaw()), self.time());
                        self.event(Phase::Input, Event::ModeChanged { mode })?;
                    }
                }
            }
        }
        self.activate_next_goal(Phase::Input)
    }

    /// Advances one scheduler tick, running the due tasks in phase order:
    /// physics, sensors, estimator, mapping, planning, control.
    pub fn step(&mut self) -> Result<(), RunError> {
        let k = self.tick;
        let s = self.schedule;
        let t = s.time_of(k);
        self.bus.set_time(k, t)?;

        self.apply_commands()?;

        let physics_due = k.is_multiple_of(s.physics);
        if physics_due {
            if k > 0 {
                let (state, wrench, vehicle, dt) =
                    (self.state, self.wrench, self.vehicle, self.cfg.physics_dt);
                let next = self.timed(Stage::Physics, |_| {
                    step_dynamics(&state, &wrench, &vehicle, dt)
                });
                self.state = next.map_err(|e| match e {
                    DynamicsError::Diverged { state } => RunError::Diverged { t, state },
                    DynamicsError::InvalidStep(_) => RunError::Diverged { t, state },
                })?;
            }
            self.publish(
                Phase::Physics,
                RecordBody::State {
                    state: self.state,
                    wrench: self.wrench,
                },
            )?;
            if self.verdict.is_none() && self.world.is_occupied(&self.state.position) {
                let position = self.state.position;
                self.event(Phase::Physics, Event::Collision { position })?;
                self.verdict = Some(Verdict::Failure {
                    reason: FailureReason::Collision,
                });
            }
        }

        // sensors
        let (link, accel) = imu_link(
            &self.state,
            &self.wrench,
            &self.vehicle,
            &self.cfg.imu_extrinsic,
        );
        let gt_pose = Pose::new(link.position, link.orientation);
        let imu_sample: Option<ImuSample> = if k.is_multiple_of(s.imu) {
            let dt = 1.0 / self.cfg.imu_hz;
            let m = sample_imu(
                &link,
                &accel,
                self.cfg.gravity,
                &self.cfg.imu,
                &mut self.imu_bias,
                &mut self.imu_rng,
                dt,
                t,
            );
            self.publish(Phase::Sensors, RecordBody::Imu(m))?;
            Some(m)
        } else {
            None
        };
        if k.is_multiple_of(s.ground_truth) {
            self.publish(
                Phase::Sensors,
                RecordBody::GroundTruth {
                    pose: gt_pose,
                    velocity: link.velocity,
                },
            )?;
        }
        let camera_due = k.is_multiple_of(s.camera);
        if camera_due {
            let cam_pose = gt_pose.compose(&self.cfg.camera.extrinsics.left_to_imu);
            let cloud = self.timed(Stage::Render, |sim| {
                let cam = &sim.cfg.camera;
                let mut img =
                    render_depth(&sim.world, &cam_pose, &sim.render_intr, cam.max_range, t);
                if cam.depth_noise_sigma > 0.0 {
                    add_depth_noise(
                        &mut img,
                        cam.depth_noise_sigma,
                        cam.max_range,
                        &mut sim.depth_rng,
                    );
                }
                depth_to_pointcloud(&img, &sim.render_intr, cam.cloud_stride)
            });
            let points = if self.options.record_clouds {
                cloud
                    .points
                    .iter()
                    .map(|p| [p.x as f32, p.y as f32, p.z as f32])
                    .collect()
            } else {
                Vec::new()
            };
            let frame = CloudFrame {
                frame: self.frame,
                sensor_pose: cam_pose,
                count: cloud.points.len() as u32,
                offset: None,
                points,
            };
            self.frame += 1;
            self.publish(Phase::Sensors, RecordBody::PointCloud(frame))?;
            self.cloud = Some(cloud);
        }

        // estimator
        if let Some(m) = imu_sample {
            let e = self.timed(Stage::Localization, |sim| sim.estimator.on_imu(&m));
            self.publish(Phase::Estimator, RecordBody::ImuPath(e))?;
        }
        if camera_due {
            let (fix, e) = self.timed(Stage::Localization, |sim| sim.estimator.on_vision(&gt_pose));
            self.publish(
                Phase::Estimator,
                RecordBody::VisionPath { fix, estimate: e },
            )?;
            self.cloud_est_pose = e.pose.compose(&self.cfg.camera.extrinsics.left_to_imu);
        }

        // mapping
        if camera_due {
            let local = self.timed(Stage::LocalMap, |sim| {
                let cloud = sim.cloud.as_ref().expect("camera frame rendered this tick");
                rebuild_local_map(
                    cloud,
                    &sim.cloud_est_pose,
                    &sim.est_body_pose(),
                    &sim.cfg.mapping.local,
                )
            });
            let points = self.cloud.as_ref().map_or(0, |c| c.points.len()) as u32;
            let occupied_cells = local.nonzero_cells().len() as u32;
            self.local = local;
            self.publish(
                Phase::Mapping,
                RecordBody::LocalMap {
                    points,
                    occupied_cells,
                },
            )?;
        }
        if k.is_multiple_of(s.mapping) {
            self.timed(Stage::GlobalMap, |sim| {
                if let Some(cloud) = sim.cloud.as_ref() {
                    sim.occupancy
                        .integrate_pointcloud(&sim.cloud_est_pose, cloud);
                }
            });
            let observed = self.occupancy.observed_raw().iter().filter(|o| **o).count() as u32;
            let occupied = self.occupancy.occupied_voxels().len() as u32;
            self.publish(
                Phase::Mapping,
                RecordBody::GlobalMap {
                    observed_voxels: observed,
                    occupied_voxels: occupied,
                },
            )?;
            let (grid, esdf) = self.timed(Stage::Esdf, |sim| {
                let m = &sim.cfg.mapping;
                let grid = project_to_2d(
                    &sim.occupancy,
                    m.z_band,
                    m.occupancy.p_occ,
                    m.occupancy.p_free,
                );
                let esdf =
                    compute_esdf(&grid, sim.cfg.planner.unknown_is, sim.cfg.planner.esdf_max);
                (grid, esdf)
            });
            let counts = (
                grid.count(CellState::Free) as u32,
                grid.count(CellState::Occupied) as u32,
                grid.count(CellState::Unknown) as u32,
            );
            let min_distance = esdf.distance.iter().copied().fold(f64::INFINITY, f64::min);
            self.grid = grid;
            self.esdf = Some(esdf);
            self.publish(
                Phase::Mapping,
                RecordBody::OccupancyGrid {
                    free: counts.0,
                    occupied: counts.1,
                    unknown: counts.2,
                },
            )?;
            self.publish(Phase::Mapping, RecordBody::EsdfMap { min_distance })?;
        }

        // planning
        if self.mode == Mode::ClickAndFly {
            self.plan_auto(k, t)?;
        } else if k.is_multiple_of(s.local) {
            self.plan_manual(t)?;
        }

        // control
        if physics_due {
            let body = self.est_body_pose();
            let yaw = body.yaw();
            let was_failsafe = self.latch.failsafe_engaged();
            let sp = self
                .latch
                .resolve(t, self.mode == Mode::ClickAndFly, &body.position, yaw);
            if self.latch.failsafe_engaged() && !was_failsafe {
                self.event(Phase::Control, Event::Failsafe)?;
            }
            let r = self.cfg.imu_extrinsic.position;
            let vel = self.estimator.estimate().velocity
                - self.state.orientation * self.state.angular_velocity.cross(&r);
            let out = self.controller.update(
                &self.state,
                &body.position,
                &vel,
                &sp,
                &self.vehicle,
                self.cfg.physics_dt,
            );
            self.wrench = out.wrench;
        }

        self.tick += 1;
        Ok(())
    }

    fn plan_auto(&mut self, k: u64, t: f64) -> Result<(), RunError> {
        let s = self.schedule;
        let Some(goal) = self.goal.as_ref().map(|g| (g.index, g.goal)) else {
            return Ok(());
        };
        let body = self.est_body_pose();
        if k.is_multiple_of(s.global) || self.replan {
            self.replan = false;
            let res = self.timed(Stage::GlobalPlan, |sim| {
                sim.global.plan(&sim.grid, &body.position.xy(), &goal.1)
            });
            match res {
                Ok(out) => {
                    self.local_goal = Some(out.local_goal);
                    self.path = Some(out.path.clone());
                    self.publish(
                        Phase::Planning,
                        RecordBody::JpsPath {
                            goal: goal.1,
                            path: out.path,
                        },
                    )?;
                    self.publish(Phase::Planning, RecordBody::GlobalGoal(out.local_goal))?;
                }
                Err(error) => {
                    self.local_goal = None;
                    self.path = None;
                    self.event(Phase::Planning, Event::PlanFailed { error })?;
                }
            }
        }
        if !k.is_multiple_of(s.local) {
            return Ok(());
        }
        let final_goal = Vec3::new(goal.1.x, goal.1.y, self.cfg.planner.cruise_alt);
        let yaw = body.yaw();
        let step = self.timed(Stage::LocalPlan, |sim| {
            let (local, esdf, lg) = (&sim.local, sim.esdf.as_ref(), sim.local_goal.as_ref());
            sim.local_planner
                .step(t, &body.position, yaw, local, esdf, lg, &final_goal)
        });
        if let Some(b) = step.backup {
            self.event(Phase::Planning, Event::Backup { reason: b.reason })?;
        }
        if let Some(wp) = step.waypoint {
            self.publish(Phase::Planning, RecordBody::LocalWaypoint { waypoint: wp })?;
        }
        let source = if step.reached || step.waypoint.is_some() {
            CommandSource::Planner
        } else {
            CommandSource::Backup
        };
        self.latch.submit(step.setpoint, t);
        self.publish(
            Phase::Planning,
            RecordBody::CmdVel {
                setpoint: step.setpoint,
                source,
            },
        )?;
        if step.reached {
            let truth = self.state.position;
            self.goals_reached += 1;
            self.goal = None;
            self.local_goal = None;
            self.path = None;
            self.event(
                Phase::Planning,
                Event::GoalReached {
                    index: goal.0,
                    goal: goal.1,
                    estimate: body.position,
                    truth,
                },
            )?;
            self.publish(Phase::Planning, RecordBody::MapSnapshot(self.grid.clone()))?;
            self.activate_next_goal(Phase::Planning)?;
        }
        Ok(())
    }

    fn plan_manual(&mut self, t: f64) -> Result<(), RunError> {
        let (v, yaw_rate) = self.teleop;
        self.teleop_yaw = wrap_angle(self.teleop_yaw + yaw_rate / self.cfg.planner.local_hz);
        let yaw = self.estimator.estimate().pose.yaw();
        let (c, s) = (cos(yaw), sin(yaw));
        let world_v = Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
        let sp = Setpoint::velocity(world_v, self.teleop_yaw);
        self.latch.submit(sp, t);
        self.publish(
            Phase::Planning,
            RecordBody::CmdVel {
                setpoint: sp,
                source: CommandSource::Teleop,
            },
        )
    }

    /// Ends the run: verdict event and a final map snapshot.
    pub fn finish(&mut self, verdict: Verdict) -> Result<(), RunError> {
        self.verdict = Some(verdict);
        let t = self.schedule.time_of(self.tick.saturating_sub(1));
        self.bus
            .set_time(self.tick.saturating_sub(1), t.max(self.bus.now()))?;
        self.publish(Phase::End, RecordBody::MapSnapshot(self.grid.clone()))?;
        self.event(Phase::End, Event::Verdict { verdict })
    }
}

pub struct RunOutcome {
    pub log: SimLog,
    pub verdict: Verdict,
    pub timings: StageTimings,
    /// Simulated seconds.
    pub sim_time: f64,
    /// Final global map and ESDF.
    pub occupancy: GlobalOccupancyMap,
    pub esdf: Option<EsdfMap2D>,
}

impl core::fmt::Debug for RunOutcome {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RunOutcome")
            .field("verdict", &self.verdict)
            .field("sim_time", &self.sim_time)
            .field("records", &self.log.records.len())
            .finish()
    }
}

/// Initial pose of a script: level, at rest.
pub fn script_start(script: &ScenarioScript) -> Pose {
    Pose::new(
        Vec3::from(script.initial_position),
        quat_from_yaw(script.initial_yaw),
    )
}

/// Runs a scenario headless until success, failure or timeout. Ticks are
/// never dropped; the run simply takes as long as it takes.
pub fn run_scenario(
    config: &SimConfig,
    world: &WorldModel,
    script: &ScenarioScript,
    options: RunOptions,
    clock: Box<dyn Clock + Send>,
) -> Result<RunOutcome, RunError> {
    run_scenario_observed(config, world, script, options, clock, |_| {})
}

/// [`run_scenario`] with a callback after every tick, e.g. for pacing or
/// progress output. The callback sees the simulation read-only.
pub fn run_scenario_observed(
    config: &SimConfig,
    world: &WorldModel,
    script: &ScenarioScript,
    options: RunOptions,
    clock: Box<dyn Clock + Send>,
    mut observer: impl FnMut(&Sim),
) -> Result<RunOutcome, RunError> {
    script.validate()?;
    let mut sim = Sim::new(
        *config,
        world.clone(),
        script_start(script),
        script.mode,
        options,
        clock,
    )?;
    let header = LogHeader {
        schema_version: SCHEMA_VERSION,
        tick_hz: sim.schedule.tick_hz,
        config: *config,
        world: world.clone(),
        script: script.clone(),
    };
    let commands = script.commands();
    let goals_total = script.goal_count() as u32;
    let mut next = 0usize;
    let verdict = loop {
        let t = sim.time();
        if t > script.timeout + 1e-12 {
            break Verdict::Timeout;
        }
        while next < commands.len() && commands[next].0 <= t + 1e-12 {
            // script commands were validated against the mode; map bounds may still reject
            let _ = sim.submit(commands[next].1);
            next += 1;
        }
        sim.step()?;
        observer(&sim);
        if let Some(v) = sim.verdict {
            break v;
        }
        let done = script.mode == Mode::ClickAndFly
            && goals_total > 0
            && next == commands.len()
            && sim.goal.is_none()
            && sim.queued_goals() == 0
            && sim.goals_reached > 0;
        if done {
            break Verdict::Success;
        }
    };
    sim.finish(verdict)?;
    let sim_time = sim.bus.now();
    let mut log = SimLog::new(header);
    log.records = sim.bus.take_records();
    Ok(RunOutcome {
        log,
        verdict,
        timings: sim.timings,
        sim_time,
        occupancy: sim.occupancy,
        esdf: sim.esdf,
    })
}
