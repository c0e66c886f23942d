//! The simulation thread. It owns the [`Sim`], paces it against the wall
//! clock, applies requests between ticks and publishes snapshots. Nothing
//! else touches the simulation.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot, watch};

use navsim_core::config::SimConfig;
use navsim_core::math::{Pose, Vec2, Vec3};
use navsim_core::planning::{nearest_free, preprocess_grid};
use navsim_core::runtime::{
    Command, CommandError, LogHeader, Mode, RecordBody, RunOptions, ScenarioScript, Sim,
    SCHEMA_VERSION,
};
use navsim_core::world::WorldModel;

use super::layers::MapLayers;
use super::protocol::{
    CommandKind, ConfigSummary, EstimateMsg, GridInfo, NackReason, PathMsg, Telemetry, MAP_MAX_HZ,
    TELEMETRY_MAX_HZ, VOXELS_MAX_HZ,
};
use crate::clock::WallClock;
use crate::logfile::{LogError, LogWriter};

/// How far from a rejected goal the nearest free cell is searched, m.
pub const SUGGEST_RADIUS: f64 = 5.0;

#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub config: SimConfig,
    pub world: WorldModel,
    pub start: Pose,
    pub mode: Mode,
    /// Sim seconds per wall second.
    pub time_scale: f64,
    /// Hold the simulation at t = 0 until a `pause` command with
    /// `paused: false`.
    pub start_paused: bool,
    /// Record the session to this log; every reset starts `<log>.1`,
    /// `<log>.2` and so on.
    pub log: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Applied {
    /// Sim time of the tick that applies the command.
    pub t: f64,
    pub clamped: bool,
    pub command: CommandKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub reason: NackReason,
    pub message: String,
    pub nearest_free: Option<[f64; 2]>,
}

impl Rejection {
    fn new(reason: NackReason, message: impl Into<String>) -> Self {
        Self {
            reason,
            message: message.into(),
            nearest_free: None,
        }
    }
}

pub type Reply = oneshot::Sender<Result<Applied, Rejection>>;

pub enum Request {
    Command(CommandKind, Reply),
    Shutdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelFrame {
    pub t: f64,
    pub epoch: u64,
    pub voxel_size: f64,
    pub points: Vec<[f32; 3]>,
}

/// Something that happened, in sim time. `body` is the JSON event payload.
#[derive(Clone, Debug, PartialEq)]
pub struct EventMsg {
    pub t: f64,
    pub body: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stamped<T> {
    pub t: f64,
    pub value: T,
}

/// Cloneable handle to the simulation thread.
#[derive(Clone)]
pub struct SimHandle {
    requests: mpsc::Sender<Request>,
    pub telemetry: watch::Receiver<Option<Arc<Stamped<Telemetry>>>>,
    pub map: watch::Receiver<Arc<MapLayers>>,
    pub voxels: watch::Receiver<Option<Arc<VoxelFrame>>>,
    pub path: watch::Receiver<Option<Arc<Stamped<PathMsg>>>>,
    events: broadcast::Sender<EventMsg>,
    pub summary: Arc<ConfigSummary>,
    pub world: Arc<WorldModel>,
    thread: Arc<std::sync::Mutex<Option<JoinHandle<()>>>>,
}

impl SimHandle {
    pub fn spawn(options: ServiceOptions) -> Result<Self, navsim_core::runtime::RunError> {
        let sim = build_sim(&options, options.config.rng_seed)?;
        let summary = summarize(&sim, &options, options.config.rng_seed);
        let map0 = Arc::new(capture_map(&sim, 0, 0));
        let (requests, rx) = mpsc::channel();
        let (telemetry_tx, telemetry) = watch::channel(None);
        let (map_tx, map) = watch::channel(map0);
        let (voxels_tx, voxels) = watch::channel(None);
        let (path_tx, path) = watch::channel(None);
        let (events, _) = broadcast::channel(1024);
        let world = Arc::new(options.world.clone());
        let paused = options.start_paused;
        let mut worker = Worker {
            options,
            sim,
            seed: summary.seed,
            epoch: 0,
            map_version: 0,
            paused,
            anchor: (Instant::now(), 0.0),
            log: None,
            log_index: 0,
            telemetry: telemetry_tx,
            map: map_tx,
            voxels: voxels_tx,
            path: path_tx,
            events: events.clone(),
        };
        worker.open_log();
        worker.publish_telemetry();
        let thread = std::thread::Builder::new()
            .name("navsim-sim".into())
            .spawn(move || worker.run(rx))
            .expect("spawn sim thread");
        Ok(Self {
            requests,
            telemetry,
            map,
            voxels,
            path,
            events,
            summary: Arc::new(summary),
            world,
            thread: Arc::new(std::sync::Mutex::new(Some(thread))),
        })
    }

    /// Submits a command; the reply arrives once it is queued for the next
    /// tick (or rejected).
    pub async fn command(&self, cmd: CommandKind) -> Result<Applied, Rejection> {
        let (tx, rx) = oneshot::channel();
        if self.requests.send(Request::Command(cmd, tx)).is_err() {
            return Err(Rejection::new(NackReason::SimPaused, "simulation stopped"));
        }
        rx.await
            .unwrap_or_else(|_| Err(Rejection::new(NackReason::SimPaused, "simulation stopped")))
    }

    pub fn subscribe_events(&self) -> broadcast::Receiver<EventMsg> {
        self.events.subscribe()
    }

    /// Sim time of the latest telemetry snapshot.
    pub fn now(&self) -> f64 {
        self.telemetry.borrow().as_ref().map_or(0.0, |s| s.t)
    }

    /// Stops the thread and waits for it (flushing the log).
    pub fn shutdown(&self) {
        let _ = self.requests.send(Request::Shutdown);
        if let Some(t) = self.thread.lock().expect("join lock").take() {
            let _ = t.join();
        }
    }
}

fn build_sim(o: &ServiceOptions, seed: u64) -> Result<Sim, navsim_core::runtime::RunError> {
    let mut cfg = o.config;
    cfg.rng_seed = seed;
    Sim::new(
        cfg,
        o.world.clone(),
        o.start,
        o.mode,
        RunOptions::default(),
        Box::new(WallClock::new()),
    )
}

fn summarize(sim: &Sim, o: &ServiceOptions, seed: u64) -> ConfigSummary {
    let c = sim.config();
    let g = sim.grid();
    ConfigSummary {
        speed_limit: c.speed_limit,
        inflation_radius: c.inflation_radius,
        voxel_size: c.voxel_size,
        map_origin: c.map_origin,
        map_dims: c.map_dims,
        grid: GridInfo {
            origin: [g.origin.x, g.origin.y],
            cell_size: g.cell_size,
            nx: g.nx,
            ny: g.ny,
        },
        tick_hz: sim.schedule().tick_hz,
        camera_hz: c.camera_hz,
        imu_hz: c.imu_hz,
        cruise_alt: c.planner.cruise_alt,
        seed,
        mode: o.mode,
        time_scale: o.time_scale,
    }
}

fn capture_map(sim: &Sim, version: u64, epoch: u64) -> MapLayers {
    MapLayers::capture(
        sim.grid(),
        sim.esdf(),
        sim.config().planner.esdf_max,
        version,
        epoch,
        sim.time(),
    )
}

/// Ticks between publications so the rate stays at or below `hz`.
fn every(tick_hz: u64, hz: f64) -> u64 {
    ((tick_hz as f64 / hz).ceil() as u64).max(1)
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Checks a goal against the inflated current map. A goal on a blocked
/// cell is rejected with the nearest free cell centre.
pub fn check_goal(sim: &Sim, goal: Vec2) -> Result<(), Rejection> {
    let c = sim.config();
    let inflated = preprocess_grid(sim.grid(), c.inflation_radius, c.planner.unknown_is, &[]);
    let (i, j) = inflated.cell_of(&goal);
    if !inflated.in_bounds(i, j) || inflated.free(i, j) {
        return Ok(());
    }
    let nearest = nearest_free(&inflated, i, j, SUGGEST_RADIUS).map(|(a, b)| {
        let p = inflated.center(a, b);
        [p.x, p.y]
    });
    Err(Rejection {
        reason: NackReason::InvalidGoal,
        message: "goal lies in an occupied or inflated cell".into(),
        nearest_free: nearest,
    })
}

struct Worker {
    options: ServiceOptions,
    sim: Sim,
    seed: u64,
    epoch: u64,
    map_version: u64,
    paused: bool,
    /// Wall instant and sim time at the last (re)start of pacing.
    anchor: (Instant, f64),
    log: Option<LogWriter<BufWriter<File>, BufWriter<File>>>,
    log_index: u32,
    telemetry: watch::Sender<Option<Arc<Stamped<Telemetry>>>>,
    map: watch::Sender<Arc<MapLayers>>,
    voxels: watch::Sender<Option<Arc<VoxelFrame>>>,
    path: watch::Sender<Option<Arc<Stamped<PathMsg>>>>,
    events: broadcast::Sender<EventMsg>,
}

impl Worker {
    fn run(mut self, rx: mpsc::Receiver<Request>) {
        let tick_hz = self.sim.schedule().tick_hz;
        let dt = 1.0 / tick_hz as f64;
        let (tel_every, map_every, vox_every) = (
            every(tick_hz, TELEMETRY_MAX_HZ),
            every(tick_hz, MAP_MAX_HZ),
            every(tick_hz, VOXELS_MAX_HZ),
        );
        loop {
            let wait = if self.paused {
                Duration::from_millis(50)
            } else {
                let ahead = self.sim.time() + dt - self.target_time();
                Duration::from_secs_f64((ahead / self.options.time_scale).clamp(0.0, 0.02))
            };
            let first = match rx.recv_timeout(wait) {
                Ok(r) => Some(r),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => break,
            };
            let mut stop = false;
            for r in first
                .into_iter()
                .chain(std::iter::from_fn(|| rx.try_recv().ok()))
            {
                match r {
                    Request::Command(cmd, reply) => {
                        let _ = reply.send(self.handle(cmd));
                    }
                    Request::Shutdown => stop = true,
                }
            }
            if stop {
                break;
            }
            if self.paused {
                continue;
            }
            // never more than a camera period per batch so requests stay responsive
            let target = self.target_time();
            let mut steps = 0;
            while self.sim.time() < target && steps < 40 {
                let tick = self.sim.tick();
                if let Err(e) = self.sim.step() {
                    self.event(json!({"event": "error", "message": e.to_string()}));
                    self.set_paused(true);
                    break;
                }
                steps += 1;
                if tick.is_multiple_of(tel_every) {
                    self.publish_telemetry();
                }
                if tick.is_multiple_of(map_every) {
                    self.publish_map();
                }
                if tick.is_multiple_of(vox_every) {
                    self.publish_voxels();
                }
                self.drain();
                if matches!(
                    self.sim.verdict(),
                    Some(navsim_core::runtime::Verdict::Failure { .. })
                ) {
                    self.set_paused(true);
                    self.event(json!({"event": "paused", "reason": "collision"}));
                    break;
                }
            }
            // a sim slower than the wall clock runs slower instead of bursting
            if self.target_time() - self.sim.time() > 0.5 {
                self.anchor = (Instant::now(), self.sim.time());
            }
        }
        self.drain();
        self.close_log();
    }

    fn target_time(&self) -> f64 {
        self.anchor.1 + self.anchor.0.elapsed().as_secs_f64() * self.options.time_scale
    }

    fn set_paused(&mut self, paused: bool) {
        if !paused && self.paused {
            self.anchor = (Instant::now(), self.sim.time());
        }
        self.paused = paused;
    }

    fn event(&self, body: Value) {
        let _ = self.events.send(EventMsg {
            t: self.sim.time(),
            body,
        });
    }

    fn handle(&mut self, cmd: CommandKind) -> Result<Applied, Rejection> {
        let sim_cmd = match cmd {
            CommandKind::Pause { paused } => {
                self.set_paused(paused);
                self.event(json!({"event": if paused { "paused" } else { "resumed" }, "reason": "operator"}));
                return Ok(Applied {
                    t: self.sim.time(),
                    clamped: false,
                    command: cmd,
                });
            }
            CommandKind::Reset { seed } => {
                let seed = seed.unwrap_or(self.seed);
                self.reset(seed)
                    .map_err(|e| Rejection::new(NackReason::Malformed, e))?;
                return Ok(Applied {
                    t: self.sim.time(),
                    clamped: false,
                    command: CommandKind::Reset { seed: Some(seed) },
                });
            }
            _ if self.paused => {
                return Err(Rejection::new(
                    NackReason::SimPaused,
                    "simulation is paused",
                ))
            }
            CommandKind::SetGoal { x, y } => {
                if x.is_finite() && y.is_finite() && self.sim.mode() == Mode::ClickAndFly {
                    check_goal(&self.sim, Vec2::new(x, y))?;
                }
                Command::SetGoal { x, y }
            }
            CommandKind::Teleop {
                vx,
                vy,
                vz,
                yaw_rate,
            } => Command::Teleop {
                velocity: Vec3::new(vx, vy, vz),
                yaw_rate,
            },
            CommandKind::Mode { mode } => Command::SetMode { mode },
        };
        let t = self.sim.time();
        let (applied, clamped) = self.sim.submit(sim_cmd).map_err(|e| match e {
            CommandError::WrongMode(m) => {
                Rejection::new(NackReason::WrongMode, format!("command needs {m:?} mode"))
            }
            CommandError::GoalOutsideMap => {
                Rejection::new(NackReason::GoalOutsideMap, "goal outside the map")
            }
            CommandError::NonFinite => {
                Rejection::new(NackReason::NonFinite, "non-finite command value")
            }
        })?;
        let command = match applied {
            Command::SetGoal { x, y } => CommandKind::SetGoal { x, y },
            Command::Teleop {
                velocity: v,
                yaw_rate,
            } => CommandKind::Teleop {
                vx: v.x,
                vy: v.y,
                vz: v.z,
                yaw_rate,
            },
            Command::SetMode { mode } => CommandKind::Mode { mode },
        };
        Ok(Applied {
            t,
            clamped,
            command,
        })
    }

    fn reset(&mut self, seed: u64) -> Result<(), String> {
        let sim = build_sim(&self.options, seed).map_err(|e| e.to_string())?;
        self.close_log();
        self.sim = sim;
        self.seed = seed;
        self.epoch += 1;
        self.map_version = 0;
        self.paused = false;
        self.anchor = (Instant::now(), 0.0);
        self.log_index += 1;
        self.open_log();
        self.path.send_replace(None);
        self.publish_telemetry();
        self.map
            .send_replace(Arc::new(capture_map(&self.sim, 0, self.epoch)));
        self.voxels.send_replace(None);
        self.event(json!({"event": "reset", "seed": seed}));
        Ok(())
    }

    fn publish_telemetry(&self) {
        let s = self.sim.state();
        let e = self.sim.estimate();
        let q = s.orientation.quaternion();
        let telemetry = Telemetry {
            tick: self.sim.tick(),
            position: arr3(&s.position),
            velocity: arr3(&s.velocity),
            orientation: [q.i, q.j, q.k, q.w],
            yaw: navsim_core::math::yaw_of(&s.orientation),
            estimate: EstimateMsg {
                position: arr3(&e.pose.position),
                velocity: arr3(&e.velocity),
                yaw: e.pose.yaw(),
            },
            mode: self.sim.mode(),
            goal: self.sim.goal().map(|g| [g.x, g.y]),
            queued_goals: self.sim.queued_goals(),
            goals_reached: self.sim.goals_reached(),
            verdict: self.sim.verdict(),
        };
        let t = self
            .sim
            .schedule()
            .time_of(self.sim.tick().saturating_sub(1))
            .min(self.sim.time());
        self.telemetry.send_replace(Some(Arc::new(Stamped {
            t,
            value: telemetry,
        })));
    }

    fn publish_map(&mut self) {
        self.map_version += 1;
        let t = self
            .sim
            .schedule()
            .time_of(self.sim.tick().saturating_sub(1));
        let mut layers = capture_map(&self.sim, self.map_version, self.epoch);
        layers.t = t;
        self.map.send_replace(Arc::new(layers));
    }

    fn publish_voxels(&self) {
        let map = self.sim.occupancy();
        let points = map
            .occupied_voxels()
            .into_iter()
            .map(|v| {
                let c = map.center(v);
                [c.x as f32, c.y as f32, c.z as f32]
            })
            .collect();
        let t = self
            .sim
            .schedule()
            .time_of(self.sim.tick().saturating_sub(1));
        self.voxels.send_replace(Some(Arc::new(VoxelFrame {
            t,
            epoch: self.epoch,
            voxel_size: map.voxel_size(),
            points,
        })));
    }

    /// Moves bus records to the log and forwards events and paths.
    fn drain(&mut self) {
        let records = self.sim.bus_mut().take_records();
        for r in &records {
            match &r.body {
                RecordBody::Event(e) => {
                    let body = serde_json::to_value(e).unwrap_or(Value::Null);
                    let _ = self.events.send(EventMsg { t: r.t, body });
                }
                RecordBody::JpsPath { goal, path } => {
                    let msg = PathMsg {
                        goal: [goal.x, goal.y],
                        waypoints: path.waypoints.iter().map(|w| [w.x, w.y]).collect(),
                        length: path.length,
                        goal_relocated: path.goal_relocated.map(|g| [g.x, g.y]),
                    };
                    self.path
                        .send_replace(Some(Arc::new(Stamped { t: r.t, value: msg })));
                }
                _ => {}
            }
        }
        if let Some(w) = self.log.as_mut() {
            let failed = records.iter().try_for_each(|r| w.write(r)).err();
            if let Some(e) = failed {
                self.log = None;
                self.event(
                    json!({"event": "error", "message": format!("log writing stopped: {e}")}),
                );
            }
        }
    }

    fn open_log(&mut self) {
        let Some(base) = self.options.log.clone() else {
            return;
        };
        let path = if self.log_index == 0 {
            base
        } else {
            let mut s = base.into_os_string();
            s.push(format!(".{}", self.log_index));
            PathBuf::from(s)
        };
        let script = ScenarioScript {
            world: String::new(),
            initial_position: arr3(&self.options.start.position),
            initial_yaw: self.options.start.yaw(),
            mode: self.options.mode,
            events: Vec::new(),
            timeout: f64::MAX,
        };
        let header = LogHeader {
            schema_version: SCHEMA_VERSION,
            tick_hz: self.sim.schedule().tick_hz,
            config: *self.sim.config(),
            world: self.options.world.clone(),
            script,
        };
        let opened: Result<_, LogError> = File::create(&path)
            .map_err(LogError::from)
            .and_then(|f| LogWriter::new(BufWriter::new(f), &header, None));
        match opened {
            Ok(w) => self.log = Some(w),
            Err(e) => self.event(json!({"event": "error", "message": format!("cannot open log {}: {e}", path.display())})),
        }
    }

    fn close_log(&mut self) {
        if let Some(w) = self.log.take() {
            let _ = w.finish();
        }
    }
}
