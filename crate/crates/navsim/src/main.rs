use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use navsim::clock::WallClock;
use navsim::exports::{esdf_pgm, grid_digits, grid_pgm, occupancy_dump, tum_trajectory};
use navsim::files::{load_config, load_scenario, resolve_world, FileError};
use navsim::logfile::{read_log, write_log, LogError};
use navsim::service::{serve, ServiceOptions, SimHandle};
use navsim_core::config::SimConfig;
use navsim_core::localization::{compute_ate_rmse, Alignment};
use navsim_core::mapping::compute_esdf;
use navsim_core::runtime::{
    evaluate, real_time_factor, run_scenario_observed, script_start, trajectory_pair,
    MissionMetrics, Mode, RecordBody, RunOptions, SimLog, Stage, StageTimings, Verdict,
};

const EXIT_FAILURE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_OTHER: u8 = 1;

#[derive(Parser)]
#[command(name = "navsim", version, about = "UAV navigation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and record its log.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Run as fast as possible instead of at wall-clock pace.
        #[arg(long)]
        headless: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep point payloads (written to `<log>.clouds`).
        #[arg(long)]
        record_clouds: bool,
        /// Also write trajectories and map exports into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Read a log back and evaluate it.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Print mission metrics.
        #[arg(long)]
        metrics: bool,
        #[arg(long, value_enum, default_value_t = Align::None)]
        align: Align,
    },
    /// Write TUM trajectories and map images from a log.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the WebSocket protocol for a live simulation.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Scenario whose world, start pose and mode are used (events are ignored).
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "paper_world")]
        world: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Sim seconds per wall second.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Start paused; a client resumes with a pause command.
        #[arg(long)]
        paused: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Align {
    None,
    Yaw,
    Se3,
}

impl From<Align> for Alignment {
    fn from(a: Align) -> Self {
        match a {
            Align::None => Alignment::None,
            Align::Yaw => Alignment::YawXy,
            Align::Se3 => Alignment::FullSe3,
        }
    }
}

/// Error with its exit code.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_OTHER, e.into())
    }
}

fn config_error(e: FileError) -> Failure {
    Failure(EXIT_CONFIG, e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run {
            config,
            scenario,
            log,
            headless,
            seed,
            record_clouds,
            export,
        } => run(
            config.as_deref(),
            &scenario,
            &log,
            headless,
            seed,
            record_clouds,
            export.as_deref(),
        ),
        Cmd::Replay {
            log,
            metrics,
            align,
        } => replay(&log, metrics, align.into()),
        Cmd::Export { log, out } => export_log(&log, &out),
        Cmd::Serve {
            config,
            port,
            bind,
            scenario,
            world,
            seed,
            time_scale,
            log,
            paused,
        } => serve_cmd(
            config.as_deref(),
            &bind,
            port,
            scenario.as_deref(),
            &world,
            seed,
            time_scale,
            log,
            paused,
        ),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_cfg(path: Option<&Path>, seed: Option<u64>) -> Result<SimConfig, Failure> {
    let mut cfg = match path {
        Some(p) => load_config(p).map_err(config_error)?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn run(
    config: Option<&Path>,
    scenario: &Path,
    log_path: &Path,
    headless: bool,
    seed: Option<u64>,
    record_clouds: bool,
    export: Option<&Path>,
) -> Result<u8, Failure> {
    let cfg = load_cfg(config, seed)?;
    let script = load_scenario(scenario).map_err(config_error)?;
    let world = resolve_world(&script.world, scenario.parent()).map_err(config_error)?;
    let start = Instant::now();
    let mut last_report = f64::NEG_INFINITY;
    let pace = |sim: &navsim_core::runtime::Sim| {
        let t = sim.time();
        if !headless {
            let ahead = t - start.elapsed().as_secs_f64();
            if ahead > 0.002 {
                std::thread::sleep(Duration::from_secs_f64(ahead));
            }
        }
        if !headless && t - last_report >= 1.0 {
            last_report = t;
            let p = sim.state().position;
            eprint!(
                "\rt {t:7.1} s  pos ({:6.2}, {:6.2}, {:5.2})  goals {}/{}   ",
                p.x,
                p.y,
                p.z,
                sim.goals_reached(),
                script.goal_count()
            );
        }
    };
    let options = RunOptions { record_clouds };
    let outcome = run_scenario_observed(
        &cfg,
        &world,
        &script,
        options,
        Box::new(WallClock::new()),
        pace,
    )
    .map_err(|e| match e {
        navsim_core::runtime::RunError::Config(_) | navsim_core::runtime::RunError::Script(_) => {
            Failure(EXIT_CONFIG, e.into())
        }
        _ => Failure(EXIT_OTHER, e.into()),
    })?;
    let wall = start.elapsed().as_secs_f64();
    if !headless {
        eprintln!();
    }
    write_log(log_path, &outcome.log).with_context(|| format!("writing {}", log_path.display()))?;
    let m = evaluate(&outcome.log);
    print_metrics(&m);
    println!(
        "real-time factor     {:.2} ({:.1} s wall)",
        real_time_factor(&outcome.log, wall),
        wall
    );
    print_timings(&outcome.timings);
    if let Some(dir) = export {
        std::fs::create_dir_all(dir)?;
        write_exports(&outcome.log, dir)?;
        std::fs::write(
            dir.join("occupancy.txt"),
            occupancy_dump(&outcome.occupancy),
        )?;
        if let Some(e) = &outcome.esdf {
            std::fs::write(dir.join("esdf.pgm"), esdf_pgm(e))?;
        }
    }
    Ok(exit_code(outcome.verdict, script.mode))
}

/// Manual sessions have no goals to reach; running out the clock is their
/// normal end.
fn exit_code(verdict: Verdict, mode: Mode) -> u8 {
    match (verdict, mode) {
        (Verdict::Success, _) | (Verdict::Timeout, Mode::Manual) => 0,
        _ => EXIT_FAILURE,
    }
}

fn print_metrics(m: &MissionMetrics) {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!("verdict              {:?}", m.verdict);
    println!("sim time             {:.3} s", m.sim_time);
    println!(
        "goals reached        {}/{}",
        m.goals_reached, m.goals_accepted
    );
    println!("max goal error       {} m", opt(m.max_goal_error));
    println!("max speed            {:.4} m/s", m.max_speed);
    println!("min clearance        {:.4} m", m.min_clearance);
    println!("distance travelled   {:.2} m", m.distance_travelled);
    println!("ATE RMSE             {} m", opt(m.ate_rmse));
    println!("backup plans         {}", m.backups);
}

fn print_timings(t: &StageTimings) {
    println!("stage timings (mean / max ms, calls)");
    for stage in [
        Stage::Physics,
        Stage::Render,
        Stage::Localization,
        Stage::GlobalMap,
        Stage::LocalMap,
        Stage::Esdf,
        Stage::GlobalPlan,
        Stage::LocalPlan,
    ] {
        let s = t.get(stage);
        println!(
            "  {:<14} {:8.3} / {:8.3}  {}",
            stage.name(),
            s.mean() * 1e3,
            s.max * 1e3,
            s.count
        );
    }
}

fn read(path: &Path) -> Result<SimLog, Failure> {
    match read_log(path) {
        Ok(log) => Ok(log),
        Err(LogError::SchemaMismatch { found, expected }) => Err(Failure(
            EXIT_CONFIG,
            anyhow::anyhow!(
                "{}: schema version {found}, expected {expected}",
                path.display()
            ),
        )),
        Err(e @ LogError::Truncated { .. }) => {
            let LogError::Truncated {
                offset,
                ref partial,
                ..
            } = e
            else {
                unreachable!()
            };
            eprintln!(
                "warning: {e}; {} records readable up to byte {offset}",
                partial.records.len()
            );
            Err(Failure(
                EXIT_OTHER,
                anyhow::anyhow!("{}: {e}", path.display()),
            ))
        }
        Err(e) => Err(Failure(
            EXIT_OTHER,
            anyhow::anyhow!("{}: {e}", path.display()),
        )),
    }
}

fn replay(path: &Path, metrics: bool, align: Alignment) -> Result<u8, Failure> {
    let log = read(path)?;
    println!("{} records, {:.3} s", log.records.len(), log.duration());
    if metrics {
        print_metrics(&evaluate(&log));
        if !matches!(align, Alignment::None) {
            let ate = compute_ate_rmse(&trajectory_pair(&log), align)
                .map_or_else(|e| format!("n/a ({e})"), |v| format!("{v:.4}"));
            println!("ATE RMSE ({align:?})   {ate} m");
        }
    }
    Ok(log
        .verdict()
        .map_or(EXIT_FAILURE, |v| exit_code(v, log.header.script.mode)))
}

fn write_exports(log: &SimLog, dir: &Path) -> anyhow::Result<()> {
    let pair = trajectory_pair(log);
    std::fs::write(dir.join("estimate.tum"), tum_trajectory(&pair.estimated))?;
    std::fs::write(dir.join("truth.tum"), tum_trajectory(&pair.ground_truth))?;
    let snapshot = log.records.iter().rev().find_map(|r| match &r.body {
        RecordBody::MapSnapshot(g) => Some(g),
        _ => None,
    });
    if let Some(grid) = snapshot {
        std::fs::write(dir.join("grid.pgm"), grid_pgm(grid))?;
        std::fs::write(dir.join("grid.txt"), grid_digits(grid))?;
        let c = &log.header.config;
        let esdf = compute_esdf(grid, c.planner.unknown_is, c.planner.esdf_max);
        std::fs::write(dir.join("esdf.pgm"), esdf_pgm(&esdf))?;
    }
    Ok(())
}

fn export_log(path: &Path, out: &Path) -> Result<u8, Failure> {
    let log = read(path)?;
    std::fs::create_dir_all(out)?;
    write_exports(&log, out)?;
    println!("wrote exports to {}", out.display());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn serve_cmd(
    config: Option<&Path>,
    bind: &str,
    port: u16,
    scenario: Option<&Path>,
    world: &str,
    seed: Option<u64>,
    time_scale: f64,
    log: Option<PathBuf>,
    start_paused: bool,
) -> Result<u8, Failure> {
    let cfg = load_cfg(config, seed)?;
    if !(time_scale.is_finite() && time_scale > 0.0) {
        return Err(Failure(
            EXIT_CONFIG,
            anyhow::anyhow!("time scale must be positive"),
        ));
    }
    let (world, start, mode) = match scenario {
        Some(p) => {
            let s = load_scenario(p).map_err(config_error)?;
            (
                resolve_world(&s.world, p.parent()).map_err(config_error)?,
                script_start(&s),
                s.mode,
            )
        }
        None => {
            let s = navsim_core::runtime::ScenarioScript {
                initial_position: [-8.0, -8.0, 1.0],
                initial_yaw: std::f64::consts::FRAC_PI_2,
                mode: Mode::ClickAndFly,
                ..navsim_core::runtime::ScenarioScript::empty(1.0)
            };
            (
                resolve_world(world, None).map_err(config_error)?,
                script_start(&s),
                s.mode,
            )
        }
    };
    let options = ServiceOptions {
        config: cfg,
        world,
        start,
        mode,
        time_scale,
        start_paused,
        log,
    };
    let handle = SimHandle::spawn(options).map_err(|e| Failure(EXIT_CONFIG, e.into()))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((bind, port))
            .await
            .with_context(|| format!("binding {bind}:{port}"))?;
        eprintln!("serving on ws://{}/ws", listener.local_addr()?);
        tokio::select! {
            r = serve(listener, handle.clone()) => r.map_err(anyhow::Error::from),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })?;
    handle.shutdown();
    Ok(0)
}
