use std::collections::BTreeMap;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio::time::{timeout, Instant};
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use navsim::files::resolve_world;
use navsim::logfile::read_log;
use navsim::service::layers::{diff, MapDelta, MapKeyframe, MapLayers};
use navsim::service::protocol::*;
use navsim::service::{serve, ServiceOptions, SimHandle, CLOSE_MALFORMED, SUGGEST_RADIUS};
use navsim_core::config::SimConfig;
use navsim_core::mapping::{project_to_2d, GlobalOccupancyMap, OccupancyParams};
use navsim_core::math::{quat_from_yaw, Pose, Vec3};
use navsim_core::runtime::{Command, Mode, RecordBody};

fn options(mode: Mode, time_scale: f64) -> ServiceOptions {
    ServiceOptions {
        config: SimConfig::default(),
        world: resolve_world("paper_world", None).unwrap(),
        start: Pose::new(
            Vec3::new(-8.0, -8.0, 1.0),
            quat_from_yaw(std::f64::consts::FRAC_PI_2),
        ),
        mode,
        time_scale,
        start_paused: false,
        log: None,
    }
}

async fn start(options: ServiceOptions) -> (SimHandle, String) {
    let handle = SimHandle::spawn(options).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("ws://{}/ws", listener.local_addr().unwrap());
    tokio::spawn(serve(listener, handle.clone()));
    (handle, url)
}

struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    next_id: u64,
    last_seq: u64,
    binary: Vec<Vec<u8>>,
}

const WAIT: Duration = Duration::from_secs(60);

impl Client {
    async fn connect(url: &str) -> (Self, ServerHello) {
        let (ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
        let mut c = Self {
            ws,
            next_id: 1,
            last_seq: 0,
            binary: Vec::new(),
        };
        let hello = c.expect("hello").await;
        (c, serde_json::from_value(hello.payload).unwrap())
    }

    async fn send(&mut self, kind: &str, payload: Value) {
        let env = json!({"v": 1, "seq": 0, "type": kind, "t_sim": 0.0, "payload": payload});
        self.ws.send(Message::text(env.to_string())).await.unwrap();
    }

    /// Next text envelope; binary frames are stashed.
    async fn next(&mut self) -> Option<Envelope> {
        loop {
            match timeout(WAIT, self.ws.next())
                .await
                .expect("server went quiet")?
            {
                Ok(Message::Text(t)) => {
                    let env: Envelope = serde_json::from_str(t.as_str()).unwrap();
                    assert_eq!(env.v, PROTOCOL_VERSION);
                    assert!(env.seq > self.last_seq, "sequence numbers must increase");
                    self.last_seq = env.seq;
                    return Some(env);
                }
                Ok(Message::Binary(b)) => self.binary.push(b.to_vec()),
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => {}
            }
        }
    }

    async fn expect(&mut self, kind: &str) -> Envelope {
        loop {
            let env = self.next().await.expect("connection closed");
            if env.kind == kind {
                return env;
            }
        }
    }

    /// Waits for the ack or nack answering command `id`.
    async fn reply(&mut self, id: u64) -> Envelope {
        loop {
            let env = self.next().await.expect("connection closed");
            if (env.kind == "ack" || env.kind == "nack")
                && env.payload.get("id").and_then(Value::as_u64) == Some(id)
            {
                return env;
            }
        }
    }

    async fn hello(&mut self, role: &str) -> Envelope {
        self.send("hello", json!({"role": role})).await;
        loop {
            let env = self.next().await.expect("connection closed");
            let answers = (env.kind == "ack" && env.payload["for"] == "hello")
                || (env.kind == "nack" && env.payload["id"].is_null());
            if answers {
                return env;
            }
        }
    }

    async fn subscribe(&mut self, streams: Value) -> Envelope {
        self.send("subscribe", json!({ "streams": streams })).await;
        loop {
            let env = self.next().await.expect("connection closed");
            if env.kind == "ack" && env.payload["for"] == "subscribe" {
                return env;
            }
        }
    }

    async fn command(&mut self, cmd: Value) -> Envelope {
        let id = self.next_id;
        self.next_id += 1;
        let mut payload = cmd;
        payload["id"] = json!(id);
        self.send("command", payload).await;
        self.reply(id).await
    }
}

fn reason(env: &Envelope) -> NackReason {
    assert_eq!(env.kind, "nack", "{env:?}");
    serde_json::from_value(env.payload["reason"].clone()).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn hello_advertises_protocol_and_world() {
    let (handle, url) = start(options(Mode::ClickAndFly, 1.0)).await;
    let (_c, hello) = Client::connect(&url).await;
    assert_eq!(hello.protocol_version, PROTOCOL_VERSION);
    assert_eq!(hello.world_bounds, *handle.world.bounds());
    assert_eq!(hello.config.speed_limit, 1.0);
    assert_eq!(hello.config.grid.nx, 110);
    assert_eq!(hello.role, Role::Observer);
    let names: Vec<&str> = hello.streams.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["telemetry", "map", "voxels", "path", "events"]);
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn telemetry_is_capped_at_thirty_hertz() {
    let (handle, url) = start(options(Mode::ClickAndFly, 4.0)).await;
    let (mut c, _) = Client::connect(&url).await;
    let ack = c
        .subscribe(json!([{"name": "telemetry", "max_hz": 100.0}]))
        .await;
    assert_eq!(ack.payload["streams"][0]["max_hz"], json!(30.0));
    let mut times = Vec::new();
    while times.len() < 60 {
        let env = c.expect("telemetry").await;
        let t: Telemetry = serde_json::from_value(env.payload).unwrap();
        assert!(t.position.iter().all(|v| v.is_finite()));
        times.push(env.t_sim);
    }
    for w in times.windows(2) {
        assert!(
            w[1] - w[0] >= 1.0 / 30.0 - 1e-9,
            "frames {} and {} too close",
            w[0],
            w[1]
        );
    }
    // a client asking for less gets less
    let (mut slow, _) = Client::connect(&url).await;
    slow.subscribe(json!([{"name": "telemetry", "max_hz": 5.0}]))
        .await;
    let a = slow.expect("telemetry").await.t_sim;
    let b = slow.expect("telemetry").await.t_sim;
    assert!(b - a >= 0.2 - 1e-9);
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn second_operator_is_denied_until_the_first_leaves() {
    let (handle, url) = start(options(Mode::ClickAndFly, 1.0)).await;
    let (mut a, _) = Client::connect(&url).await;
    let (mut b, _) = Client::connect(&url).await;
    let ok = a.hello("operator").await;
    assert_eq!(
        (ok.kind.as_str(), &ok.payload["role"]),
        ("ack", &json!("operator"))
    );
    assert_eq!(reason(&b.hello("operator").await), NackReason::NoAuthority);
    let denied = b
        .command(json!({"kind": "set_goal", "x": -8.0, "y": -4.0}))
        .await;
    assert_eq!(reason(&denied), NackReason::NoAuthority);
    drop(a);
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let env = b.hello("operator").await;
        if env.kind == "ack" {
            break;
        }
        assert!(Instant::now() < deadline, "authority was not released");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let ack = b
        .command(json!({"kind": "set_goal", "x": -8.0, "y": -4.0}))
        .await;
    assert_eq!(ack.kind, "ack");
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_message_closes_with_error_code() {
    let (handle, url) = start(options(Mode::ClickAndFly, 1.0)).await;
    let (mut c, _) = Client::connect(&url).await;
    c.ws.send(Message::text("{not json")).await.unwrap();
    let nack = c.expect("nack").await;
    assert_eq!(reason(&nack), NackReason::Malformed);
    let close = loop {
        match timeout(WAIT, c.ws.next()).await.unwrap() {
            Some(Ok(Message::Close(f))) => break f,
            Some(Ok(_)) => {}
            other => panic!("expected close frame, got {other:?}"),
        }
    };
    assert_eq!(
        close.map(|f| f.code),
        Some(CloseCode::from(CLOSE_MALFORMED))
    );
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn command_errors_use_the_closed_reasons() {
    let mut o = options(Mode::ClickAndFly, 1.0);
    o.start_paused = true;
    let (handle, url) = start(o).await;
    let (mut c, _) = Client::connect(&url).await;
    c.hello("operator").await;
    assert_eq!(
        reason(
            &c.command(json!({"kind": "set_goal", "x": 1.0, "y": 1.0}))
                .await
        ),
        NackReason::SimPaused
    );
    assert_eq!(
        c.command(json!({"kind": "pause", "paused": false}))
            .await
            .kind,
        "ack"
    );
    assert_eq!(
        reason(
            &c.command(json!({"kind": "set_goal", "x": 50.0, "y": 1.0}))
                .await
        ),
        NackReason::GoalOutsideMap
    );
    assert_eq!(
        reason(
            &c.command(json!({"kind": "teleop", "vx": 1.0, "vy": 0.0, "vz": 0.0}))
                .await
        ),
        NackReason::WrongMode
    );
    assert_eq!(
        reason(&c.command(json!({"kind": "fly_to_moon"})).await),
        NackReason::Malformed
    );
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn fresh_map_keyframe_is_all_unknown() {
    let mut o = options(Mode::ClickAndFly, 1.0);
    o.start_paused = true;
    let (handle, url) = start(o).await;
    let (mut c, hello) = Client::connect(&url).await;
    c.subscribe(json!([{"name": "map"}])).await;
    let kf: MapKeyframe = serde_json::from_value(c.expect("map_keyframe").await.payload).unwrap();
    assert_eq!((kf.nx, kf.ny), (hello.config.grid.nx, hello.config.grid.ny));
    assert!(kf.cells.bytes().all(|b| b == b'2'));
    assert_eq!(kf.esdf.len(), kf.nx * kf.ny);
    handle.shutdown();
}

#[test]
fn one_new_occupied_voxel_gives_a_one_cell_delta() {
    let mut map = GlobalOccupancyMap::new(
        Vec3::new(-11.0, -11.0, 0.0),
        0.2,
        [110, 110, 15],
        OccupancyParams::default(),
    );
    let grid = |m: &GlobalOccupancyMap| project_to_2d(m, [0.6, 2.0], 0.7, 0.3);
    let before = MapLayers::capture(&grid(&map), None, 5.0, 1, 0, 0.0);
    // a single return twice (to pass the occupancy threshold) at (1.1, 2.3, 1.1)
    let end = Vec3::new(1.1, 2.3, 1.1);
    map.integrate_points(&Vec3::new(1.1, 2.3, 1.9), &[end]);
    map.integrate_points(&Vec3::new(1.1, 2.3, 1.9), &[end]);
    let after = MapLayers::capture(&grid(&map), None, 5.0, 2, 0, 0.5);
    let delta = diff(&before, &after);
    let (i, j) = (((1.1 + 11.0) / 0.2) as usize, ((2.3 + 11.0) / 0.2) as usize);
    assert_eq!(delta.grid.len(), 1, "{:?}", delta.grid);
    let r = &delta.grid[0];
    assert_eq!((r.i, r.j, r.w, r.h, r.cells.as_str()), (i, j, 1, 1, "1"));
    assert!(delta.esdf.is_empty());
    let mut kf = before.keyframe();
    kf.apply(&delta).unwrap();
    assert_eq!(kf, after.keyframe());
    assert!(
        kf.apply(&delta).is_err(),
        "a delta applies only on its base version"
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn goal_in_free_space_yields_a_path_within_two_global_periods() {
    let (handle, url) = start(options(Mode::ClickAndFly, 2.0)).await;
    let (mut c, _) = Client::connect(&url).await;
    c.hello("operator").await;
    c.subscribe(json!([{"name": "path"}])).await;
    let ack = c
        .command(json!({"kind": "set_goal", "x": -8.0, "y": -3.0}))
        .await;
    assert_eq!(ack.kind, "ack");
    let applied: Ack = serde_json::from_value(ack.payload).unwrap();
    let t0 = applied.applied_t.unwrap();
    let path = c.expect("path").await;
    let p: PathMsg = serde_json::from_value(path.payload).unwrap();
    assert_eq!(p.goal, [-8.0, -3.0]);
    let period = 1.0 / SimConfig::default().planner.global_hz;
    assert!(
        path.t_sim - t0 <= 2.0 * period + 1e-9,
        "path at {} for a goal applied at {t0}",
        path.t_sim
    );
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn goal_on_an_obstacle_is_rejected_with_the_nearest_free_cell() {
    let (handle, url) = start(options(Mode::ClickAndFly, 4.0)).await;
    let (mut c, _) = Client::connect(&url).await;
    c.hello("operator").await;
    c.subscribe(json!([{"name": "map"}])).await;
    let mut kf: MapKeyframe =
        serde_json::from_value(c.expect("map_keyframe").await.payload).unwrap();
    // hover until an obstacle in view is mapped with some margin around it
    let target = loop {
        let env = c.expect("map_delta").await;
        kf.apply(&serde_json::from_value::<MapDelta>(env.payload).unwrap())
            .unwrap();
        let occupied: Vec<usize> = kf
            .cells
            .bytes()
            .enumerate()
            .filter(|(_, b)| *b == b'1')
            .map(|(k, _)| k)
            .collect();
        if occupied.len() > 40 {
            break occupied[occupied.len() / 2];
        }
    };
    let (i, j) = (target % kf.nx, target / kf.nx);
    let goal = [
        kf.origin[0] + (i as f64 + 0.5) * kf.cell_size,
        kf.origin[1] + (j as f64 + 0.5) * kf.cell_size,
    ];
    let nack = c
        .command(json!({"kind": "set_goal", "x": goal[0], "y": goal[1]}))
        .await;
    assert_eq!(reason(&nack), NackReason::InvalidGoal);
    let n: Nack = serde_json::from_value(nack.payload).unwrap();
    let free = n.nearest_free.expect("a free cell nearby");
    let d = ((free[0] - goal[0]).powi(2) + (free[1] - goal[1]).powi(2)).sqrt();
    let inflation = SimConfig::default().inflation_radius;
    assert!(
        d > inflation - 0.2 && d <= SUGGEST_RADIUS,
        "suggestion {d} m away"
    );
    // the suggestion itself is accepted
    let ack = c
        .command(json!({"kind": "set_goal", "x": free[0], "y": free[1]}))
        .await;
    assert_eq!(ack.kind, "ack", "{ack:?}");
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn teleop_is_clamped_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("serve.jsonl");
    let mut o = options(Mode::Manual, 2.0);
    o.log = Some(log.clone());
    let (handle, url) = start(o).await;
    let (mut c, _) = Client::connect(&url).await;
    c.hello("operator").await;
    let ack = c
        .command(json!({"kind": "teleop", "vx": 2.0, "vy": 0.0, "vz": 0.0}))
        .await;
    let a: Ack = serde_json::from_value(ack.payload).unwrap();
    assert!(a.clamped);
    assert_eq!(
        a.applied,
        Some(CommandKind::Teleop {
            vx: 1.0,
            vy: 0.0,
            vz: 0.0,
            yaw_rate: 0.0
        })
    );
    let small = c
        .command(json!({"kind": "teleop", "vx": 0.0, "vy": 0.0, "vz": 0.0}))
        .await;
    assert!(
        !serde_json::from_value::<Ack>(small.payload)
            .unwrap()
            .clamped
    );
    tokio::time::sleep(Duration::from_millis(300)).await;
    handle.shutdown();
    let log = read_log(&log).unwrap();
    let teleops: Vec<(f64, Vec3)> = log
        .records
        .iter()
        .filter_map(|r| match r.body {
            RecordBody::Operator(Command::Teleop { velocity, .. }) => Some((r.t, velocity)),
            _ => None,
        })
        .collect();
    assert_eq!(teleops.len(), 2);
    assert_eq!(teleops[0].1, Vec3::new(1.0, 0.0, 0.0));
    assert_eq!(teleops[0].0, a.applied_t.unwrap());
    assert!(log.check_order().is_ok());
}

async fn telemetry_after_reset(c: &mut Client, seed: u64, until: f64) -> BTreeMap<u64, Telemetry> {
    let ack = c.command(json!({"kind": "reset", "seed": seed})).await;
    assert_eq!(ack.kind, "ack");
    let mut frames = BTreeMap::new();
    loop {
        let env = c.expect("telemetry").await;
        if env.t_sim > until {
            return frames;
        }
        let t: Telemetry = serde_json::from_value(env.payload).unwrap();
        frames.insert(t.tick, t);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn reset_with_the_same_seed_repeats_telemetry() {
    let (handle, url) = start(options(Mode::ClickAndFly, 4.0)).await;
    let (mut c, _) = Client::connect(&url).await;
    c.hello("operator").await;
    c.subscribe(json!([{"name": "telemetry"}])).await;
    let first = telemetry_after_reset(&mut c, 42, 5.0).await;
    let second = telemetry_after_reset(&mut c, 42, 5.0).await;
    let common: Vec<u64> = first
        .keys()
        .filter(|k| second.contains_key(k))
        .copied()
        .collect();
    assert!(common.len() >= 50, "only {} common frames", common.len());
    for k in common {
        assert_eq!(first[&k], second[&k], "tick {k}");
    }
    let other = telemetry_after_reset(&mut c, 43, 2.0).await;
    assert!(other
        .iter()
        .any(|(k, t)| first.get(k).is_some_and(|f| f.estimate != t.estimate)));
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn a_stalled_client_does_not_slow_the_simulation() {
    let (handle, url) = start(options(Mode::ClickAndFly, 1.0)).await;
    let (mut stalled, _) = Client::connect(&url).await;
    stalled
        .subscribe(
            json!([{"name": "telemetry"}, {"name": "map"}, {"name": "voxels"}, {"name": "events"}]),
        )
        .await;
    let t0 = handle.now();
    let wall = Instant::now();
    tokio::time::sleep(Duration::from_secs(3)).await;
    let advanced = handle.now() - t0;
    let elapsed = wall.elapsed().as_secs_f64();
    assert!(
        advanced > 0.8 * elapsed,
        "sim advanced {advanced} s in {elapsed} s"
    );
    drop(stalled);
    handle.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn survey_map_reassembles_byte_for_byte() {
    let (handle, url) = start(options(Mode::ClickAndFly, 100.0)).await;
    let (mut op, _) = Client::connect(&url).await;
    op.hello("operator").await;
    let (mut viewer, _) = Client::connect(&url).await;
    viewer
        .subscribe(json!([{"name": "map"}, {"name": "voxels"}]))
        .await;
    let survey = [
        (-8.0, 8.5),
        (8.5, 8.5),
        (8.5, -8.5),
        (-3.0, -8.5),
        (-3.5, 0.5),
        (2.0, 2.0),
    ];
    for (x, y) in survey {
        assert_eq!(
            op.command(json!({"kind": "set_goal", "x": x, "y": y}))
                .await
                .kind,
            "ack"
        );
    }
    op.subscribe(json!([{"name": "telemetry", "max_hz": 1.0}]))
        .await;
    // the viewer reads concurrently so its socket never backs up
    let (tx, mut rx) = tokio::sync::watch::channel(None::<MapKeyframe>);
    let viewer_task = tokio::spawn(async move {
        let mut kf: Option<MapKeyframe> = None;
        while let Some(env) = viewer.next().await {
            match env.kind.as_str() {
                "map_keyframe" => kf = Some(serde_json::from_value(env.payload).unwrap()),
                "map_delta" => {
                    let d: MapDelta = serde_json::from_value(env.payload).unwrap();
                    kf.as_mut()
                        .expect("delta before keyframe")
                        .apply(&d)
                        .unwrap();
                }
                _ => continue,
            }
            tx.send_replace(kf.clone());
        }
    });
    loop {
        let t: Telemetry = serde_json::from_value(op.expect("telemetry").await.payload).unwrap();
        assert!(t.verdict.is_none(), "{:?}", t.verdict);
        if t.goals_reached == survey.len() as u32 {
            break;
        }
    }
    assert_eq!(op.command(json!({"kind": "pause"})).await.kind, "ack");
    tokio::time::sleep(Duration::from_millis(200)).await;
    let server = handle.map.borrow().clone();
    let rebuilt = timeout(
        WAIT,
        rx.wait_for(|k| k.as_ref().is_some_and(|k| k.version == server.version)),
    )
    .await
    .expect("viewer never caught up")
    .unwrap()
    .clone()
    .unwrap();
    viewer_task.abort();
    assert_eq!(rebuilt, server.keyframe());
    let mut v = Client::connect(&url).await.0;
    v.subscribe(json!([{"name": "map"}])).await;
    let fresh: MapKeyframe =
        serde_json::from_value(v.expect("map_keyframe").await.payload).unwrap();
    assert_eq!(fresh, server.keyframe());
    assert!(fresh.cells.bytes().filter(|b| *b == b'1').count() > 200);
    handle.shutdown();
}
