//! WebSocket sessions. Each connection runs its own task; all of them talk
//! to the simulation thread through a [`SimHandle`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{CloseFrame, Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use serde::Serialize;
use serde_json::Value;
use tokio::sync::broadcast::error::RecvError;

use super::layers::{diff, MapLayers};
use super::protocol::*;
use super::simthread::SimHandle;

/// Close code sent after a malformed message (RFC 6455 "invalid payload").
pub const CLOSE_MALFORMED: u16 = 1007;

#[derive(Clone)]
struct AppState {
    sim: SimHandle,
    /// Session currently holding operator authority.
    operator: Arc<Mutex<Option<u64>>>,
    next_id: Arc<AtomicU64>,
}

pub fn router(sim: SimHandle) -> Router {
    let state = AppState {
        sim,
        operator: Arc::new(Mutex::new(None)),
        next_id: Arc::new(AtomicU64::new(1)),
    };
    Router::new()
        .route("/", get(upgrade))
        .route("/ws", get(upgrade))
        .with_state(state)
}

/// Serves the protocol on a bound listener until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, sim: SimHandle) -> std::io::Result<()> {
    axum::serve(listener, router(sim)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| async move {
        let id = state.next_id.fetch_add(1, Ordering::Relaxed);
        let mut session = Session::new(id, state.clone(), socket);
        let _ = session.run().await;
        let mut op = state.operator.lock().expect("operator lock");
        if *op == Some(id) {
            *op = None;
        }
    })
}

/// Per-stream subscription: minimum sim-time spacing and last send time.
#[derive(Clone, Copy, Debug)]
struct Rate {
    min_dt: f64,
    last: f64,
}

impl Rate {
    fn new(cap: f64, requested: Option<f64>) -> Self {
        let hz = requested
            .filter(|h| h.is_finite() && *h > 0.0)
            .map_or(cap, |h| h.min(cap));
        Self {
            min_dt: 1.0 / hz,
            last: f64::NEG_INFINITY,
        }
    }

    fn hz(&self) -> f64 {
        1.0 / self.min_dt
    }

    /// Admits a frame stamped `t`; a reset (time going back) restarts the
    /// spacing.
    fn admit(&mut self, t: f64) -> bool {
        if t < self.last || t - self.last >= self.min_dt - 1e-9 {
            self.last = t;
            true
        } else {
            false
        }
    }
}

const STREAMS: [(&str, f64); 5] = [
    ("telemetry", TELEMETRY_MAX_HZ),
    ("map", MAP_MAX_HZ),
    ("voxels", VOXELS_MAX_HZ),
    ("path", f64::INFINITY),
    ("events", f64::INFINITY),
];

#[derive(Default)]
struct Subs {
    telemetry: Option<Rate>,
    map: Option<Rate>,
    voxels: Option<Rate>,
    path: bool,
    events: bool,
}

struct Session {
    id: u64,
    state: AppState,
    socket: WebSocket,
    seq: u64,
    role: Role,
    subs: Subs,
    map_sent: Option<Arc<MapLayers>>,
}

enum Flow {
    Continue,
    Close,
}

impl Session {
    fn new(id: u64, state: AppState, socket: WebSocket) -> Self {
        Self {
            id,
            state,
            socket,
            seq: 0,
            role: Role::Observer,
            subs: Subs::default(),
            map_sent: None,
        }
    }

    async fn send<T: Serialize>(
        &mut self,
        kind: &str,
        t_sim: f64,
        payload: &T,
    ) -> Result<(), axum::Error> {
        self.seq += 1;
        let env = Envelope {
            v: PROTOCOL_VERSION,
            seq: self.seq,
            kind: kind.into(),
            t_sim,
            payload: serde_json::to_value(payload).unwrap_or(Value::Null),
        };
        let text = serde_json::to_string(&env).expect("envelope serializes");
        self.socket.send(Message::Text(Utf8Bytes::from(text))).await
    }

    async fn nack(
        &mut self,
        id: Option<u64>,
        reason: NackReason,
        message: &str,
    ) -> Result<(), axum::Error> {
        let t = self.state.sim.now();
        self.send(
            "nack",
            t,
            &Nack {
                id,
                reason,
                message: message.into(),
                nearest_free: None,
            },
        )
        .await
    }

    async fn run(&mut self) -> Result<(), axum::Error> {
        let sim = self.state.sim.clone();
        let hello = ServerHello {
            protocol_version: PROTOCOL_VERSION,
            world_bounds: *sim.world.bounds(),
            config: (*sim.summary).clone(),
            streams: STREAMS
                .iter()
                .map(|(n, hz)| StreamInfo {
                    name: (*n).into(),
                    max_hz: hz.is_finite().then_some(*hz),
                })
                .collect(),
            role: Role::Observer,
        };
        self.send("hello", sim.now(), &hello).await?;
        let mut telemetry = sim.telemetry.clone();
        let mut map = sim.map.clone();
        let mut voxels = sim.voxels.clone();
        let mut path = sim.path.clone();
        let mut events = sim.subscribe_events();
        loop {
            tokio::select! {
                msg = self.socket.recv() => {
                    let Some(Ok(msg)) = msg else { return Ok(()) };
                    match msg {
                        Message::Text(text) => {
                            if let Flow::Close = self.on_text(text.as_str()).await? {
                                return Ok(());
                            }
                        }
                        Message::Binary(_) => {
                            self.nack(None, NackReason::Malformed, "binary frames are server to client only").await?;
                            return self.close_malformed().await;
                        }
                        Message::Close(_) => return Ok(()),
                        _ => {}
                    }
                }
                Ok(()) = telemetry.changed(), if self.subs.telemetry.is_some() => {
                    let snap = telemetry.borrow_and_update().clone();
                    if let Some(s) = snap {
                        if self.subs.telemetry.as_mut().is_some_and(|r| r.admit(s.t)) {
                            self.send("telemetry", s.t, &s.value).await?;
                        }
                    }
                }
                Ok(()) = map.changed(), if self.subs.map.is_some() => {
                    let layers = map.borrow_and_update().clone();
                    self.send_map(layers, false).await?;
                }
                Ok(()) = voxels.changed(), if self.subs.voxels.is_some() => {
                    let frame = voxels.borrow_and_update().clone();
                    if let Some(f) = frame {
                        if self.subs.voxels.as_mut().is_some_and(|r| r.admit(f.t)) {
                            let msg = VoxelsMsg { count: f.points.len(), voxel_size: f.voxel_size, binary: true };
                            self.send("voxels", f.t, &msg).await?;
                            self.socket.send(Message::Binary(encode_voxels(&f.points).into())).await?;
                        }
                    }
                }
                Ok(()) = path.changed(), if self.subs.path => {
                    let p = path.borrow_and_update().clone();
                    if let Some(p) = p {
                        self.send("path", p.t, &p.value).await?;
                    }
                }
                ev = events.recv(), if self.subs.events => match ev {
                    Ok(e) => self.send("event", e.t, &e.body).await?,
                    Err(RecvError::Lagged(_)) => {}
                    Err(RecvError::Closed) => return Ok(()),
                },
            }
        }
    }

    async fn send_map(
        &mut self,
        layers: Arc<MapLayers>,
        force_keyframe: bool,
    ) -> Result<(), axum::Error> {
        let due = self.subs.map.as_mut().is_some_and(|r| r.admit(layers.t));
        match self.map_sent.clone() {
            Some(old) if !force_keyframe && old.same_layout(&layers) => {
                if !due || old.version == layers.version {
                    return Ok(());
                }
                let delta = diff(&old, &layers);
                if !delta.is_empty() {
                    self.send("map_delta", layers.t, &delta).await?;
                    self.map_sent = Some(layers);
                }
            }
            _ => {
                self.send("map_keyframe", layers.t, &layers.keyframe())
                    .await?;
                self.map_sent = Some(layers);
            }
        }
        Ok(())
    }

    async fn close_malformed(&mut self) -> Result<(), axum::Error> {
        let frame = CloseFrame {
            code: CLOSE_MALFORMED,
            reason: Utf8Bytes::from_static("malformed message"),
        };
        self.socket.send(Message::Close(Some(frame))).await
    }

    async fn on_text(&mut self, text: &str) -> Result<Flow, axum::Error> {
        let env: Envelope = match serde_json::from_str(text) {
            Ok(e) => e,
            Err(e) => {
                self.nack(None, NackReason::Malformed, &e.to_string())
                    .await?;
                self.close_malformed().await?;
                return Ok(Flow::Close);
            }
        };
        match env.kind.as_str() {
            "hello" => match serde_json::from_value::<ClientHello>(env.payload) {
                Ok(h) => self.on_hello(h.role).await?,
                Err(e) => {
                    self.nack(None, NackReason::Malformed, &e.to_string())
                        .await?
                }
            },
            "subscribe" => match serde_json::from_value::<Subscribe>(env.payload) {
                Ok(s) => self.on_subscribe(s).await?,
                Err(e) => {
                    self.nack(None, NackReason::Malformed, &e.to_string())
                        .await?
                }
            },
            "command" => match serde_json::from_value::<CommandMessage>(env.payload.clone()) {
                Ok(c) => self.on_command(c).await?,
                Err(e) => {
                    let id = env.payload.get("id").and_then(Value::as_u64);
                    self.nack(id, NackReason::Malformed, &e.to_string()).await?
                }
            },
            other => {
                self.nack(
                    None,
                    NackReason::Malformed,
                    &format!("unknown message type `{other}`"),
                )
                .await?;
                self.close_malformed().await?;
                return Ok(Flow::Close);
            }
        }
        Ok(Flow::Continue)
    }

    async fn on_hello(&mut self, role: Role) -> Result<(), axum::Error> {
        let granted = {
            let mut op = self.state.operator.lock().expect("operator lock");
            match role {
                Role::Operator if op.is_none() || *op == Some(self.id) => {
                    *op = Some(self.id);
                    true
                }
                Role::Operator => false,
                Role::Observer => {
                    if *op == Some(self.id) {
                        *op = None;
                    }
                    true
                }
            }
        };
        if granted {
            self.role = role;
            let mut ack = Ack::new("hello");
            ack.role = Some(role);
            self.send("ack", self.state.sim.now(), &ack).await
        } else {
            self.nack(
                None,
                NackReason::NoAuthority,
                "another session holds operator authority",
            )
            .await
        }
    }

    async fn on_subscribe(&mut self, s: Subscribe) -> Result<(), axum::Error> {
        if let Some(bad) = s
            .streams
            .iter()
            .find(|x| !STREAMS.iter().any(|(n, _)| *n == x.name))
        {
            let msg = format!("unknown stream `{}`", bad.name);
            return self.nack(None, NackReason::Malformed, &msg).await;
        }
        let mut granted = Vec::new();
        for sub in &s.streams {
            let cap = STREAMS
                .iter()
                .find(|(n, _)| *n == sub.name)
                .map(|(_, hz)| *hz)
                .expect("checked above");
            let hz = match sub.name.as_str() {
                "telemetry" => self.subs.telemetry.insert(Rate::new(cap, sub.max_hz)).hz(),
                "map" => {
                    // (re)subscribing asks for a fresh keyframe
                    self.map_sent = None;
                    self.subs.map.insert(Rate::new(cap, sub.max_hz)).hz()
                }
                "voxels" => self.subs.voxels.insert(Rate::new(cap, sub.max_hz)).hz(),
                "path" => {
                    self.subs.path = true;
                    cap
                }
                _ => {
                    self.subs.events = true;
                    cap
                }
            };
            granted.push(StreamInfo {
                name: sub.name.clone(),
                max_hz: hz.is_finite().then_some(hz),
            });
        }
        let mut ack = Ack::new("subscribe");
        ack.streams = Some(granted);
        self.send("ack", self.state.sim.now(), &ack).await?;
        if self.subs.map.is_some() && self.map_sent.is_none() {
            let layers = self.state.sim.map.borrow().clone();
            self.send_map(layers, true).await?;
        }
        Ok(())
    }

    async fn on_command(&mut self, c: CommandMessage) -> Result<(), axum::Error> {
        let holds = *self.state.operator.lock().expect("operator lock") == Some(self.id);
        if !holds {
            return self
                .nack(
                    Some(c.id),
                    NackReason::NoAuthority,
                    "commands need operator authority",
                )
                .await;
        }
        match self.state.sim.command(c.command).await {
            Ok(applied) => {
                let mut ack = Ack::new("command");
                ack.id = Some(c.id);
                ack.applied_t = Some(applied.t);
                ack.clamped = applied.clamped;
                ack.applied = Some(applied.command);
                self.send("ack", applied.t, &ack).await
            }
            Err(r) => {
                let nack = Nack {
                    id: Some(c.id),
                    reason: r.reason,
                    message: r.message,
                    nearest_free: r.nearest_free,
                };
                self.send("nack", self.state.sim.now(), &nack).await
            }
        }
    }
}
