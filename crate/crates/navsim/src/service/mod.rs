//! WebSocket + JSON service for live telemetry, map layers and operator
//! commands. The protocol is documented in `docs/protocol.md`.
//!
//! The simulation runs on its own thread ([`SimHandle`]); sessions send
//! requests over a channel and read the latest snapshots from watch
//! channels, so a slow client only drops its own frames.

pub mod layers;
pub mod protocol;
mod server;
mod simthread;

pub use server::{router, serve, CLOSE_MALFORMED};
pub use simthread::{
    check_goal, Applied, EventMsg, Rejection, ServiceOptions, SimHandle, Stamped, VoxelFrame,
    SUGGEST_RADIUS,
};
