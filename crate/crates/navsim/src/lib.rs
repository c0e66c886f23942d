//! File formats, logging, exports, CLI support and the WebSocket service
//! around the `navsim-core` simulation.

pub mod clock;
pub mod exports;
pub mod files;
pub mod logfile;
pub mod service;
