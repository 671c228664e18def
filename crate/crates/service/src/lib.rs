//! Session service and command-line tools around `peakvol-core`.
//!
//! [`service::start`] wires the contexts together: a UDP receiver feeding a
//! bounded queue, a session thread that owns the interaction state, a
//! change-driven render thread, and an axum server for the HTTP endpoints and
//! the `/stream` WebSocket.

pub mod cli;
pub mod config;
mod http;
pub mod protocol;
pub mod service;
pub mod trace;

pub use config::{RenderOverrides, ServiceConfig, VolumeSource};
pub use service::{start, Frame, ServiceError, ServiceHandle, Stats};
