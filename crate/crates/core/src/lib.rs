//! Interactive direct volume rendering with peak-based transfer functions.
//!
//! The crate is organized bottom-up:
//!
//! * [`volume`]: scalar grids, trilinear sampling, histograms, raw I/O.
//! * [`transfer`]: sine-window peaks blended into a 1D transfer function.
//! * [`raycast`]: CPU ray caster with clip planes and early termination.
//! * [`interaction`]: two-device controller input mapped to navigation and
//!   transfer-function edits.
//! * [`net`]: fixed-size UDP wire format, scripted simulator and receiver.

pub mod volume;
pub mod transfer;
pub mod raycast;
pub mod interaction;
pub mod net;
