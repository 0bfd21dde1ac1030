//! Multi-timescale replay for continual reinforcement learning.
//!
//! The crate is organised around a few interchangeable strategy families,
//! each behind a trait and registered by name so the harness can pick them
//! at runtime:
//!
//! * [`replay`]: experience buffers (`fifo`, `reservoir`, `half`, `mtr`).
//! * [`envsim`]: gravity schedules (`fixed`, `linear`, `sine`, `random`) and
//!   the point-mass hover task they drive.
//! * [`agent`]: a small max-entropy actor-critic whose policy loss can carry
//!   an invariance penalty across cascade sub-buffers.
//! * [`retention`]: closed-form and simulated retention curves for the
//!   cascade buffer.
//! * [`harness`]: experiment runner, aggregation and charts.

pub mod agent;
pub mod envsim;
mod error;
pub mod harness;
pub mod replay;
pub mod retention;
pub mod rngs;
pub mod verify;

pub use error::{Error, Result};

/// Build identifier recorded in experiment outputs.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_VERSION"), "-", env!("MTR_BUILD_DESCRIBE"));
