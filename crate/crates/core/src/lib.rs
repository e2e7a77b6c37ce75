//! Rate control built on a generalized rate-distortion-lambda model.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: closed-form rate, distortion, lambda and QP relations
//! * [`fitting`]: least-squares fits of the classic and proposed R-D curves
//! * [`gop`]: RA/LD GOP tables and hierarchical coefficient initialization
//! * [`update`]: LMS coefficient update with decay and scene-change reset
//! * [`allocation`]: GOP and picture level bit allocation
//! * [`controller`]: the per-frame rate control loop and CQP reference mode
//! * [`encoder`]: a deterministic virtual encoder with known R-D curves
//! * [`metrics`]: rate accuracy, PSNR and BD-rate
//! * [`sweep`]: CQP anchors followed by ABR runs at the anchor rates
//!
//! Batch work (fits over QP ranges, simulation sweeps, Monte-Carlo suites)
//! goes through [`par`], which uses rayon when the `parallel` feature is on.

pub mod allocation;
pub mod controller;
pub mod encoder;
pub mod error;
pub mod fitting;
pub mod gop;
pub mod metrics;
pub mod model;
pub mod par;
pub mod simplex;
pub mod sweep;
pub mod update;

pub use error::{Error, Result};
