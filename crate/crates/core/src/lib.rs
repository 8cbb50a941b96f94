//! Desk-scale tooling for single-molecule localization microscopy:
//! an image-formation and camera simulator, entropic optimal-transport
//! matching loss with verified gradients, and the standard challenge
//! metric stack (Jaccard, RMSE, 3-D efficiency, FRC, RSP).

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod otloss;
pub mod physics;
pub mod rng;
pub mod storage;
pub mod transport;

pub use error::{Error, Result};
pub use exec::Exec;
