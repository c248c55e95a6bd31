//! Storm-surge emulation with a peak-aware cross-attention graph transformer.
//!
//! Layout:
//! - [`numerics`]: tensors and the reverse-mode tape every layer is built on.
//! - [`data`]: forcing graphs, samples, synthetic datasets and splits.
//! - [`model`]: the PACT network and the two graph baselines.
//! - [`loss`]: the peak-aware objective.
//! - [`train`]: Adam, learning-rate schedule, training loop, checkpoints.
//! - [`eval`]: hourly reconstruction, metrics and peak-event diagnostics.

pub mod error;
pub mod data;
pub mod eval;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod train;

pub use error::{Error, Result};
