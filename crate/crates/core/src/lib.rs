//! Pose-based action recognition toolkit and out-of-context benchmark harness.
//!
//! The pipeline runs on serialized per-frame person detections:
//! detections -> human tubes -> SIP-Net / graph-convolution heads ->
//! per-video probabilities -> evaluation reports.

pub mod classifiers;
pub mod cli;
pub mod error;
pub mod eval;
pub mod linker;
pub mod pose;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
