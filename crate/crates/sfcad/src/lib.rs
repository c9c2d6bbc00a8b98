//! Sequential anomaly detection for VNF service function chains.
//!
//! The crate implements a four-stage architecture — position-shared feature
//! mapping, a variable-length sequence encoder over the VNFs of a chain
//! (uni/bi-directional LSTM or a Transformer), a pooling readout, and a
//! temporal LSTM classifier over sliding windows — together with an optional
//! previous-prediction feedback input, a synthetic SFC telemetry generator
//! with fault injection and SLA labeling, a deterministic trainer, and an
//! evaluation harness.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Axis, Tensor};
