//! Online stacked sparse LSTM auto-encoder for unsupervised object-level
//! video summarization.
//!
//! Object trajectories are cut into motion clips, each clip is sampled at
//! its start, middle and end frame, and a stacked sparse LSTM auto-encoder
//! scores clips by reconstruction error. The auto-encoder is pre-trained on
//! still sequences and updated online on every 1000-frame chunk after that
//! chunk has been scored.

pub mod cli;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod segment;
pub mod stack;

pub use error::{Error, Result};

/// A clip or still sequence: one feature vector per time step.
pub type Sequence = Vec<ndarray::Array1<f64>>;
