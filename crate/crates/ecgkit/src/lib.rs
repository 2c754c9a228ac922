//! Single-channel ECG rhythm classification toolkit.
//!
//! The pipeline mirrors a complete experiment: load or synthesize recordings,
//! standardize and band-limit them, locate R-peaks with a dual-slope
//! criterion, cut fixed-length multi-beat segments, and train hybrid
//! CNN/BiLSTM classifiers with focal loss. Every numerical component is
//! implemented in this crate and verified against independent oracles.

pub mod config;
pub mod error;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod qrs;
pub mod record;
pub mod segment;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
