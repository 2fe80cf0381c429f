//! Configuration-driven experiments: synthetic data, the inference pipeline and exports.

pub mod analysis;
pub mod config;
pub mod export;
pub mod pipeline;

pub use config::{ExperimentConfig, TruthShape};
pub use pipeline::{Runner, Stage};
