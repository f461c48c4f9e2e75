//! Checkpoint-level learning-curve analysis for language-model pre-training runs.
//!
//! The crate covers the path from a checkpoint schedule and a token corpus
//! to per-example surprisal curves, smoothed fits, curve metrics and the
//! regressions that relate those metrics to example-level predictors.

pub mod config;
pub mod corpus;
pub mod curves;
pub mod error;
pub mod features;
pub mod gamfit;
pub mod linalg;
pub mod metrics;
pub mod ngram;
pub mod pipeline;
pub mod regress;
pub mod rng;
pub mod schedule;
pub mod stats;
pub mod synth;
pub mod table;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
