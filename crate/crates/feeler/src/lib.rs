//! Experiment pipeline and labeling service around `feeler-core`.
//!
//! An experiment is a directory (see [`store`]) advanced by the commands in
//! [`pipeline`]; [`service`] exposes the same directory over HTTP so people
//! can rate designs and explore predictions.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod render;
pub mod service;
pub mod store;

pub use config::{ExperimentConfig, HoldoutSource, LabelSource};
pub use error::PipelineError;
pub use pipeline::{EvaluationReport, Experiment, Outcome, RatingsInput};
