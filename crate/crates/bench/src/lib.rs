//! Scaling experiments over the `hmclab` library, their configuration and output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind, Schedule, WarmStartSpec};
