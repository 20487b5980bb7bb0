//! Command-line harness: configuration, the generate-data / train / compare
//! pipeline, and report/montage emission.

pub mod commands;
pub mod config;
pub mod montage;
pub mod report_io;

pub use commands::{cmd_compare, cmd_generate_data, cmd_train};
pub use config::ExperimentConfig;
