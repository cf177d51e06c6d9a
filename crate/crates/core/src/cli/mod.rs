//! Batch front-end: versioned experiment configs, reproducible mode
//! dispatch, and result-record assembly for the binary.

pub mod config;
pub mod run;

pub use config::{ExperimentConfig, Mode};
pub use run::{exit_code, result_record, run, RunOutcome};
