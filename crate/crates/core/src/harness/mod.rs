//! Experiment harness: configuration, the round loop, and run artifacts.

pub mod config;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use output::emit_outputs;
pub use run::{
    build_instance, diagnostics, run_experiment, run_experiment_with, run_on_instance, Diagnostics,
    PolicyRun, RunOptions, RunResult,
};
