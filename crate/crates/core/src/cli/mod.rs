//! Experiment runner behind the `qdgt` binary.

mod config;
mod run;

pub use config::{
    AlgorithmKind, AlgorithmSpec, CRule, EtaKeyword, EtaSpec, ExperimentConfig, GraphSpec, InitSpec,
    ProblemSpec, ScheduleSpec,
};
pub use run::{
    is_runnable, resolve_output_dir, run_experiment, validate_config, write_constants, Diagnostic,
    ExperimentOutcome, RunSummary, Severity, OUTPUT_DIR_ENV,
};
