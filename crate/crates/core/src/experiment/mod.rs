//! Experiment configuration, runners and report tables.

mod config;
mod report;
mod runner;

pub use config::{ordering, ArchitectureConfig, ExperimentConfig, Mode, Profile, ORDERINGS};
pub use report::{build_report, ErrorGrid, GridCell, OccupancyRow, Report};
pub use runner::{
    evaluate, find_dataset, prepare_task, run_all, run_cddm, run_standard, run_standard_task, CddmSession, Evaluation,
    RunResult, TaskResult,
};
