//! Experiment harness: configuration, dataset ingestion, reference solves,
//! seed runs and artifact directories.

pub mod config;
pub mod data;
pub mod experiment;
pub mod solver;

pub use config::{
    ExperimentConfig, ExperimentSection, OracleSection, ProblemConfig, RunSection, ScheduleConfig,
    ScheduleKindConfig, OUT_ROOT_ENV,
};
pub use data::{count_digits, ingest_mnist, load_split, partition, DatasetPart, DatasetSplit, IdxPaths};
pub use experiment::{
    build_problem, build_schedule, certify, execute, ingest, load_config_split, plateau,
    run_experiment, sweep, sweep_results, theory_report, write_artifacts, write_atomically, AggregateRow, AlphaSource, ExperimentResult, Problem, SeedRow,
    SeedTrace, SweepParameter, SweepRow,
};
pub use solver::{evaluate_accuracy, reference_optimum};
