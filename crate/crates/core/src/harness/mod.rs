//! Experiment orchestration: configuration, per-member grid search, model
//! runners, cross-model comparison and artifact writers.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod grid;
pub mod report;

pub use compare::{compare_models, CompareReport};
pub use config::{
    BatchSizes, DataSource, ExperimentConfig, FitConfig, GridConfig, ModelKind, NetConfig,
    SplitConfig,
};
pub use experiment::{
    prepare_data, run_experiment, run_model, ExperimentOutcome, ModelRun, PreparedData,
    RunManifest,
};
pub use grid::{grid_cells, monthly_average_mse, select_cell, GridCell, GridResult};
