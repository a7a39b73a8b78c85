//! Seeded sweeps that turn the convergence results and bounds into tables,
//! plots and summaries.

mod config;
mod degeneracy;
mod records;
mod scenarios;

use thiserror::Error;

pub use config::{ExperimentConfig, Outputs, Scenario, MAX_DENSE_N};
pub use degeneracy::{degeneracy_report, spearman, DegeneracyReport};
pub use records::{
    emit_csv, emit_plot, median, median_series, read_csv, render_plot, write_csv, GuideLine, SweepRecord, SCHEMA_LINE,
};
pub use scenarios::{
    adapted_bandwidth, build_instance, eps_rule, knn_rule, pilot_eps_constant, run_scenario, sample_pairs,
    truncation_radius, write_outputs, Instance, Prepared, ScenarioOutput,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition cannot be met: {0}")]
    PreconditionUnsatisfiable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Generator(#[from] crate::generators::GeneratorError),
    #[error(transparent)]
    Exact(#[from] crate::exact::ExactError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
}
