//! Experiment orchestration: configuration, runs, rate fits, repeats and
//! sweeps, plot data, and the invariant suite behind `aqgd verify`.

mod config;
mod experiment;
mod fit;
mod plot;
mod repeats;
mod verify;

use thiserror::Error;

use crate::optimize::{CsvError, RunTrace};

pub use config::{Algorithm, ExperimentConfig, NoiseKind, PerturbKind, ProblemKind, QuantizerKind};
pub use experiment::{prepare, run_experiment, ExperimentOutcome, Prepared, RunSummary};
pub use fit::{compare_rates, fit_gaps, fit_rate, RateComparison, RateFit, MIN_FIT_POINTS};
pub use plot::{write_plot_files, GNUPLOT_SCRIPT};
pub use repeats::{
    grid_points, quantile_rows, run_repeats, sweep, thread_pool, write_quantiles, QuantileRow, SweepPoint, THREADS_ENV,
};
pub use verify::{verify_suite, VerifyCheck};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("divergence: {detail}")]
    Divergence {
        detail: String,
        partial: Option<Box<RunTrace>>,
    },
    #[error("rate fit: {0}")]
    Fit(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

impl HarnessError {
    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Invariant(_) => 2,
            HarnessError::Divergence { .. } => 3,
            HarnessError::Config(_) => 4,
            HarnessError::Fit(_) | HarnessError::Io(_) | HarnessError::Csv(_) => 1,
        }
    }

    /// Message without the category prefix.
    pub fn detail(&self) -> String {
        match self {
            HarnessError::Config(m) | HarnessError::Invariant(m) | HarnessError::Fit(m) => m.clone(),
            HarnessError::Divergence { detail, .. } => detail.clone(),
            other => other.to_string(),
        }
    }
}
