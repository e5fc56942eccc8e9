//! Command-line pipelines around the `hybrid-sdp` solver: data loading,
//! solving, evaluation and reporting for matrix completion, metric learning
//! and sparse PCA, plus a synthetic data generator and a rate probe.

use std::path::Path;

pub mod args;
mod commands;
pub mod report;

pub use args::{Cli, Command};
pub use commands::{run, run_gen, run_matcomp, run_metric, run_probe, run_spca};
pub use report::{Metrics, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid flag values or combinations.
    #[error("{0}")]
    Config(String),

    /// An input file could not be read or parsed.
    #[error("{path}: {source}")]
    Input {
        path: String,
        #[source]
        source: hybrid_sdp::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("solver failed: {0}")]
    Solve(#[source] hybrid_sdp::Error),

    #[error("rate bound violated at {0} iterations")]
    BoundViolated(usize),
}

impl CliError {
    pub(crate) fn input(path: &Path, e: impl Into<hybrid_sdp::Error>) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            source: e.into(),
        }
    }

    pub(crate) fn output(path: &Path, e: std::io::Error) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            source: e,
        }
    }

    /// 2 for usage, configuration and input errors; 1 for failures after
    /// the inputs were accepted.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Output { .. } | CliError::Solve(_) | CliError::BoundViolated(_) => 1,
        }
    }
}
