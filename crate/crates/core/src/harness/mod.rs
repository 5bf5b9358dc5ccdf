//! Experiment harness: dataset ingestion, synthetic data, run configuration,
//! the run matrix, and file exports consumed by external plotting.

mod config;
mod dataset;
mod runner;
mod surface;

use thiserror::Error;

use crate::net::NetError;
use crate::trainer::TrainError;

pub use config::{DatasetSpec, NetworkConfig, RegularizerSpec, RunConfig, SplitSpec};
pub use dataset::{load_csv, make_noisy_surface_dataset, split_dataset, DataSplits, Dataset};
pub use runner::{run_experiment, ExperimentOutput, RunArtifacts, RunOutcome, RunSuccess, SummaryRow};
pub use surface::{export_surface_grid, SurfaceBounds};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("label column '{0}' not found")]
    MissingLabel(String),
    #[error("config error at {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
}
