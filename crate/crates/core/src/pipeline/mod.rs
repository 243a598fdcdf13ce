//! Dataset generation, supervised training, evaluation, sweeps and ablations.

mod ablation;
mod dataset;
mod eval;
mod metrics;
mod report;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::agent::AgentError;
use crate::comms::CommsError;
use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::oracle::OracleError;
use crate::world::WorldError;

pub use ablation::{run_ablation, AblationRow, AblationVariant};
pub use dataset::{
    generate_dataset, generate_test_set, read_dataset, write_dataset, Dataset, DatasetConfig, DatasetHeader, Sample,
    DATASET_MAGIC, DATASET_VERSION,
};
pub use eval::{evaluate, evaluate_baseline, sweep_comm, Baseline, EvalOverrides};
pub use metrics::{percentile, MetricsReport};
pub use report::{write_loss_csv, write_metrics_csv, MetricsRow};
pub use train::{prepare, train, train_with_progress, EpochLog, Prepared, StopReason, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Comms(#[from] CommsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("map seed {seed}: {source}")]
    Generation { seed: u64, source: Box<PipelineError> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite training loss at epoch {epoch}, batch {batch} (loss {loss})")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

impl From<NumericsError> for PipelineError {
    fn from(e: NumericsError) -> Self {
        Self::Model(e.into())
    }
}
