//! Configuration files, run directories, checkpoints and exported artifacts.

pub mod checkpoint;
pub mod export;
pub mod metrics;
pub mod plot;
pub mod run;

use std::path::{Path, PathBuf};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use export::{export_sign_grid, render_sign_grid, GreyImage, SignGridSpec};
pub use metrics::{read_metrics, MetricsError, MetricsTable, MetricsWriter};
pub use plot::plot;
pub use run::{probe, probe_on, train, train_on, ProbeSummary, TrainOptions, TrainSummary};

use crate::data::DataError;
use crate::game::{GameError, RunConfig};
use crate::numerics::NumericsError;
use crate::probe::ProbeError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{run_dir}: no checkpoint for epochs {epochs:?}")]
    MissingCheckpoints { run_dir: PathBuf, epochs: Vec<usize> },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Reads, validates and fills defaults of a TOML run configuration.
pub fn parse_config(path: &Path) -> Result<RunConfig, AppError> {
    let text = std::fs::read_to_string(path).map_err(|source| AppError::Io { path: path.to_path_buf(), source })?;
    RunConfig::from_toml(&text).map_err(|message| AppError::Config { path: path.to_path_buf(), message })
}
