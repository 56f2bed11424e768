//! Joint DMF/agent training, evaluation, ablation and checkpoints.

mod ablate;
mod ckpt;
mod config;
mod dataset;
mod eval;
mod run;
mod train;

pub use ablate::{ablate, write_ablation_csv, AblationReport, AblationRow};
pub use ckpt::{load_agent, load_model, save_agent, save_model, TrainedModel, AGENT_KIND, MODEL_KIND};
pub use config::{TrainConfig, Variant};
pub use crate::data::{META_FILE, RECORDS_FILE};
pub use dataset::{load_table, windows_or_empty, Dataset};
pub use eval::{
    evaluate_windows, format_metrics_table, metric_rows, predict_windows, score, write_metrics_csv, EvalReport,
    METRIC_HEADER,
};
pub use run::{evaluate_checkpoint, evaluate_model, rank_features, run_ablation, run_train, write_train_artifacts, TrainArtifacts};
pub use train::{train, write_epochs_csv, EpochLog, StopReason, TrainOutcome};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::data::DataError;
use crate::dmf::DmfError;
use crate::metrics::MetricsError;
use crate::numcore::NumError;
use crate::rlagent::RlError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dmf(#[from] DmfError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    NoWindows(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("feature registry mismatch\n  checkpoint: {checkpoint:?}\n  data:       {data:?}")]
    RegistryMismatch { checkpoint: Vec<String>, data: Vec<String> },
}

impl TrainError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        TrainError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
    }

    /// Whether the failure stems from user input (files, config, data)
    /// rather than a defect.
    pub fn is_user_error(&self) -> bool {
        match self {
            TrainError::Config(_)
            | TrainError::Data(_)
            | TrainError::Checkpoint(_)
            | TrainError::Io { .. }
            | TrainError::NoWindows(_)
            | TrainError::Divergence { .. }
            | TrainError::RegistryMismatch { .. } => true,
            TrainError::Dmf(e) => !matches!(e, DmfError::Num(_)),
            TrainError::Rl(RlError::Checkpoint(_) | RlError::Config(_)) => true,
            TrainError::Rl(_) | TrainError::Num(_) | TrainError::Metrics(_) => false,
        }
    }
}
