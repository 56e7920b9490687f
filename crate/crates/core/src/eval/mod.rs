//! Holdout split and restore, category-intersection run planning, top-k
//! scoring and repeated evaluation runs.

mod metric;
mod plan;
mod run;
mod split;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::BackendFailure;
use crate::layout::LayoutError;

pub use metric::{topk_accuracy, topk_correct};
pub use plan::{plan_runs, Participant, RunPlan, ALL_RUN};
pub use run::{
    run_eval, CommandTrainer, DatasetRef, DirectoryOracle, EvalOptions, EvalResult, FixedModel, ModelProvider,
    ParticipantResult, RepeatResult, TrainRequest,
};
pub use split::{
    default_holdout_dir, isolate_subset, isolate_subset_filtered, restore_subset, Shortfall, SplitEntry,
    SplitManifest, MANIFEST_FILE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("holdout file missing: {0}")]
    MissingHoldout(PathBuf),
    #[error("refusing to overwrite {0} on restore")]
    RestoreConflict(PathBuf),
    #[error("a split is already active: {0}")]
    AlreadyIsolated(PathBuf),
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("empty input")]
    EmptyInput,
    #[error("{predictions} predictions for {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("classifier failed: {0}")]
    Backend(BackendFailure),
    #[error("training failed: {0}")]
    Training(String),
    #[error("no dataset named {0}")]
    UnknownDataset(String),
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
