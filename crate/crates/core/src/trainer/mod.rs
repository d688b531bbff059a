//! Optimization schedule, fold training and cross-validation.

pub mod cv;
pub mod fold;
pub mod optim;
pub mod schedule;

use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::metrics::MetricsError;
use crate::model::ModelError;

pub use cv::{run_cross_validation, CvOptions, CvRunResult, FoldResult, FoldValidation};
pub use fold::{
    fold_seed, train_fold, validation_dice, validation_scores, CheckpointMeta, FoldOptions, FoldRun,
    StepRecord, ValidationEvent,
};
pub use optim::{clip_gradients, global_norm, AdamW, ClipReport, LossScaler, ParamHyper};
pub use schedule::{layer_lr_multiplier, lr_at, Precision, TrainConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("non-finite parameter after update")]
    NonFiniteUpdate,
    #[error("fold {fold} diverged at epoch {epoch}, step {step}: {reason}")]
    Divergence {
        fold: usize,
        epoch: usize,
        step: usize,
        reason: String,
        /// Best checkpoint written before the divergence, if any.
        last_good: Option<Box<CheckpointMeta>>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}
