//! K-fold cross-validation with per-fold resume and pooled reporting.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{preprocess_sample, DatasetError, FoldAssignment, ImageRecord, SegSample};
use crate::metrics::{aggregate_mean, summarize, AggregateReport, EvaluationOptions, MetricResult};
use crate::model::ModelConfig;
use crate::scalar::Scalar;

use super::fold::{train_fold, validation_scores, CheckpointMeta, FoldOptions};
use super::schedule::TrainConfig;
use super::TrainError;

pub const FOLD_META: &str = "meta.json";
pub const FOLD_VALIDATION: &str = "validation.json";
pub const CV_SUMMARY: &str = "cv_summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldValidation {
    pub image_paths: Vec<String>,
    pub per_image: Vec<MetricResult<f64>>,
    pub mean: MetricResult<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub meta: Option<CheckpointMeta>,
    pub validation: Option<FoldValidation>,
    /// Failure marker; `None` for a completed fold.
    pub error: Option<String>,
    /// True when the fold was loaded from an earlier run.
    #[serde(default)]
    pub resumed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRunResult {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub n_failed: usize,
    /// Arithmetic mean of the completed folds' mean metrics.
    pub mean_of_fold_means: Option<MetricResult<f64>>,
    /// Means and bootstrap intervals over all pooled validation images.
    pub pooled: Option<AggregateReport>,
}

#[derive(Clone, Debug, Default)]
pub struct CvOptions {
    /// Fold outputs go to `<run_dir>/fold_<i>/`.
    pub run_dir: Option<PathBuf>,
    /// Skip folds whose `meta.json` already exists.
    pub resume: bool,
    pub eval: EvaluationOptions,
}

/// Loads and preprocesses records in parallel, preserving order.
pub fn load_samples<T: Scalar>(
    records: &[ImageRecord],
    size: (usize, usize),
) -> Result<Vec<SegSample<T>>, DatasetError> {
    records.par_iter().map(|r| preprocess_sample(r, size)).collect()
}

pub fn fold_dir(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join(format!("fold_{fold}"))
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), TrainError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<V, TrainError> {
    let text = fs::read_to_string(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| TrainError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn resume_fold(dir: &Path, fold: usize) -> Option<FoldResult> {
    let meta: CheckpointMeta = read_json(&dir.join(FOLD_META)).ok()?;
    let validation: FoldValidation = read_json(&dir.join(FOLD_VALIDATION)).ok()?;
    Some(FoldResult {
        fold_index: fold,
        meta: Some(meta),
        validation: Some(validation),
        error: None,
        resumed: true,
    })
}

fn run_one<T: Scalar>(
    fold: &FoldAssignment,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dir: Option<&Path>,
) -> Result<(CheckpointMeta, FoldValidation), TrainError> {
    let size = (model_cfg.image_size, model_cfg.image_size);
    let train = load_samples::<T>(&fold.train_records, size)?;
    let val = load_samples::<T>(&fold.val_records, size)?;
    let run = train_fold(
        &train,
        &val,
        model_cfg,
        train_cfg,
        &FoldOptions {
            fold_index: fold.fold_index,
            out_dir: dir.map(Path::to_path_buf),
        },
    )?;
    let per_image = validation_scores(&run.best, &val)?;
    let validation = FoldValidation {
        image_paths: fold
            .val_records
            .iter()
            .map(|r| r.image_path.display().to_string())
            .collect(),
        mean: aggregate_mean(&per_image)?,
        per_image,
    };
    if let Some(dir) = dir {
        // meta.json last: its presence marks the fold complete.
        write_json(&dir.join(FOLD_VALIDATION), &validation)?;
        write_json(&dir.join(FOLD_META), &run.meta)?;
    }
    Ok((run.meta, validation))
}

/// Trains every fold independently. A failing fold is recorded with its error
/// and the remaining folds still run.
pub fn run_cross_validation<T: Scalar>(
    folds: &[FoldAssignment],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    opts: &CvOptions,
) -> Result<CvRunResult, TrainError> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let mut results = Vec::with_capacity(folds.len());
    for fold in folds {
        let dir = opts.run_dir.as_ref().map(|d| fold_dir(d, fold.fold_index));
        if opts.resume {
            if let Some(r) = dir.as_deref().and_then(|d| resume_fold(d, fold.fold_index)) {
                results.push(r);
                continue;
            }
        }
        let r = match run_one::<T>(fold, model_cfg, train_cfg, dir.as_deref()) {
            Ok((meta, validation)) => FoldResult {
                fold_index: fold.fold_index,
                meta: Some(meta),
                validation: Some(validation),
                error: None,
                resumed: false,
            },
            Err(e) => FoldResult {
                fold_index: fold.fold_index,
                meta: match &e {
                    TrainError::Divergence { last_good, .. } => last_good.as_deref().cloned(),
                    _ => None,
                },
                validation: None,
                error: Some(e.to_string()),
                resumed: false,
            },
        };
        results.push(r);
    }

    let done: Vec<&FoldValidation> = results.iter().filter_map(|r| r.validation.as_ref()).collect();
    let mean_of_fold_means = if done.is_empty() {
        None
    } else {
        let means: Vec<MetricResult<f64>> = done.iter().map(|v| v.mean.clone()).collect();
        Some(aggregate_mean(&means)?)
    };
    let pooled_values: Vec<MetricResult<f64>> = done.iter().flat_map(|v| v.per_image.iter().cloned()).collect();
    let pooled = if pooled_values.is_empty() {
        None
    } else {
        Some(summarize(&pooled_values, Vec::new(), &opts.eval)?)
    };
    let result = CvRunResult {
        k: folds.len(),
        n_failed: results.iter().filter(|r| r.error.is_some()).count(),
        folds: results,
        mean_of_fold_means,
        pooled,
    };
    if let Some(dir) = &opts.run_dir {
        write_json(&dir.join(CV_SUMMARY), &result)?;
    }
    Ok(result)
}
