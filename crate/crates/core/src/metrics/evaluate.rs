//! Dataset-level evaluation: preprocess, predict, score, aggregate.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, BootstrapCi, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use super::confusion::{aggregate_mean, compute_metrics, confusion, ConfusionCounts, MetricResult};
use super::MetricsError;
use crate::analysis::{connected_components, ComponentStats, Connectivity};
use crate::dataset::{preprocess_sample, ImageRecord, Mask, SegSample};
use crate::scalar::Scalar;

/// Anything that turns a preprocessed sample into a binary mask.
pub trait Segmenter<T: Scalar>: Sync {
    /// Model input resolution `(height, width)`.
    fn input_size(&self) -> (usize, usize);

    fn segment(&self, sample: &SegSample<T>) -> Result<Mask, String>;
}

/// Stable identifier for the `index`-th evaluated record.
pub fn image_id(index: usize, path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clean: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:04}_{clean}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub connectivity: Connectivity,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            n_resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            seed: 0,
            connectivity: Connectivity::Eight,
        }
    }
}

/// One row of the per-image results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerImageRow {
    pub image_id: String,
    pub image_path: String,
    pub dsc: f64,
    pub iou: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub component_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedImage {
    pub image_path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_images: usize,
    pub n_evaluated: usize,
    pub n_failed: usize,
    pub failed: Vec<FailedImage>,
    pub mean: Option<MetricResult<f64>>,
    pub dsc: Option<BootstrapCi<f64>>,
    pub iou: Option<BootstrapCi<f64>>,
    pub sensitivity: Option<BootstrapCi<f64>>,
    pub specificity: Option<BootstrapCi<f64>>,
}

/// Everything known about one successfully evaluated image, handed to the
/// caller's sink before it is dropped.
pub struct ImageOutcome<'a, T> {
    pub index: usize,
    pub image_id: String,
    pub sample: &'a SegSample<T>,
    pub prediction: &'a Mask,
    pub counts: ConfusionCounts,
    pub metrics: &'a MetricResult<f64>,
    pub components: &'a ComponentStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// Rows for successfully evaluated images, in manifest order.
    pub rows: Vec<PerImageRow>,
    /// Manifest index of each row.
    pub row_index: Vec<usize>,
    pub per_image: Vec<MetricResult<f64>>,
    pub aggregate: AggregateReport,
}

/// Scores one prediction.
pub fn score(pred: &Mask, gt: &Mask) -> Result<(ConfusionCounts, MetricResult<f64>), MetricsError> {
    let c = confusion(pred, gt)?;
    Ok((c, compute_metrics(&c)))
}

/// Macro means plus bootstrap intervals on dsc, iou, sensitivity and specificity.
pub fn summarize(
    per_image: &[MetricResult<f64>],
    failed: Vec<FailedImage>,
    opts: &EvaluationOptions,
) -> Result<AggregateReport, MetricsError> {
    let mean = if per_image.is_empty() {
        None
    } else {
        Some(aggregate_mean(per_image)?)
    };
    let ci = |f: fn(&MetricResult<f64>) -> f64| -> Result<Option<BootstrapCi<f64>>, MetricsError> {
        if per_image.len() < 2 {
            return Ok(None);
        }
        let values: Vec<f64> = per_image.iter().map(f).collect();
        bootstrap_ci(&values, opts.level, opts.n_resamples, opts.seed).map(Some)
    };
    Ok(AggregateReport {
        n_images: per_image.len() + failed.len(),
        n_evaluated: per_image.len(),
        n_failed: failed.len(),
        failed,
        mean,
        dsc: ci(|m| m.dsc)?,
        iou: ci(|m| m.iou)?,
        sensitivity: ci(|m| m.sensitivity)?,
        specificity: ci(|m| m.specificity)?,
    })
}

type Sink<'s, T> = dyn Fn(&ImageOutcome<'_, T>) -> Result<(), String> + Sync + 's;

/// Evaluates `segmenter` on every record. Per-image failures are listed in
/// the aggregate and excluded from the means.
pub fn evaluate_dataset<T: Scalar, S: Segmenter<T>>(
    segmenter: &S,
    records: &[ImageRecord],
    opts: &EvaluationOptions,
    sink: Option<&Sink<'_, T>>,
) -> Result<EvaluationReport, MetricsError> {
    let target = segmenter.input_size();
    let results: Vec<Result<(PerImageRow, MetricResult<f64>), FailedImage>> = records
        .par_iter()
        .enumerate()
        .map(|(index, record)| {
            let fail = |reason: String| FailedImage {
                image_path: record.image_path.display().to_string(),
                reason,
            };
            let sample = preprocess_sample::<T>(record, target).map_err(|e| fail(e.to_string()))?;
            let pred = segmenter.segment(&sample).map_err(fail)?;
            let (counts, metrics) = score(&pred, &sample.mask).map_err(|e| fail(e.to_string()))?;
            let components =
                connected_components(&pred, opts.connectivity).map_err(|e| fail(e.to_string()))?;
            if let Some(sink) = sink {
                sink(&ImageOutcome {
                    index,
                    image_id: image_id(index, &record.image_path),
                    sample: &sample,
                    prediction: &pred,
                    counts,
                    metrics: &metrics,
                    components: &components,
                })
                .map_err(fail)?;
            }
            let row = PerImageRow {
                image_id: image_id(index, &record.image_path),
                image_path: record.image_path.display().to_string(),
                dsc: metrics.dsc,
                iou: metrics.iou,
                sensitivity: metrics.sensitivity,
                specificity: metrics.specificity,
                accuracy: metrics.accuracy,
                component_count: components.component_count,
            };
            Ok((row, metrics))
        })
        .collect();

    let mut rows = Vec::new();
    let mut row_index = Vec::new();
    let mut per_image = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((row, m)) => {
                rows.push(row);
                row_index.push(i);
                per_image.push(m);
            }
            Err(f) => failed.push(f),
        }
    }
    let aggregate = summarize(&per_image, failed, opts)?;
    Ok(EvaluationReport {
        rows,
        row_index,
        per_image,
        aggregate,
    })
}

/// Writes the per-image table as CSV.
pub fn write_rows_csv<W: std::io::Write>(rows: &[PerImageRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<PerImageRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
