//! Per-image overlap metrics, macro aggregation and bootstrap intervals.

pub mod bootstrap;
pub mod confusion;
pub mod evaluate;

use thiserror::Error;

pub use bootstrap::{bootstrap_ci, BootstrapCi};
pub use confusion::{aggregate_mean, compute_metrics, confusion, ConfusionCounts, MetricResult};
pub use evaluate::{
    evaluate_dataset, image_id, score, summarize, AggregateReport, EvaluationOptions,
    EvaluationReport, FailedImage, ImageOutcome, PerImageRow, Segmenter,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("mask value {0} is not binary")]
    NonBinary(u8),
    #[error("cannot aggregate an empty list")]
    Empty,
    #[error("bootstrap needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("confidence level {0} is not in (0, 1)")]
    BadLevel(f64),
}
