//! Failure analysis: DSC buckets, multiple-component predictions, overlays.

pub mod components;
pub mod failures;
pub mod overlay;

use thiserror::Error;

pub use components::{connected_components, label_components, ComponentStats, Connectivity};
pub use failures::{bucket_failures, format_rate, Bucket, FailureReport, ImageFinding, Thresholds};
pub use overlay::{render_overlay, Overlay, RgbImage};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("mask value {0} is not binary")]
    NonBinary(u8),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
