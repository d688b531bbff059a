//! Pancreatic tumor segmentation on endoscopic ultrasound frames.
//!
//! A vision transformer with relative position bias feeds an
//! attention-to-mask decoder; binary masks come from a plain argmax. The
//! crate also covers preprocessing, case-grouped cross-validation, overlap
//! metrics with bootstrap intervals and failure analysis.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32`, `f64`); the
//! metric layer additionally accepts exact rationals through
//! [`scalar::Ratio`]. The aliases below fix the common choices.

pub mod analysis;
pub mod autodiff;
pub mod dataset;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub type SegModel32 = model::SegModel<f32>;
pub type SegModel64 = model::SegModel<f64>;
pub type Sample32 = dataset::SegSample<f32>;
pub type Sample64 = dataset::SegSample<f64>;
pub type Matrix32 = tensor::Matrix<f32>;
pub type Matrix64 = tensor::Matrix<f64>;
/// Exact metric arithmetic for identity checks.
pub type ExactRatio = num_rational::Ratio<i128>;
pub type ExactMetrics = metrics::MetricResult<ExactRatio>;
