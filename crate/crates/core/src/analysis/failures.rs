use serde::{Deserialize, Serialize};

use super::components::ComponentStats;

pub const COMPLETE_FAILURE_BELOW: f64 = 0.1;
pub const POOR_BELOW: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Images with DSC strictly below this are complete failures.
    pub complete_failure: f64,
    /// Images with DSC strictly below this (and not complete failures) are poor.
    pub poor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            complete_failure: COMPLETE_FAILURE_BELOW,
            poor: POOR_BELOW,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    CompleteFailure,
    Poor,
    Acceptable,
}

impl Thresholds {
    pub fn bucket(&self, dsc: f64) -> Bucket {
        // NaN compares false everywhere and lands in the failure bucket
        if !(dsc >= self.complete_failure) {
            Bucket::CompleteFailure
        } else if dsc < self.poor {
            Bucket::Poor
        } else {
            Bucket::Acceptable
        }
    }
}

/// Per-image input to the failure analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageFinding {
    pub image_id: String,
    pub dsc: f64,
    pub components: ComponentStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_id: String,
    pub dsc: f64,
    pub bucket: Bucket,
    pub component_count: usize,
    pub component_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub thresholds: Thresholds,
    pub total_images: usize,
    pub complete_failures: Vec<String>,
    pub poor_cases: Vec<String>,
    pub acceptable_count: usize,
    pub multi_prediction_count: usize,
    pub multi_prediction_rate: f64,
    /// Rate as a percentage with one decimal, e.g. `9.7%`.
    pub multi_prediction_rate_display: String,
    pub annotations: Vec<ImageAnnotation>,
}

pub fn format_rate(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

pub fn bucket_failures(per_image: &[ImageFinding], thresholds: Thresholds) -> FailureReport {
    let mut complete = Vec::new();
    let mut poor = Vec::new();
    let mut acceptable = 0;
    let mut multi = 0;
    let mut annotations = Vec::with_capacity(per_image.len());
    for f in per_image {
        let bucket = thresholds.bucket(f.dsc);
        match bucket {
            Bucket::CompleteFailure => complete.push(f.image_id.clone()),
            Bucket::Poor => poor.push(f.image_id.clone()),
            Bucket::Acceptable => acceptable += 1,
        }
        if f.components.component_count > 1 {
            multi += 1;
        }
        annotations.push(ImageAnnotation {
            image_id: f.image_id.clone(),
            dsc: f.dsc,
            bucket,
            component_count: f.components.component_count,
            component_sizes: f.components.component_sizes.clone(),
        });
    }
    let rate = if per_image.is_empty() {
        0.0
    } else {
        multi as f64 / per_image.len() as f64
    };
    FailureReport {
        thresholds,
        total_images: per_image.len(),
        complete_failures: complete,
        poor_cases: poor,
        acceptable_count: acceptable,
        multi_prediction_count: multi,
        multi_prediction_rate: rate,
        multi_prediction_rate_display: format_rate(rate),
        annotations,
    }
}
