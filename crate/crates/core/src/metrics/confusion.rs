use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::dataset::Mask;
use crate::scalar::Ratio;

/// Pixel-level confusion counts of a prediction against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub r#fn: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, r#fn: u64, tn: u64) -> Self {
        Self { tp, fp, r#fn, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.r#fn + self.tn
    }

    /// Ground-truth positives.
    pub fn positives(&self) -> u64 {
        self.tp + self.r#fn
    }

    /// Ground-truth negatives.
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// Counts after complementing both prediction and ground truth.
    pub fn complemented(&self) -> Self {
        Self::new(self.tn, self.r#fn, self.fp, self.tp)
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.r#fn + o.r#fn, self.tn + o.tn)
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts, MetricsError> {
    if pred.dims() != gt.dims() {
        return Err(MetricsError::ShapeMismatch(pred.dims(), gt.dims()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.r#fn += 1,
            (0, 0) => c.tn += 1,
            (p, g) => return Err(MetricsError::NonBinary(p.max(g))),
        }
    }
    Ok(c)
}

/// The five per-image overlap metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult<R> {
    pub dsc: R,
    pub iou: R,
    pub sensitivity: R,
    pub specificity: R,
    pub accuracy: R,
}

impl<R: Ratio> MetricResult<R> {
    pub fn to_f64(&self) -> MetricResult<f64> {
        MetricResult {
            dsc: self.dsc.to_f64(),
            iou: self.iou.to_f64(),
            sensitivity: self.sensitivity.to_f64(),
            specificity: self.specificity.to_f64(),
            accuracy: self.accuracy.to_f64(),
        }
    }

    pub fn as_array(&self) -> [R; 5] {
        [
            self.dsc.clone(),
            self.iou.clone(),
            self.sensitivity.clone(),
            self.specificity.clone(),
            self.accuracy.clone(),
        ]
    }
}

/// `num / den`, or 1 when the denominator is empty (vacuous agreement).
fn ratio<R: Ratio>(num: u64, den: u64) -> R {
    if den == 0 {
        R::one()
    } else {
        R::from_count(num) / R::from_count(den)
    }
}

pub fn compute_metrics<R: Ratio>(c: &ConfusionCounts) -> MetricResult<R> {
    MetricResult {
        dsc: ratio(2 * c.tp, 2 * c.tp + c.fp + c.r#fn),
        iou: ratio(c.tp, c.tp + c.fp + c.r#fn),
        sensitivity: ratio(c.tp, c.tp + c.r#fn),
        specificity: ratio(c.tn, c.tn + c.fp),
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

/// Unweighted per-image (macro) mean of each metric.
pub fn aggregate_mean<R: Ratio>(per_image: &[MetricResult<R>]) -> Result<MetricResult<R>, MetricsError> {
    if per_image.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = R::from_count(per_image.len() as u64);
    let mut sums = [R::zero(), R::zero(), R::zero(), R::zero(), R::zero()];
    for m in per_image {
        for (s, v) in sums.iter_mut().zip(m.as_array()) {
            *s = s.clone() + v;
        }
    }
    let [dsc, iou, sensitivity, specificity, accuracy] = sums.map(|s| s / n.clone());
    Ok(MetricResult {
        dsc,
        iou,
        sensitivity,
        specificity,
        accuracy,
    })
}
