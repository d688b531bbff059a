//! Composite decoder loss: class presence BCE plus mask BCE and soft Dice on
//! every decoder layer, unit weights.

use std::sync::Arc;

use serde::Serialize;

use crate::autodiff::{Graph, Var};
use crate::dataset::Mask;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

use super::inference::DecoderOutput;
use super::ModelError;

pub const DICE_SMOOTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LayerLoss<T> {
    pub class_bce: T,
    pub mask_bce: T,
    pub mask_dice: T,
}

impl<T: Scalar> LayerLoss<T> {
    pub fn total(&self) -> T {
        self.class_bce + self.mask_bce + self.mask_dice
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossTerms<T> {
    pub total: T,
    pub layers: Vec<LayerLoss<T>>,
}

impl<T: Scalar> LossTerms<T> {
    pub(crate) fn read(g: &Graph<'_, T>, total: Var, terms: &[[Var; 3]]) -> Self {
        Self {
            total: g.scalar(total),
            layers: terms
                .iter()
                .map(|t| LayerLoss {
                    class_bce: g.scalar(t[0]),
                    mask_bce: g.scalar(t[1]),
                    mask_dice: g.scalar(t[2]),
                })
                .collect(),
        }
    }

    /// Element-wise mean, summed in slice order.
    pub fn mean(items: &[Self]) -> Self {
        let n = T::from_usize(items.len().max(1)).unwrap();
        let layers = items.first().map_or(0, |t| t.layers.len());
        let mut out = Self {
            total: T::zero(),
            layers: vec![
                LayerLoss {
                    class_bce: T::zero(),
                    mask_bce: T::zero(),
                    mask_dice: T::zero(),
                };
                layers
            ],
        };
        for t in items {
            out.total += t.total / n;
            for (o, l) in out.layers.iter_mut().zip(&t.layers) {
                o.class_bce += l.class_bce / n;
                o.mask_bce += l.mask_bce / n;
                o.mask_dice += l.mask_dice / n;
            }
        }
        out
    }
}

/// Per-class targets for one ground-truth mask.
#[derive(Clone, Debug)]
pub struct LossTargets<T> {
    /// `C × 1`: 1 when the class occupies at least one pixel.
    pub presence: Arc<Matrix<T>>,
    /// `C × HW`: background is the complement of the foreground when `C = 2`.
    pub masks: Arc<Matrix<T>>,
}

pub fn loss_targets<T: Scalar>(gt: &Mask, num_classes: usize) -> Result<LossTargets<T>, ModelError> {
    if let Some(&v) = gt.data.iter().find(|&&v| v > 1) {
        return Err(ModelError::NonBinaryTarget(v));
    }
    let fg: Vec<T> = gt.data.iter().map(|&v| T::from_u8(v).unwrap()).collect();
    let rows: Vec<Vec<T>> = match num_classes {
        1 => vec![fg],
        2 => vec![fg.iter().map(|&v| T::one() - v).collect(), fg],
        c => return Err(ModelError::InvalidConfig(format!("num_classes {c} unsupported"))),
    };
    let presence = rows
        .iter()
        .map(|r| if r.iter().any(|&v| v > T::zero()) { T::one() } else { T::zero() })
        .collect();
    let hw = gt.data.len();
    Ok(LossTargets {
        presence: Arc::new(Matrix::from_vec(num_classes, 1, presence)),
        masks: Arc::new(Matrix::from_vec(num_classes, hw, rows.concat())),
    })
}

/// Builds the loss on a graph from per-layer `(class logits C×1, mask logits
/// C×HW)`. Returns the total and `[class, bce, dice]` nodes per layer.
pub(crate) fn graph_atm_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    layers: &[(Var, Var)],
    targets: &LossTargets<T>,
) -> (Var, Vec<[Var; 3]>) {
    let mut terms = Vec::with_capacity(layers.len());
    let mut weighted = Vec::with_capacity(3 * layers.len());
    for &(cls, masks) in layers {
        let c = g.bce_with_logits(cls, targets.presence.clone());
        let b = g.bce_with_logits(masks, targets.masks.clone());
        let d = g.soft_dice(masks, targets.masks.clone(), T::of(DICE_SMOOTH));
        terms.push([c, b, d]);
        weighted.extend([(c, T::one()), (b, T::one()), (d, T::one())]);
    }
    (g.weighted_sum(&weighted), terms)
}

/// Loss of precomputed decoder outputs against a batch of masks, averaged
/// over the batch.
pub fn atm_loss<T: Scalar>(output: &DecoderOutput<T>, gt: &[Mask]) -> Result<LossTerms<T>, ModelError> {
    if gt.len() != output.batch() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} masks for a batch of {}",
            gt.len(),
            output.batch()
        )));
    }
    let mut per_sample = Vec::with_capacity(gt.len());
    for (b, mask) in gt.iter().enumerate() {
        if mask.dims() != (output.height, output.width) {
            return Err(ModelError::ShapeMismatch(format!(
                "mask {:?}, logits {}x{}",
                mask.dims(),
                output.height,
                output.width
            )));
        }
        let targets = loss_targets(mask, output.num_classes())?;
        let mut g = Graph::inference();
        let layers: Vec<(Var, Var)> = (0..output.layers.len())
            .map(|l| {
                let (cls, masks) = output.sample(l, b);
                let masks = masks.clone();
                (g.constant(cls), g.constant(masks))
            })
            .collect();
        let (total, terms) = graph_atm_loss(&mut g, &layers, &targets);
        per_sample.push(LossTerms::read(&g, total, &terms));
    }
    Ok(LossTerms::mean(&per_sample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::inference::DecoderLayerOutput;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn output(cls: Matrix<f64>, masks: Vec<Matrix<f64>>, layers: usize, h: usize) -> DecoderOutput<f64> {
        DecoderOutput {
            height: h,
            width: h,
            layers: (0..layers)
                .map(|_| DecoderLayerOutput {
                    class_logits: cls.clone(),
                    mask_logits: masks.clone(),
                })
                .collect(),
        }
    }

    fn half_mask(h: usize) -> Mask {
        Mask::from_fn(h, h, |y, _| y < h / 2)
    }

    #[test]
    fn saturated_correct_prediction_is_near_zero() {
        let gt = half_mask(8);
        let big = 60.0;
        let m = Matrix::from_fn(2, 64, |c, i| {
            let fg = gt.data[i] == 1;
            if (c == 1) == fg {
                big
            } else {
                -big
            }
        });
        let out = output(Matrix::filled(1, 2, big), vec![m], 3, 8);
        let l = atm_loss(&out, &[gt]).unwrap();
        assert!(l.total >= 0.0 && l.total < 0.1, "{}", l.total);
        assert_eq!(l.layers.len(), 3);
        for layer in &l.layers {
            assert!(layer.class_bce < 1e-12 && layer.mask_bce < 1e-12);
            // Dice smoothing leaves a tiny positive floor.
            assert!(layer.mask_dice < 0.03);
        }
    }

    #[test]
    fn loss_is_nonnegative_and_layers_sum_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let gt = Mask::from_fn(6, 6, |_, _| rng.random_bool(0.3));
            let masks = vec![Matrix::from_fn(2, 36, |_, _| rng.random_range(-5.0..5.0))];
            let cls = Matrix::from_fn(1, 2, |_, _| rng.random_range(-5.0..5.0));
            let l = atm_loss(&output(cls, masks, 2, 6), &[gt]).unwrap();
            assert!(l.total >= 0.0);
            let s: f64 = l.layers.iter().map(LayerLoss::total).sum();
            assert!((s - l.total).abs() < 1e-12);
        }
    }

    #[test]
    fn non_binary_target_rejected() {
        let gt = Mask {
            height: 2,
            width: 2,
            data: vec![0, 1, 2, 0],
        };
        let out = output(Matrix::zeros(1, 2), vec![Matrix::zeros(2, 4)], 1, 2);
        assert!(matches!(atm_loss(&out, &[gt]), Err(ModelError::NonBinaryTarget(2))));
    }

    #[test]
    fn targets_complement_background() {
        let t = loss_targets::<f64>(&half_mask(4), 2).unwrap();
        assert_eq!(t.presence.data(), &[1.0, 1.0]);
        for i in 0..16 {
            assert_eq!(t.masks.get(0, i) + t.masks.get(1, i), 1.0);
        }
        let empty = loss_targets::<f64>(&Mask::zeros(4, 4), 2).unwrap();
        assert_eq!(empty.presence.data(), &[1.0, 0.0]);
    }
}
