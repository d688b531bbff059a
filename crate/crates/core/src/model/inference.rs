//! Fusion of decoder outputs into per-class logits and argmax prediction.

use crate::autodiff::softmax_rows_in_place;
use crate::dataset::Mask;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

use super::ModelError;

#[derive(Clone, Debug)]
pub struct DecoderLayerOutput<T> {
    /// `batch × num_classes`.
    pub class_logits: Matrix<T>,
    /// One `num_classes × (H·W)` matrix per batch element.
    pub mask_logits: Vec<Matrix<T>>,
}

/// Outputs of every decoder layer, shallowest first.
#[derive(Clone, Debug)]
pub struct DecoderOutput<T> {
    pub height: usize,
    pub width: usize,
    pub layers: Vec<DecoderLayerOutput<T>>,
}

impl<T: Scalar> DecoderOutput<T> {
    pub fn batch(&self) -> usize {
        self.layers.first().map_or(0, |l| l.mask_logits.len())
    }

    pub fn num_classes(&self) -> usize {
        self.layers.first().map_or(0, |l| l.class_logits.cols())
    }

    /// Per-sample view `(class logits C×1, mask logits C×HW)` of layer `l`.
    pub fn sample(&self, layer: usize, b: usize) -> (Matrix<T>, &Matrix<T>) {
        let l = &self.layers[layer];
        let c = l.class_logits.cols();
        (Matrix::from_vec(c, 1, l.class_logits.row(b).to_vec()), &l.mask_logits[b])
    }

    fn validate(&self) -> Result<(), ModelError> {
        let (b, c, hw) = (self.batch(), self.num_classes(), self.height * self.width);
        for (i, l) in self.layers.iter().enumerate() {
            if l.class_logits.shape() != (b, c)
                || l.mask_logits.len() != b
                || l.mask_logits.iter().any(|m| m.shape() != (c, hw))
            {
                return Err(ModelError::ShapeMismatch(format!("decoder layer {i} is ragged")));
            }
        }
        Ok(())
    }
}

/// Final per-class scores at full resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsMap<T> {
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    /// One `num_classes × (H·W)` matrix per batch element.
    pub values: Vec<Matrix<T>>,
}

impl<T: Scalar> LogitsMap<T> {
    pub fn batch(&self) -> usize {
        self.values.len()
    }

    /// `[batch, classes, height, width]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.batch(), self.num_classes, self.height, self.width]
    }

    pub fn get(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.values[b].get(c, y * self.width + x)
    }
}

/// Mask logits of one sample scaled row-wise by the softmax of its class logits.
pub fn assemble_sample_logits<T: Scalar>(class_logits: &Matrix<T>, mask_logits: &Matrix<T>) -> Matrix<T> {
    let mut probs = Matrix::from_vec(1, class_logits.len(), class_logits.data().to_vec());
    softmax_rows_in_place(&mut probs);
    let mut out = mask_logits.clone();
    for c in 0..out.rows() {
        let p = probs.get(0, c);
        out.row_mut(c).iter_mut().for_each(|v| *v *= p);
    }
    out
}

/// Fuses the last decoder layer into a [`LogitsMap`].
pub fn assemble_logits<T: Scalar>(output: &DecoderOutput<T>) -> Result<LogitsMap<T>, ModelError> {
    output.validate()?;
    let last = output
        .layers
        .last()
        .ok_or_else(|| ModelError::ShapeMismatch("decoder output has no layers".into()))?;
    let values = (0..output.batch())
        .map(|b| {
            let (cls, masks) = output.sample(output.layers.len() - 1, b);
            assemble_sample_logits(&cls, masks)
        })
        .collect();
    Ok(LogitsMap {
        num_classes: last.class_logits.cols(),
        height: output.height,
        width: output.width,
        values,
    })
}

/// Pixel is foreground only when its class-1 score strictly exceeds class 0.
pub fn argmax_mask<T: Scalar>(logits: &Matrix<T>, height: usize, width: usize) -> Result<Mask, ModelError> {
    if logits.rows() != 2 {
        return Err(ModelError::InvalidConfig(format!(
            "argmax prediction needs 2 classes, got {}",
            logits.rows()
        )));
    }
    if logits.cols() != height * width {
        return Err(ModelError::ShapeMismatch(format!(
            "{} logits for a {height}x{width} mask",
            logits.cols()
        )));
    }
    let data = logits
        .row(0)
        .iter()
        .zip(logits.row(1))
        .map(|(&bg, &fg)| u8::from(fg > bg))
        .collect();
    Ok(Mask::new(height, width, data).expect("binary by construction"))
}

/// Per-pixel argmax over classes. No filtering of any kind.
pub fn predict<T: Scalar>(logits: &LogitsMap<T>) -> Result<Vec<Mask>, ModelError> {
    logits
        .values
        .iter()
        .map(|m| argmax_mask(m, logits.height, logits.width))
        .collect()
}
