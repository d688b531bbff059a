use serde::{Deserialize, Serialize};

use super::ModelError;

/// Architecture hyperparameters of the backbone and the decoder head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    /// 0-based block indices whose outputs feed the decoder.
    pub tap_layers: Vec<usize>,
    pub decoder_embed_dim: usize,
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    pub num_classes: usize,
    /// Hidden width of every feed-forward block, as a multiple of its input.
    pub mlp_ratio: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 512,
            patch_size: 16,
            embed_dim: 768,
            depth: 12,
            num_heads: 12,
            tap_layers: vec![5, 7, 11],
            decoder_embed_dim: 384,
            decoder_layers: 3,
            decoder_heads: 12,
            num_classes: 2,
            mlp_ratio: 4,
        }
    }
}

impl ModelConfig {
    /// Desk-scale preset: 64×64 input, 8×8 patches, two 32-wide blocks.
    pub fn toy() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            embed_dim: 32,
            depth: 2,
            num_heads: 4,
            tap_layers: vec![0, 1],
            decoder_embed_dim: 32,
            decoder_layers: 2,
            decoder_heads: 4,
            num_classes: 2,
            mlp_ratio: 4,
        }
    }

    /// Token grid side length.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.num_heads == 0 || self.embed_dim == 0 || self.embed_dim % self.num_heads != 0 {
            return bad(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.decoder_heads == 0
            || self.decoder_embed_dim == 0
            || self.decoder_embed_dim % self.decoder_heads != 0
        {
            return bad(format!(
                "decoder_embed_dim {} not divisible by decoder_heads {}",
                self.decoder_embed_dim, self.decoder_heads
            ));
        }
        if self.depth == 0 {
            return bad("depth must be positive".into());
        }
        if !self.tap_layers.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!("tap_layers {:?} not strictly increasing", self.tap_layers));
        }
        if self.tap_layers.iter().any(|&t| t >= self.depth) {
            return bad(format!("tap_layers {:?} exceed depth {}", self.tap_layers, self.depth));
        }
        if self.tap_layers.len() != self.decoder_layers {
            return bad(format!(
                "{} tap layers for {} decoder layers",
                self.tap_layers.len(),
                self.decoder_layers
            ));
        }
        if self.num_classes == 0 || self.num_classes > 2 {
            return bad(format!("num_classes {} unsupported for binary masks", self.num_classes));
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be positive".into());
        }
        Ok(())
    }
}
