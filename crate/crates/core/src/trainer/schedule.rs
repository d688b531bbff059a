use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    /// Forward and backward in the master scalar type.
    #[default]
    Full,
    /// `f32` forward/backward with dynamic loss scaling; master weights stay
    /// in the run's scalar type.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub warmup_start_lr: f64,
    pub warmup_epochs: usize,
    pub final_lr: f64,
    pub weight_decay: f64,
    pub layer_decay: f64,
    pub grad_clip_norm: f64,
    pub global_batch_size: usize,
    pub val_every_epochs: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            base_lr: 3e-4,
            warmup_start_lr: 5e-5,
            warmup_epochs: 20,
            final_lr: 0.0,
            weight_decay: 0.05,
            layer_decay: 0.65,
            grad_clip_norm: 5.0,
            global_batch_size: 16,
            val_every_epochs: 5,
            seed: 0,
            precision: Precision::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.warmup_epochs >= self.epochs {
            return bad("warmup_epochs must be smaller than epochs");
        }
        let positive = [
            ("base_lr", self.base_lr),
            ("warmup_start_lr", self.warmup_start_lr),
            ("layer_decay", self.layer_decay),
            ("grad_clip_norm", self.grad_clip_norm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TrainError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.final_lr.is_finite() && self.final_lr >= 0.0) {
            return bad("final_lr must be non-negative");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.layer_decay > 1.0 {
            return bad("layer_decay must not exceed 1");
        }
        if self.global_batch_size == 0 || self.val_every_epochs == 0 {
            return bad("global_batch_size and val_every_epochs must be positive");
        }
        Ok(())
    }

    /// Number of validation events a full run produces.
    pub fn validation_epochs(&self) -> Vec<usize> {
        (1..=self.epochs)
            .filter(|&e| e % self.val_every_epochs == 0 || e == self.epochs)
            .collect()
    }
}

/// Learning rate at a fractional epoch: linear warmup, then cosine decay to
/// `final_lr` at `epochs`.
pub fn lr_at(epoch: f64, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_epochs as f64;
    if epoch < w {
        return cfg.warmup_start_lr + (cfg.base_lr - cfg.warmup_start_lr) * epoch / w;
    }
    let span = cfg.epochs as f64 - w;
    let t = ((epoch - w) / span).clamp(0.0, 1.0);
    cfg.final_lr + (cfg.base_lr - cfg.final_lr) * (1.0 + (PI * t).cos()) / 2.0
}

/// `decay^(depth + 1 - layer)`: the head (layer `depth + 1`) gets 1, the
/// patch embedding (layer 0) the smallest factor.
pub fn layer_lr_multiplier(layer: usize, depth: usize, decay: f64) -> f64 {
    let exp = (depth + 1).saturating_sub(layer);
    decay.powi(exp as i32)
}
