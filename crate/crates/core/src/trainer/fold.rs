//! One fold of training with periodic validation and best-Dice checkpointing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Gray, SegSample};
use crate::metrics::{score, MetricResult};
use crate::model::checkpoint::save_checkpoint;
use crate::model::{ModelConfig, ModelError, SegModel};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

use super::optim::{clip_gradients, param_hypers, AdamW, LossScaler};
use super::schedule::{lr_at, Precision, TrainConfig};
use super::TrainError;

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LOSS_LOG: &str = "loss_log.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub fold_index: usize,
    /// 1-based epoch after which the checkpoint was taken.
    pub epoch: usize,
    pub validation_dice: f64,
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationEvent {
    pub epoch: usize,
    pub validation_dice: f64,
}

/// One line of the loss log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub fold: usize,
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// Set when a reduced-precision step overflowed and was not applied.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

#[derive(Clone, Debug)]
pub struct FoldRun<T: Scalar> {
    pub meta: CheckpointMeta,
    pub events: Vec<ValidationEvent>,
    /// Weights at the selected checkpoint.
    pub best: SegModel<T>,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct FoldOptions {
    pub fold_index: usize,
    /// Receives `best.ckpt` and `loss_log.jsonl` when set.
    pub out_dir: Option<PathBuf>,
}

/// Seed for fold `fold` of a run seeded with `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4553;

/// Per-image metrics of `model` on `samples`, in order.
pub fn validation_scores<T: Scalar>(
    model: &SegModel<T>,
    samples: &[SegSample<T>],
) -> Result<Vec<MetricResult<f64>>, TrainError> {
    samples
        .par_iter()
        .map(|s| {
            let pred = model.segment_image(&s.image)?;
            Ok(score(&pred, &s.mask)?.1)
        })
        .collect()
}

/// Mean per-image DSC, summed in sample order.
pub fn validation_dice<T: Scalar>(model: &SegModel<T>, samples: &[SegSample<T>]) -> Result<f64, TrainError> {
    let scores = validation_scores(model, samples)?;
    Ok(scores.iter().map(|m| m.dsc).sum::<f64>() / scores.len() as f64)
}

fn cast_sample<T: Scalar>(s: &SegSample<T>) -> SegSample<f32> {
    SegSample {
        image: Gray::new(
            s.image.height,
            s.image.width,
            s.image.data.iter().map(|v| v.to_f32().unwrap()).collect(),
        ),
        mask: s.mask.clone(),
        record: s.record.clone(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct StepOutcome<T> {
    loss: f64,
    grads: Option<Vec<Matrix<T>>>,
}

/// Trains one fold from a fresh seed-derived initialization.
pub fn train_fold<T: Scalar>(
    train: &[SegSample<T>],
    val: &[SegSample<T>],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    opts: &FoldOptions,
) -> Result<FoldRun<T>, TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::InvalidConfig(format!(
            "fold {} has {} training and {} validation samples",
            opts.fold_index,
            train.len(),
            val.len()
        )));
    }
    let fold = opts.fold_index;
    let seed = fold_seed(cfg.seed, fold);
    let mut model = SegModel::<T>::new(model_cfg.clone(), seed)?;
    let hypers = param_hypers(model.params(), model_cfg.depth, cfg.layer_decay, cfg.weight_decay);
    let mut opt = AdamW::for_params(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_STREAM);
    let mut scaler = LossScaler::default();
    let train32: Vec<SegSample<f32>> = match cfg.precision {
        Precision::Mixed => train.iter().map(cast_sample).collect(),
        Precision::Full => Vec::new(),
    };

    let mut log = match &opts.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(LOSS_LOG);
            Some((BufWriter::new(File::create(&path).map_err(io_err(&path))?), path))
        }
        None => None,
    };

    let batch = cfg.global_batch_size.min(train.len());
    let steps_per_epoch = train.len().div_ceil(batch);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut steps = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut events = Vec::new();
    let mut best: Option<(CheckpointMeta, SegModel<T>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (s, idx) in order.chunks(batch).enumerate() {
            let global_step = epoch * steps_per_epoch + s;
            let lr = lr_at(epoch as f64 + s as f64 / steps_per_epoch as f64, cfg);
            let diverged = |reason: String, best: &Option<(CheckpointMeta, SegModel<T>)>| {
                TrainError::Divergence {
                    fold,
                    epoch: epoch + 1,
                    step: global_step,
                    reason,
                    last_good: best.as_ref().map(|b| Box::new(b.0.clone())),
                }
            };

            let outcome = match cfg.precision {
                Precision::Full => {
                    let refs: Vec<&SegSample<T>> = idx.iter().map(|&i| &train[i]).collect();
                    model.batch_loss_and_grads(&refs).map(|(l, g)| StepOutcome {
                        loss: l.total.as_f64(),
                        grads: Some(g),
                    })
                }
                Precision::Mixed => {
                    let refs: Vec<&SegSample<f32>> = idx.iter().map(|&i| &train32[i]).collect();
                    let m32 = model.cast::<f32>();
                    m32.batch_loss_and_grads_scaled(&refs, scaler.scale as f32)
                        .map(|(l, g)| {
                            let inv = T::of(1.0 / scaler.scale);
                            let grads: Vec<Matrix<T>> = g
                                .iter()
                                .map(|m| {
                                    let mut m = m.cast::<T>();
                                    m.scale_in_place(inv);
                                    m
                                })
                                .collect();
                            let ok = scaler.update(grads.iter().all(Matrix::all_finite));
                            StepOutcome {
                                loss: l.total.as_f64(),
                                grads: ok.then_some(grads),
                            }
                        })
                }
            };
            let outcome = match outcome {
                Ok(o) => o,
                Err(ModelError::NonFinite(stage)) => return Err(diverged(format!("non-finite {stage}"), &best)),
                Err(e) => return Err(e.into()),
            };
            if !outcome.loss.is_finite() {
                return Err(diverged("non-finite loss".into(), &best));
            }
            let skipped = outcome.grads.is_none();
            if let Some(mut grads) = outcome.grads {
                if clip_gradients(&mut grads, cfg.grad_clip_norm).is_err() {
                    return Err(diverged("non-finite gradient".into(), &best));
                }
                if opt.step(model.params_mut(), &grads, lr, &hypers).is_err() {
                    return Err(diverged("non-finite parameter update".into(), &best));
                }
            }
            let rec = StepRecord {
                fold,
                epoch: epoch + 1,
                step: global_step,
                loss: outcome.loss,
                lr,
                skipped,
            };
            if let Some((w, path)) = &mut log {
                let line = serde_json::to_string(&rec).expect("record serializes");
                writeln!(w, "{line}").map_err(io_err(path))?;
            }
            steps.push(rec);
        }
        if let Some((w, path)) = &mut log {
            w.flush().map_err(io_err(path))?;
        }

        let e = epoch + 1;
        if e % cfg.val_every_epochs == 0 || e == cfg.epochs {
            let dice = validation_dice(&model, val)?;
            events.push(ValidationEvent {
                epoch: e,
                validation_dice: dice,
            });
            // Strict improvement keeps the earlier epoch on ties.
            if best.as_ref().is_none_or(|(m, _)| dice > m.validation_dice) {
                let checkpoint_path = opts.out_dir.as_ref().map(|d| d.join(BEST_CHECKPOINT));
                let meta = CheckpointMeta {
                    fold_index: fold,
                    epoch: e,
                    validation_dice: dice,
                    checkpoint_path: checkpoint_path.clone(),
                };
                if let Some(path) = &checkpoint_path {
                    let info = serde_json::to_value(&meta).expect("meta serializes");
                    save_checkpoint(path, &model, &info)?;
                }
                best = Some((meta, model.clone()));
            }
        }
    }

    let (meta, best) = best.expect("the final epoch always validates");
    Ok(FoldRun {
        meta,
        events,
        best,
        steps,
    })
}
