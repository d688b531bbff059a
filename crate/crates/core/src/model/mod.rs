//! Vision transformer backbone, attention-to-mask decoder, composite loss and
//! argmax inference.

pub mod checkpoint;
pub mod config;
pub mod geometry;
pub mod gradcheck;
pub mod inference;
pub mod loss;
pub mod network;
pub mod params;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
pub use config::ModelConfig;
pub use geometry::{relative_position_bias, relative_position_index};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use inference::{assemble_logits, predict, DecoderLayerOutput, DecoderOutput, LogitsMap};
pub use loss::{atm_loss, LayerLoss, LossTerms};
pub use network::{query_pixel_similarity, Gradients, SampleDecoderOutput, SegModel};
pub use params::{Parameter, ParameterSet};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("ground-truth mask value {0} is not binary")]
    NonBinaryTarget(u8),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
