//! Manifest ingestion, preprocessing and cross-validation splits.

pub mod folds;
pub mod image;
pub mod io;
pub mod manifest;
pub mod sample;
pub mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

pub use folds::{make_folds, FoldAssignment, FoldFile};
pub use image::{
    crop_periphery, resize_bicubic, resize_mask_nearest, to_grayscale, CropSpec, Gray, Mask,
    Raster, Rgb,
};
pub use manifest::{load_manifest, parse_manifest, DatasetManifest, ImageRecord, SourceId};
pub use sample::{preprocess_arrays, preprocess_sample, SegSample};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {reason}")]
    MalformedEntry { line: usize, reason: String },
    #[error("manifest entry {entry}: unreadable file {path}")]
    UnreadableEntry { entry: usize, path: PathBuf },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("cannot write {path}: {reason}")]
    Encode { path: PathBuf, reason: String },
    #[error("crop {spec:?} does not leave 32x32 pixels of a {height}x{width} image")]
    CropOutOfBounds {
        spec: CropSpec,
        height: usize,
        width: usize,
    },
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(usize),
    #[error("degenerate size {0}x{1}")]
    DegenerateSize(usize, usize),
    #[error("mask value {0} is not binary")]
    NonBinaryMask(u8),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{k} folds need at least {k} {unit}, found {available}")]
    TooFewForFolds {
        k: usize,
        available: usize,
        unit: &'static str,
    },
    #[error("fold file lists {0}, which is not in the manifest")]
    UnknownRecord(PathBuf),
}
