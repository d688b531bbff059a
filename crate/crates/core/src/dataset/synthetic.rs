//! Seeded synthetic lesions for tests, demos and smoke runs: a dark
//! elliptical blob on speckled bright tissue.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{Gray, Mask};
use super::io::{write_gray8, write_mask};
use super::manifest::{DatasetManifest, ImageRecord, SourceId};
use super::sample::SegSample;
use super::DatasetError;
use crate::scalar::Scalar;

fn ellipse(rng: &mut ChaCha8Rng, size: usize) -> impl Fn(usize, usize) -> bool {
    let s = size as f64;
    let (cy, cx) = (rng.random_range(0.3 * s..0.7 * s), rng.random_range(0.3 * s..0.7 * s));
    let (ry, rx) = (rng.random_range(0.12 * s..0.22 * s), rng.random_range(0.12 * s..0.22 * s));
    move |y, x| {
        let dy = (y as f64 + 0.5 - cy) / ry;
        let dx = (x as f64 + 0.5 - cx) / rx;
        dy * dy + dx * dx <= 1.0
    }
}

/// Image and mask of one synthetic lesion.
pub fn lesion<T: Scalar>(seed: u64, size: usize) -> (Gray<T>, Mask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inside = ellipse(&mut rng, size);
    let mask = Mask::from_fn(size, size, &inside);
    let image = Gray::from_fn(size, size, |y, x| {
        let base: f64 = if inside(y, x) { 0.25 } else { 0.6 };
        T::of((base + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0))
    });
    (image, mask)
}

pub fn lesion_sample<T: Scalar>(seed: u64, size: usize) -> SegSample<T> {
    let (image, mask) = lesion(seed, size);
    SegSample::new(image, mask, None).expect("consistent shapes")
}

/// Writes `frames_per_case[i]` PNG frames for case `i` under `dir` and returns
/// the matching manifest (also written as `dir/manifest.jsonl`).
pub fn write_dataset(dir: &Path, frames_per_case: &[usize], size: usize, seed: u64) -> Result<DatasetManifest, DatasetError> {
    let io = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir.join("images")).map_err(io)?;
    fs::create_dir_all(dir.join("masks")).map_err(io)?;
    let mut records = Vec::new();
    for (case, &frames) in frames_per_case.iter().enumerate() {
        for f in 0..frames {
            let name = format!("case{case:02}_f{f:02}.png");
            // `case` sits above any realistic frame count, so seeds stay distinct.
            let (image, mask) = lesion::<f64>(seed ^ ((case as u64) << 16 | f as u64), size);
            let image_path = dir.join("images").join(&name);
            let mask_path = dir.join("masks").join(&name);
            write_gray8(&image_path, &image)?;
            write_mask(&mask_path, &mask)?;
            records.push(ImageRecord {
                image_path,
                mask_path,
                case_id: format!("case{case:02}"),
                source_id: SourceId::PancreaticVideo,
                crop: None,
            });
        }
    }
    let manifest = DatasetManifest {
        root: dir.to_path_buf(),
        records,
    };
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest.to_jsonl(dir)).map_err(|source| DatasetError::Io { path, source })?;
    Ok(manifest)
}
