//! Versioned binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (dtype, model config, parameter names and shapes, free-form
//! metadata), then every parameter's values in header order as little-endian
//! `f32` or `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::SegModel;
use super::params::{from_parameters, layout, Parameter};
use super::ModelError;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"EUSSEGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    config: ModelConfig,
    params: Vec<ParamEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn encode<T: Scalar>(model: &SegModel<T>, meta: &serde_json::Value) -> Vec<u8> {
    let params = model.params();
    let header = Header {
        dtype: T::DTYPE.to_string(),
        config: model.config().clone(),
        params: params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let width = std::mem::size_of::<T>();
    let mut out = Vec::with_capacity(20 + json.len() + params.num_scalars() * width);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params.iter() {
        for &v in p.value.data() {
            if width == 4 {
                out.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
            } else {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
    }
    out
}

/// Parses a checkpoint into a model of scalar type `T` (values are converted
/// when the stored dtype differs) and its metadata.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(SegModel<T>, serde_json::Value), ModelError> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes
        .get(20..20usize.saturating_add(hlen))
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let width = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        d => return Err(corrupt(format!("unknown dtype {d}"))),
    };
    header.config.validate()?;

    let (_, specs) = layout(&header.config);
    if specs.len() != header.params.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "checkpoint has {} parameters, config expects {}",
            header.params.len(),
            specs.len()
        )));
    }
    let mut data = &bytes[20 + hlen..];
    let mut params = Vec::with_capacity(specs.len());
    for (spec, entry) in specs.iter().zip(&header.params) {
        if spec.name != entry.name || (spec.rows, spec.cols) != (entry.rows, entry.cols) {
            return Err(ModelError::ShapeMismatch(format!(
                "checkpoint parameter {} {}x{}, expected {} {}x{}",
                entry.name, entry.rows, entry.cols, spec.name, spec.rows, spec.cols
            )));
        }
        let n = entry.rows * entry.cols;
        if data.len() < n * width {
            return Err(corrupt(format!("truncated data for {}", entry.name)));
        }
        let (chunk, rest) = data.split_at(n * width);
        data = rest;
        let values: Vec<T> = chunk
            .chunks_exact(width)
            .map(|b| {
                if width == 4 {
                    T::of(f32::from_le_bytes(b.try_into().unwrap()) as f64)
                } else {
                    T::of(f64::from_le_bytes(b.try_into().unwrap()))
                }
            })
            .collect();
        params.push(Parameter {
            name: entry.name.clone(),
            value: Matrix::from_vec(entry.rows, entry.cols, values),
            group: spec.group,
        });
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", data.len())));
    }
    let model = SegModel::from_parameters(header.config, from_parameters(params))?;
    Ok((model, header.meta))
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &SegModel<T>,
    meta: &serde_json::Value,
) -> Result<(), ModelError> {
    let bytes = encode(model, meta);
    // Write-then-rename so an interrupted save never clobbers a good file.
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, bytes).map_err(|source| ModelError::Io {
        path: tmp.clone(),
        source,
    })?;
    fs::rename(&tmp, path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(SegModel<T>, serde_json::Value), ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

/// Loads a checkpoint and insists its architecture equals `expected`.
pub fn load_checkpoint_for<T: Scalar>(
    path: &Path,
    expected: &ModelConfig,
) -> Result<(SegModel<T>, serde_json::Value), ModelError> {
    let (model, meta) = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(ModelError::ShapeMismatch(format!(
            "checkpoint config {:?} differs from requested {:?}",
            model.config(),
            expected
        )));
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = SegModel::<f64>::new(ModelConfig::toy(), 5).unwrap();
        let meta = serde_json::json!({"epoch": 3});
        let (back, meta2) = decode::<f64>(&encode(&m, &meta)).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(meta2, meta);
    }

    #[test]
    fn f32_round_trip_and_cross_dtype_load() {
        let m = SegModel::<f32>::new(ModelConfig::toy(), 5).unwrap();
        let bytes = encode(&m, &serde_json::Value::Null);
        let (back, _) = decode::<f32>(&bytes).unwrap();
        assert_eq!(back.params(), m.params());
        let (wide, _) = decode::<f64>(&bytes).unwrap();
        assert_eq!(wide.params().cast::<f32>(), *m.params());
    }

    #[test]
    fn shape_mismatch_fails_loudly() {
        let m = SegModel::<f64>::new(ModelConfig::toy(), 5).unwrap();
        let bytes = encode(&m, &serde_json::Value::Null);
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + hlen]).unwrap();
        header["params"][3]["cols"] = serde_json::json!(7);
        let json = serde_json::to_vec(&header).unwrap();
        let mut bad = bytes[..12].to_vec();
        bad.extend_from_slice(&(json.len() as u64).to_le_bytes());
        bad.extend_from_slice(&json);
        bad.extend_from_slice(&bytes[20 + hlen..]);
        assert!(matches!(decode::<f64>(&bad), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn truncation_and_magic_detected() {
        let m = SegModel::<f64>::new(ModelConfig::toy(), 5).unwrap();
        let bytes = encode(&m, &serde_json::Value::Null);
        assert!(decode::<f64>(&bytes[..bytes.len() - 8]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f64>(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode::<f64>(&long).is_err());
    }
}
