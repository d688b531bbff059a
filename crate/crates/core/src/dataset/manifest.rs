//! JSON-lines manifest of image/mask pairs.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::image::CropSpec;
use super::DatasetError;

/// Where a record came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SourceId {
    PancreaticVideo,
    Gist514,
    Lep,
    Other(String),
}

impl SourceId {
    pub fn as_str(&self) -> &str {
        match self {
            SourceId::PancreaticVideo => "pancreatic_video",
            SourceId::Gist514 => "gist514",
            SourceId::Lep => "lep",
            SourceId::Other(s) => s,
        }
    }
}

impl From<&str> for SourceId {
    fn from(s: &str) -> Self {
        match s {
            "pancreatic_video" => SourceId::PancreaticVideo,
            "gist514" => SourceId::Gist514,
            "lep" => SourceId::Lep,
            other => SourceId::Other(other.to_owned()),
        }
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for SourceId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SourceId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(SourceId::from(s.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRecord {
    /// Absolute (resolved) image path.
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub case_id: String,
    pub source_id: SourceId,
    pub crop: Option<CropSpec>,
}

impl ImageRecord {
    pub fn crop_spec(&self) -> CropSpec {
        self.crop.unwrap_or_default()
    }
}

/// One manifest line as written on disk.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    image_path: PathBuf,
    mask_path: PathBuf,
    case_id: String,
    source_id: SourceId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crop: Option<[usize; 4]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory that relative paths were resolved against.
    pub root: PathBuf,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct case ids in first-seen order.
    pub fn case_ids(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.case_id.as_str()))
            .map(|r| r.case_id.as_str())
            .collect()
    }

    /// Serializes records with paths relative to `dir` where possible.
    pub fn to_jsonl(&self, dir: &Path) -> String {
        let mut out = String::new();
        for r in &self.records {
            let rel = |p: &Path| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
            let line = ManifestLine {
                image_path: rel(&r.image_path),
                mask_path: rel(&r.mask_path),
                case_id: r.case_id.clone(),
                source_id: r.source_id.clone(),
                crop: r.crop.map(|c| [c.left, c.top, c.right, c.bottom]),
            };
            out.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses manifest text; relative paths resolve against `root`. Does not touch
/// the filesystem.
pub fn parse_manifest(text: &str, root: &Path) -> Result<DatasetManifest, DatasetError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let entry = i + 1;
        let parsed: ManifestLine =
            serde_json::from_str(trimmed).map_err(|e| DatasetError::MalformedEntry {
                line: entry,
                reason: e.to_string(),
            })?;
        if parsed.case_id.trim().is_empty() {
            return Err(DatasetError::MalformedEntry {
                line: entry,
                reason: "empty case_id".into(),
            });
        }
        let crop = parsed
            .crop
            .map(|[left, top, right, bottom]| CropSpec::new(left, top, right, bottom));
        records.push(ImageRecord {
            image_path: root.join(parsed.image_path),
            mask_path: root.join(parsed.mask_path),
            case_id: parsed.case_id,
            source_id: parsed.source_id,
            crop,
        });
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        records,
    })
}

/// Reads and validates a manifest: every image and mask must be readable.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let manifest = parse_manifest(&text, &root)?;
    for (i, r) in manifest.records.iter().enumerate() {
        for p in [&r.image_path, &r.mask_path] {
            let readable = File::open(p).and_then(|f| f.metadata()).map(|m| m.is_file());
            if !matches!(readable, Ok(true)) {
                return Err(DatasetError::UnreadableEntry {
                    entry: i,
                    path: p.clone(),
                });
            }
        }
    }
    Ok(manifest)
}
