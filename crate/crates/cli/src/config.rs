//! Declarative run configuration.
//!
//! Resolution order, lowest first: built-in defaults, the `--toy` model
//! preset, the config file (TOML or JSON), then individual command-line
//! flags. Config files may set any subset of keys; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use eusseg_core::analysis::{Connectivity, Thresholds};
use eusseg_core::metrics::EvaluationOptions;
use eusseg_core::model::ModelConfig;
use eusseg_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Saved fold file; folds are derived from the manifest when absent.
    pub folds: Option<PathBuf>,
    /// Output directory of an earlier `evaluate` run, read by `analyze`.
    pub results: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataOptions {
    pub k: usize,
    /// Keep all frames of one case in the same fold.
    pub group_by_case: bool,
    pub seed: u64,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            k: 5,
            group_by_case: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub thresholds: Thresholds,
    pub connectivity: Connectivity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataOptions,
    pub evaluation: EvaluationOptions,
    pub analysis: AnalysisOptions,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub toy: bool,
    pub seed: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub folds: Option<PathBuf>,
    pub results: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    /// True when the model section came from `--toy` or the config file.
    pub model_explicit: bool,
}

fn merge(base: &mut Value, over: Value, path: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => bail!("unknown config key `{key}`"),
                }
            }
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        let v: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(serde_json::to_value(v)?)
    }
}

pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Resolved> {
    let mut base = RunConfig::default();
    if flags.toy {
        base.model = ModelConfig::toy();
    }
    let mut value = serde_json::to_value(&base)?;
    let mut model_explicit = flags.toy;
    if let Some(path) = file {
        let over = read_file(path)?;
        model_explicit |= over.get("model").is_some();
        merge(&mut value, over, "").with_context(|| format!("in {}", path.display()))?;
    }
    let mut config: RunConfig = serde_json::from_value(value).context("invalid config value")?;

    if let Some(seed) = flags.seed {
        config.train.seed = seed;
        config.data.seed = seed;
        config.evaluation.seed = seed;
    }
    let paths = &mut config.paths;
    for (slot, flag) in [
        (&mut paths.manifest, &flags.manifest),
        (&mut paths.out_dir, &flags.out),
        (&mut paths.folds, &flags.folds),
        (&mut paths.results, &flags.results),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    config.model.validate()?;
    config.train.validate()?;
    if config.data.k < 2 {
        bail!("data.k must be at least 2");
    }
    Ok(Resolved {
        config,
        model_explicit,
    })
}

impl RunConfig {
    pub fn out_dir(&self) -> Result<&Path> {
        match &self.paths.out_dir {
            Some(p) => Ok(p),
            None => bail!("no output directory: pass --out or set paths.out_dir"),
        }
    }

    pub fn manifest(&self) -> Result<&Path> {
        match &self.paths.manifest {
            Some(p) => Ok(p),
            None => bail!("no manifest: pass --manifest or set paths.manifest"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Persists the resolved config as `<dir>/config.json`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn defaults_without_file() {
        let r = resolve(None, &Overrides::default()).unwrap();
        assert_eq!(r.config, RunConfig::default());
        assert!(!r.model_explicit);
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(
            dir.path(),
            "run.toml",
            "[train]\nseed = 4\nepochs = 10\nwarmup_epochs = 2\n[paths]\nout_dir = \"from_file\"\n",
        );
        let flags = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let c = resolve(Some(&f), &flags).unwrap().config;
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.epochs, 10);
        assert_eq!(c.train.base_lr, 3e-4);
        assert_eq!(c.paths.out_dir, Some(PathBuf::from("from_file")));
    }

    #[test]
    fn toy_preset_then_file_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "run.json", r#"{"model": {"depth": 3, "tap_layers": [1, 2]}}"#);
        let flags = Overrides {
            toy: true,
            ..Overrides::default()
        };
        let r = resolve(Some(&f), &flags).unwrap();
        assert_eq!(r.config.model.depth, 3);
        assert_eq!(r.config.model.embed_dim, 32);
        assert!(r.model_explicit);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "a.toml", "[train]\nepoch = 3\n");
        let err = resolve(Some(&f), &Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("train.epoch"));
        let f = write(dir.path(), "b.toml", "[model]\nimage_size = 100\n");
        assert!(resolve(Some(&f), &Overrides::default()).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = resolve(None, &Overrides {
            toy: true,
            ..Overrides::default()
        })
        .unwrap()
        .config;
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
