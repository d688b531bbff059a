use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use eusseg_core::analysis::{bucket_failures, connected_components, render_overlay, Bucket, FailureReport, ImageFinding};
use eusseg_core::dataset::io::{read_mask, read_raster, write_gray16, write_mask, write_rgb8};
use eusseg_core::dataset::{
    load_manifest, make_folds, preprocess_sample, to_grayscale, DatasetManifest, FoldAssignment, FoldFile,
    ImageRecord,
};
use eusseg_core::metrics::evaluate::{read_rows_csv, write_rows_csv};
use eusseg_core::metrics::{evaluate_dataset, image_id, ImageOutcome};
use eusseg_core::model::checkpoint::load_checkpoint;
use eusseg_core::trainer::{run_cross_validation, CvOptions};
use serde::Serialize;

use crate::config::{RunConfig, RESOLVED_CONFIG};

pub const SUMMARY: &str = "summary.json";
pub const FOLDS: &str = "folds.json";
pub const PER_IMAGE: &str = "per_image.csv";
pub const AGGREGATE: &str = "aggregate.json";
pub const PREDICTIONS: &str = "predictions";
pub const FAILURE_REPORT: &str = "failure_report.json";
pub const OVERLAYS: &str = "overlays";

/// Failure of the computation itself (divergence, non-finite values, failed
/// folds) as opposed to bad input. Maps to exit code 2.
#[derive(Debug)]
pub struct RuntimeFailure(pub String);

impl std::fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuntimeFailure {}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg.manifest()?;
    load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))
}

#[derive(Serialize)]
struct PreprocessSummary {
    n_records: usize,
    n_written: usize,
    image_size: usize,
    cases: usize,
    per_source: BTreeMap<String, usize>,
    foreground_fraction: f64,
}

/// Resamples every record to the model input size and writes a 16-bit image
/// cache, binary masks and a manifest pointing at them.
pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let m = manifest(cfg)?;
    let out = cfg.out_dir()?;
    mkdir(&out.join("images"))?;
    mkdir(&out.join("masks"))?;
    cfg.persist(out)?;
    let size = cfg.model.image_size;
    let mut records = Vec::with_capacity(m.len());
    let mut per_source = BTreeMap::new();
    let mut fg = 0usize;
    for (i, r) in m.records.iter().enumerate() {
        let s = preprocess_sample::<f64>(r, (size, size))
            .with_context(|| format!("record {i} ({})", r.image_path.display()))?;
        let name = format!("{}.png", image_id(i, &r.image_path));
        let image_path = out.join("images").join(&name);
        let mask_path = out.join("masks").join(&name);
        write_gray16(&image_path, &s.image)?;
        write_mask(&mask_path, &s.mask)?;
        fg += s.mask.foreground();
        *per_source.entry(r.source_id.to_string()).or_insert(0) += 1;
        records.push(ImageRecord {
            image_path,
            mask_path,
            case_id: r.case_id.clone(),
            source_id: r.source_id.clone(),
            crop: None,
        });
    }
    let cached = DatasetManifest {
        root: out.to_path_buf(),
        records,
    };
    let manifest_path = out.join("manifest.jsonl");
    fs::write(&manifest_path, cached.to_jsonl(out)).with_context(|| format!("writing {}", manifest_path.display()))?;
    let summary = PreprocessSummary {
        n_records: m.len(),
        n_written: cached.len(),
        image_size: size,
        cases: m.case_ids().len(),
        per_source,
        foreground_fraction: fg as f64 / (cached.len().max(1) * size * size) as f64,
    };
    write_json(&out.join(SUMMARY), &summary)?;
    println!("preprocessed {} records into {}", cached.len(), out.display());
    Ok(())
}

fn folds_for(cfg: &RunConfig, m: &DatasetManifest) -> Result<Vec<FoldAssignment>> {
    match &cfg.paths.folds {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: FoldFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            Ok(file.resolve(m)?)
        }
        None => Ok(make_folds(m, cfg.data.k, cfg.data.seed, cfg.data.group_by_case)?),
    }
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let m = manifest(cfg)?;
    let out = cfg.out_dir()?;
    cfg.persist(out)?;
    let folds = make_folds(&m, cfg.data.k, cfg.data.seed, cfg.data.group_by_case)?;
    write_json(
        &out.join(FOLDS),
        &FoldFile::from_folds(&folds, cfg.data.seed, cfg.data.group_by_case),
    )?;
    for f in &folds {
        println!(
            "fold {}: {} train / {} val",
            f.fold_index,
            f.train_records.len(),
            f.val_records.len()
        );
    }
    Ok(())
}

/// Cross-validated training. Completed folds in an existing run directory
/// are kept; the directory must have been created with the same config.
pub fn train(cfg: &RunConfig, only_fold: Option<usize>) -> Result<()> {
    let m = manifest(cfg)?;
    let out = cfg.out_dir()?;
    let previous = out.join(RESOLVED_CONFIG);
    if previous.exists() {
        let text = fs::read_to_string(&previous)?;
        let old: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", previous.display()))?;
        if old.model != cfg.model || old.train != cfg.train || old.data != cfg.data {
            bail!(
                "{} holds a run with a different configuration; choose a fresh --out",
                out.display()
            );
        }
    }
    cfg.persist(out)?;
    let mut folds = folds_for(cfg, &m)?;
    write_json(
        &out.join(FOLDS),
        &FoldFile::from_folds(&folds, cfg.data.seed, cfg.data.group_by_case),
    )?;
    if let Some(i) = only_fold {
        folds.retain(|f| f.fold_index == i);
        if folds.is_empty() {
            bail!("--fold {i} out of range for k = {}", cfg.data.k);
        }
    }
    let opts = CvOptions {
        run_dir: Some(out.to_path_buf()),
        resume: true,
        eval: cfg.evaluation.clone(),
    };
    let result = run_cross_validation::<f64>(&folds, &cfg.model, &cfg.train, &opts)?;
    for f in &result.folds {
        match (&f.meta, &f.error) {
            (_, Some(e)) => eprintln!("fold {}: FAILED: {e}", f.fold_index),
            (Some(meta), None) => println!(
                "fold {}: best epoch {} validation DSC {:.4}{}",
                f.fold_index,
                meta.epoch,
                meta.validation_dice,
                if f.resumed { " (resumed)" } else { "" }
            ),
            (None, None) => {}
        }
    }
    if let Some(mean) = &result.mean_of_fold_means {
        println!("mean of fold means: DSC {:.4} IoU {:.4}", mean.dsc, mean.iou);
    }
    if result.n_failed > 0 {
        return Err(RuntimeFailure(format!("{} of {} folds failed", result.n_failed, result.k)).into());
    }
    Ok(())
}

fn write_prediction_files(dir: &Path, o: &ImageOutcome<'_, f64>) -> Result<(), String> {
    let base = dir.join(&o.image_id);
    let with = |suffix: &str| PathBuf::from(format!("{}_{suffix}.png", base.display()));
    write_mask(&with("pred"), o.prediction).map_err(|e| e.to_string())?;
    write_mask(&with("gt"), &o.sample.mask).map_err(|e| e.to_string())?;
    write_gray16(&with("input"), &o.sample.image).map_err(|e| e.to_string())
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Path, model_explicit: bool) -> Result<()> {
    let (model, _) = load_checkpoint::<f64>(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    if model_explicit && *model.config() != cfg.model {
        bail!(
            "checkpoint {} was trained with a different model config",
            checkpoint.display()
        );
    }
    let m = manifest(cfg)?;
    let out = cfg.out_dir()?;
    let preds = out.join(PREDICTIONS);
    mkdir(&preds)?;
    let mut resolved = cfg.clone();
    resolved.model = model.config().clone();
    resolved.persist(out)?;

    let sink = |o: &ImageOutcome<'_, f64>| write_prediction_files(&preds, o);
    let report = evaluate_dataset(&model, &m.records, &cfg.evaluation, Some(&sink))?;
    let csv_path = out.join(PER_IMAGE);
    let file = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_rows_csv(&report.rows, file)?;
    write_json(&out.join(AGGREGATE), &report.aggregate)?;

    let a = &report.aggregate;
    for f in &a.failed {
        eprintln!("failed: {}: {}", f.image_path, f.reason);
    }
    if let Some(mean) = &a.mean {
        println!(
            "{} images: DSC {:.4} IoU {:.4} sensitivity {:.4} specificity {:.4} accuracy {:.4}",
            a.n_evaluated, mean.dsc, mean.iou, mean.sensitivity, mean.specificity, mean.accuracy
        );
    }
    if a.n_evaluated == 0 {
        bail!("no image could be evaluated");
    }
    Ok(())
}

fn read_gray(path: &Path) -> Result<eusseg_core::dataset::Gray<f64>> {
    Ok(to_grayscale(&read_raster::<f64>(path)?))
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let Some(results) = &cfg.paths.results else {
        bail!("no evaluation results: pass --results or set paths.results");
    };
    let out = cfg.out_dir()?;
    let csv_path = results.join(PER_IMAGE);
    let file = fs::File::open(&csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let rows = read_rows_csv(file).with_context(|| format!("parsing {}", csv_path.display()))?;
    let preds = results.join(PREDICTIONS);
    let file_for = |id: &str, suffix: &str| preds.join(format!("{id}_{suffix}.png"));

    let mut findings = Vec::with_capacity(rows.len());
    for row in &rows {
        let path = file_for(&row.image_id, "pred");
        if !path.exists() {
            bail!("missing prediction file {}", path.display());
        }
        let pred = read_mask(&path)?;
        findings.push(ImageFinding {
            image_id: row.image_id.clone(),
            dsc: row.dsc,
            components: connected_components(&pred, cfg.analysis.connectivity)?,
        });
    }
    let report: FailureReport = bucket_failures(&findings, cfg.analysis.thresholds);
    mkdir(&out.join(OVERLAYS))?;
    cfg.persist(out)?;
    let mut overlays = 0;
    for a in report.annotations.iter().filter(|a| a.bucket != Bucket::Acceptable) {
        let image = read_gray(&file_for(&a.image_id, "input"))?;
        let gt = read_mask(&file_for(&a.image_id, "gt"))?;
        let pred = read_mask(&file_for(&a.image_id, "pred"))?;
        let o = render_overlay(&image, &gt, &pred, a.dsc)?;
        let path = out.join(OVERLAYS).join(format!("{}_overlay.png", a.image_id));
        write_rgb8(&path, o.raster.width, o.raster.height, o.raster.data)?;
        overlays += 1;
    }
    write_json(&out.join(FAILURE_REPORT), &report)?;
    println!(
        "{} images: {} complete failures, {} poor, multiple predictions in {} ({}); {overlays} overlays",
        report.total_images,
        report.complete_failures.len(),
        report.poor_cases.len(),
        report.multi_prediction_count,
        report.multi_prediction_rate_display
    );
    Ok(())
}
