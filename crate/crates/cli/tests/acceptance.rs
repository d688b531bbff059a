//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use eusseg_core::analysis::{bucket_failures, label_components, ComponentStats, Connectivity, ImageFinding, Thresholds};
use eusseg_core::dataset::synthetic::{lesion_sample, write_dataset};
use eusseg_core::dataset::{make_folds, DatasetManifest, ImageRecord, Mask, SourceId};
use eusseg_core::metrics::{bootstrap_ci, compute_metrics, confusion, ConfusionCounts, MetricResult};
use eusseg_core::model::inference::argmax_mask;
use eusseg_core::model::{assemble_logits, check_gradients, predict, ModelConfig, SegModel};
use eusseg_core::tensor::Matrix;
use eusseg_core::trainer::{
    clip_gradients, global_norm, layer_lr_multiplier, lr_at, train_fold, validation_dice, FoldOptions, TrainConfig,
};
use eusseg_core::ExactRatio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, t: Instant) -> Result<(), String> {
    let e = t.elapsed();
    ensure(e < limit, format!("took {e:.1?}, limit {limit:?}"))
}

fn c01_non_reproducibility() -> Outcome {
    let readme = include_str!("../../../README.md");
    for needle in ["not reproducible", "## Full-scale runbook", "0.657"] {
        ensure(readme.contains(needle), format!("README lacks {needle:?}"))?;
    }
    Ok("headline numbers need external data and multi-GPU training; runbook in README".into())
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> Mask {
    Mask::from_fn(h, w, |_, _| rng.random_bool(p))
}

fn c02_metric_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let p = [0.0, 0.05, 0.5, 0.95, 1.0][i % 5];
        let q = rng.random();
        let (pred, gt) = (random_mask(&mut rng, 16, 16, p), random_mask(&mut rng, 16, 16, q));
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for y in 0..16 {
            for x in 0..16 {
                match (pred.get(y, x) == 1, gt.get(y, x) == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
        let c = confusion(&pred, &gt).map_err(|e| e.to_string())?;
        ensure(c == ConfusionCounts::new(tp, fp, fn_, tn), format!("pair {i}: counts {c:?}"))?;
        let div = |n: u64, d: u64| if d == 0 { 1.0 } else { n as f64 / d as f64 };
        let expect = [
            div(2 * tp, 2 * tp + fp + fn_),
            div(tp, tp + fp + fn_),
            div(tp, tp + fn_),
            div(tn, tn + fp),
            div(tp + tn, 256),
        ];
        let got = compute_metrics::<f64>(&c).as_array();
        for (g, e) in got.iter().zip(expect) {
            ensure((g - e).abs() <= 1e-12, format!("pair {i}: {got:?} vs {expect:?}"))?;
        }
    }
    within(Duration::from_secs(5), t)?;
    Ok(format!("1000 pairs in {:.2?}", t.elapsed()))
}

fn c03_metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = |n: u64| ExactRatio::from_integer(n as i128);
    for i in 0..10_000 {
        // Small ranges so zero cells and empty denominators come up often.
        let hi = if i % 2 == 0 { 4 } else { 100_000 };
        let c = ConfusionCounts::new(
            rng.random_range(0..hi),
            rng.random_range(0..hi),
            rng.random_range(0..hi),
            rng.random_range(0..hi),
        );
        if c.total() == 0 {
            continue;
        }
        let m: MetricResult<ExactRatio> = compute_metrics(&c);
        let two = r(2);
        ensure(m.iou == m.dsc / (two - m.dsc), format!("iou identity fails for {c:?}"))?;
        let n = r(c.total());
        let decomposed = m.sensitivity * r(c.positives()) / n + m.specificity * r(c.negatives()) / n;
        ensure(m.accuracy == decomposed, format!("accuracy decomposition fails for {c:?}"))?;
        ensure(m.accuracy == r(1) - r(c.fp + c.r#fn) / n, format!("error-rate form fails for {c:?}"))?;
    }
    Ok("10000 count tuples, exact rationals".into())
}

fn c04_bootstrap_coverage() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut covered = 0;
    for e in 0..500u64 {
        let values: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let ci = bootstrap_ci(&values, 0.95, 2000, 1000 + e).map_err(|e| e.to_string())?;
        if ci.lower <= 0.5 && 0.5 <= ci.upper {
            covered += 1;
        }
    }
    let rate = covered as f64 / 500.0;
    ensure((0.92..=0.98).contains(&rate), format!("coverage {rate:.3}"))?;
    within(Duration::from_secs(60), t)?;
    Ok(format!("coverage {rate:.3} in {:.1?}", t.elapsed()))
}

fn c05_gradient_check() -> Outcome {
    let t = Instant::now();
    let mut m = SegModel::<f64>::new(ModelConfig::toy(), 11).map_err(|e| e.to_string())?;
    let s = lesion_sample::<f64>(5, 64);
    let r = check_gradients(&mut m, &s, 200, 1e-4, 0.01, 5).map_err(|e| e.to_string())?;
    ensure(r.coords.len() == 200, "wrong coordinate count")?;
    ensure(r.pass_fraction() >= 0.99, format!("pass fraction {:.3}", r.pass_fraction()))?;
    within(Duration::from_secs(120), t)?;
    Ok(format!(
        "{:.1}% within 1%, worst {:.2e}, {:.1?}",
        100.0 * r.pass_fraction(),
        r.worst(),
        t.elapsed()
    ))
}

fn c06_overfit() -> Outcome {
    let t = Instant::now();
    let data: Vec<_> = (0..4).map(|i| lesion_sample::<f64>(100 + i, 64)).collect();
    let cfg = TrainConfig {
        epochs: 200,
        warmup_epochs: 10,
        base_lr: 1e-3,
        warmup_start_lr: 1e-4,
        global_batch_size: 4,
        val_every_epochs: 50,
        ..TrainConfig::default()
    };
    let run = train_fold(&data, &data, &ModelConfig::toy(), &cfg, &FoldOptions::default()).map_err(|e| e.to_string())?;
    ensure(run.steps.len() == 200, format!("{} steps", run.steps.len()))?;
    let dsc = validation_dice(&run.best, &data).map_err(|e| e.to_string())?;
    ensure(dsc >= 0.9, format!("training DSC {dsc:.3}"))?;

    // Code path: the mask is the per-pixel argmax of the assembled logits,
    // with ties to background and nothing applied afterwards.
    let m = &run.best;
    for s in &data {
        let out = m.forward(std::slice::from_ref(&s.image)).map_err(|e| e.to_string())?;
        let logits = assemble_logits(&out).map_err(|e| e.to_string())?;
        let v = &logits.values[0];
        let manual = Mask::from_fn(64, 64, |y, x| v.get(1, y * 64 + x) > v.get(0, y * 64 + x));
        let via_predict = predict(&logits).map_err(|e| e.to_string())?.remove(0);
        let via_argmax = argmax_mask(v, 64, 64).map_err(|e| e.to_string())?;
        let via_model = m.segment_image(&s.image).map_err(|e| e.to_string())?;
        ensure(
            manual == via_predict && manual == via_argmax && manual == via_model,
            "prediction differs from plain argmax",
        )?;
    }
    within(Duration::from_secs(300), t)?;
    Ok(format!("DSC {dsc:.3} after 200 steps, {:.1?}", t.elapsed()))
}

fn c07_schedule() -> Outcome {
    let cfg = TrainConfig::default();
    for (epoch, want) in [(0.0, 5e-5), (20.0, 3e-4), (35.0, 1.5e-4), (50.0, 0.0)] {
        let got = lr_at(epoch, &cfg);
        ensure((got - want).abs() <= 1e-12, format!("lr_at({epoch}) = {got:e}"))?;
    }
    ensure(layer_lr_multiplier(13, 12, 0.65) == 1.0, "head multiplier")?;
    ensure(layer_lr_multiplier(12, 12, 0.65) == 0.65, "block 12 multiplier")?;
    Ok("lr anchors and layer multipliers exact".into())
}

fn c08_clipping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let spread = 10f64.powf(rng.random_range(-3.0..3.0));
        let mut grads: Vec<Matrix<f64>> = (0..rng.random_range(1..6))
            .map(|_| {
                let (r, c) = (rng.random_range(1..20), rng.random_range(1..20));
                Matrix::from_fn(r, c, |_, _| spread * rng.random_range(-1.0..1.0))
            })
            .collect();
        let pre = global_norm(&grads);
        clip_gradients(&mut grads, 5.0).map_err(|e| e.to_string())?;
        let post = global_norm(&grads);
        ensure((post - pre.min(5.0)).abs() <= 1e-6, format!("set {i}: {pre} -> {post}"))?;
    }
    Ok("100 sets".into())
}

fn synthetic_manifest(frames: &[usize]) -> DatasetManifest {
    let mut records = Vec::new();
    for (c, &n) in frames.iter().enumerate() {
        for f in 0..n {
            records.push(ImageRecord {
                image_path: PathBuf::from(format!("/data/case{c:02}/f{f:03}.png")),
                mask_path: PathBuf::from(format!("/data/case{c:02}/m{f:03}.png")),
                case_id: format!("case{c:02}"),
                source_id: SourceId::PancreaticVideo,
                crop: None,
            });
        }
    }
    DatasetManifest {
        root: PathBuf::from("/data"),
        records,
    }
}

fn c09_folds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for trial in 0..20u64 {
        let frames: Vec<usize> = (0..18).map(|_| rng.random_range(1..40)).collect();
        let m = synthetic_manifest(&frames);
        let all: BTreeSet<&Path> = m.records.iter().map(|r| r.image_path.as_path()).collect();
        let folds = make_folds(&m, 5, trial, true).map_err(|e| e.to_string())?;
        ensure(folds.len() == 5, "fold count")?;
        let mut seen_val = BTreeMap::new();
        let mut case_fold = BTreeMap::new();
        for f in &folds {
            let val: BTreeSet<&Path> = f.val_records.iter().map(|r| r.image_path.as_path()).collect();
            let train: BTreeSet<&Path> = f.train_records.iter().map(|r| r.image_path.as_path()).collect();
            ensure(!val.is_empty(), "empty validation fold")?;
            ensure(val.len() == f.val_records.len() && train.len() == f.train_records.len(), "duplicate record")?;
            ensure(val.is_disjoint(&train), "train/val overlap")?;
            ensure(val.union(&train).copied().collect::<BTreeSet<_>>() == all, "fold does not cover manifest")?;
            let train_cases: BTreeSet<&str> = f.train_records.iter().map(|r| r.case_id.as_str()).collect();
            for r in &f.val_records {
                ensure(!train_cases.contains(r.case_id.as_str()), format!("{} split across train/val", r.case_id))?;
                ensure(seen_val.insert(r.image_path.clone(), f.fold_index).is_none(), "record validated twice")?;
                let prev = case_fold.insert(r.case_id.clone(), f.fold_index);
                ensure(prev.is_none() || prev == Some(f.fold_index), "case in two validation folds")?;
            }
        }
        ensure(seen_val.len() == all.len(), "some record never validated")?;
        ensure(case_fold.len() == 18, "some case never validated")?;
        let per_fold: Vec<usize> = (0..5).map(|k| case_fold.values().filter(|&&f| f == k).count()).collect();
        let spread = per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap();
        ensure(spread <= 1, format!("unbalanced case counts {per_fold:?}"))?;
        let again = make_folds(&m, 5, trial, true).map_err(|e| e.to_string())?;
        ensure(again == folds, "same seed gave different folds")?;
        checked += 1;
    }
    Ok(format!("{checked} manifests of 18 cases, k = 5"))
}

fn flood_fill_count(mask: &Mask, eight: bool) -> usize {
    let (h, w) = mask.dims();
    let mut seen = vec![false; h * w];
    let mut count = 0;
    for start in 0..h * w {
        if seen[start] || mask.get(start / w, start % w) == 0 {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (y, x) = ((i / w) as isize, (i % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0) {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && mask.get(ny as usize, nx as usize) == 1 {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    count
}

fn c10_components() -> Outcome {
    let t = Instant::now();
    let check = |m: &Mask| -> Result<(), String> {
        for (conn, eight) in [(Connectivity::Eight, true), (Connectivity::Four, false)] {
            let (_, n) = label_components(m, conn).map_err(|e| e.to_string())?;
            let want = flood_fill_count(m, eight);
            ensure(n == want, format!("{conn:?}: {n} vs {want} on {:?}", m.data))?;
        }
        Ok(())
    };
    for bits in 0..1u32 << 16 {
        check(&Mask::from_fn(4, 4, |y, x| bits >> (y * 4 + x) & 1 == 1))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let p = rng.random_range(0.2..0.7);
        check(&random_mask(&mut rng, 16, 16, p))?;
    }
    within(Duration::from_secs(30), t)?;
    Ok(format!("65536 + 200 masks, both connectivities, {:.2?}", t.elapsed()))
}

fn c11_failure_rate() -> Outcome {
    let findings: Vec<ImageFinding> = (0..320)
        .map(|i| {
            let multi = i % 10 == 3 && i < 310;
            ImageFinding {
                image_id: format!("{i:04}"),
                dsc: (i % 100) as f64 / 100.0,
                components: ComponentStats {
                    component_count: if multi { 2 } else { 1 },
                    component_sizes: if multi { vec![30, 4] } else { vec![30] },
                },
            }
        })
        .collect();
    let report = bucket_failures(&findings, Thresholds::default());
    ensure(report.multi_prediction_count == 31, format!("{} multi", report.multi_prediction_count))?;
    ensure(report.total_images == 320, "total")?;
    ensure(
        report.multi_prediction_rate_display == "9.7%",
        format!("rate shows as {}", report.multi_prediction_rate_display),
    )?;
    Ok(format!("31/320 -> {}", report.multi_prediction_rate_display))
}

fn eusseg(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_eusseg"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        o.status.success(),
        format!("eusseg {} failed: {}", args[0], String::from_utf8_lossy(&o.stderr)),
    )
}

fn pipeline(root: &Path, run: &str) -> Result<Vec<Vec<u8>>, String> {
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let cfg = s(&root.join("run.toml"));
    let pre = root.join("pre");
    let out = root.join(run);
    let common = ["--toy", "--seed", "7", "--config", &cfg];
    let with = |cmd: &str, extra: &[&str]| {
        let mut v = vec![cmd];
        v.extend(common);
        v.extend(extra);
        eusseg(&v)
    };
    with("preprocess", &["--manifest", &s(&root.join("data/manifest.jsonl")), "--out", &s(&pre)])?;
    let manifest = s(&pre.join("manifest.jsonl"));
    with("train", &["--manifest", &manifest, "--out", &s(&out.join("train"))])?;
    let ckpt = s(&out.join("train/fold_0/best.ckpt"));
    with("evaluate", &["--manifest", &manifest, "--checkpoint", &ckpt, "--out", &s(&out.join("eval"))])?;
    with("analyze", &["--results", &s(&out.join("eval")), "--out", &s(&out.join("analysis"))])?;
    ["eval/per_image.csv", "eval/aggregate.json", "analysis/failure_report.json"]
        .iter()
        .map(|f| fs::read(out.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn c12_end_to_end() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    write_dataset(&root.join("data"), &[2, 3, 1, 2], 96, 12).map_err(|e| e.to_string())?;
    fs::write(
        root.join("run.toml"),
        "[train]\nepochs = 3\nwarmup_epochs = 1\nbase_lr = 1e-3\nwarmup_start_lr = 1e-4\nglobal_batch_size = 4\nval_every_epochs = 1\n[data]\nk = 2\n",
    )
    .map_err(|e| e.to_string())?;
    let a = pipeline(root, "run_a")?;
    let b = pipeline(root, "run_b")?;
    ensure(a == b, "metric reports differ between runs")?;
    let rows = String::from_utf8_lossy(&a[0]).lines().count() - 1;
    ensure(rows == 8, format!("{rows} evaluated rows"))?;
    Ok(format!("two runs identical over {rows} images, {:.1?}", t.elapsed()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("paper numbers not reproducible at desk scale", c01_non_reproducibility),
        ("metric oracle equivalence", c02_metric_oracle),
        ("metric identities", c03_metric_identities),
        ("bootstrap coverage", c04_bootstrap_coverage),
        ("gradient check", c05_gradient_check),
        ("overfit sanity and pure argmax", c06_overfit),
        ("schedule exactness", c07_schedule),
        ("clipping exactness", c08_clipping),
        ("fold integrity", c09_folds),
        ("component oracle", c10_components),
        ("failure-report arithmetic", c11_failure_rate),
        ("end-to-end determinism", c12_end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS  {:>2}  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
