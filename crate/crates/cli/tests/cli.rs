use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eusseg_core::dataset::io::{write_gray16, write_mask};
use eusseg_core::dataset::synthetic::{lesion, write_dataset};
use eusseg_core::dataset::Mask;

fn eusseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eusseg")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dataset(dir: &Path) -> PathBuf {
    write_dataset(&dir.join("data"), &[2, 1, 2], 80, 5).unwrap();
    dir.join("data/manifest.jsonl")
}

const QUICK: &str = "[train]\nepochs = 2\nwarmup_epochs = 1\nglobal_batch_size = 4\nval_every_epochs = 1\n[data]\nk = 3\n";

#[test]
fn missing_manifest_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = eusseg(&["preprocess", "--manifest", "/nonexistent/manifest.jsonl", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonexistent"));
    let o = eusseg(&["split", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("manifest"));
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(eusseg(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(eusseg(&["--help"]).status.code(), Some(0));
}

#[test]
fn corrupt_image_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let bad = dir.path().join("data/images/case01_f00.png");
    fs::write(&bad, b"not a png").unwrap();
    let o = eusseg(&["preprocess", "--toy", "--manifest", s(&manifest), "--out", s(&dir.path().join("p"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("case01_f00.png"), "{}", stderr(&o));
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "config.json" {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn preprocess_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &a, &b] {
        let o = eusseg(&["preprocess", "--toy", "--manifest", s(&manifest), "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ta = tree(&a);
    assert_eq!(ta.len(), 5 * 2 + 2);
    assert_eq!(ta, tree(&b));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_records"], 5);
    assert_eq!(summary["image_size"], 64);
    assert!(a.join("config.json").exists());

    // The cache is itself a valid manifest.
    let cfg = dir.path().join("k2.json");
    fs::write(&cfg, r#"{"data": {"k": 2}}"#).unwrap();
    let o = eusseg(&["split", "--config", s(&cfg), "--manifest", s(&a.join("manifest.jsonl")), "--out", s(&dir.path().join("s"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn split_writes_grouped_folds() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[data]\nk = 3\n").unwrap();
    let out = dir.path().join("s");
    let o = eusseg(&["split", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&out), "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let folds: serde_json::Value = serde_json::from_slice(&fs::read(out.join("folds.json")).unwrap()).unwrap();
    let resolved: serde_json::Value = serde_json::from_slice(&fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["data"]["k"], 3);
    assert_eq!(resolved["data"]["seed"], 2);
    assert_eq!(resolved["train"]["seed"], 2);
    assert!(folds.to_string().contains("case00"));
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[train]\nlearning_rate = 1.0\n").unwrap();
    let o = eusseg(&["split", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&dir.path().join("s"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train.learning_rate"));
}

#[test]
fn divergent_training_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[train]\nepochs = 2\nwarmup_epochs = 1\nglobal_batch_size = 4\nbase_lr = 1e300\nwarmup_start_lr = 1e300\n[data]\nk = 3\n",
    )
    .unwrap();
    let out = dir.path().join("t");
    let o = eusseg(&["train", "--toy", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&out), "--fold", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("fold 0"));
}

#[test]
fn train_refuses_a_different_config_in_the_same_directory() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, QUICK).unwrap();
    let out = dir.path().join("t");
    let base = ["train", "--toy", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&out), "--fold", "1"];
    let o = eusseg(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("fold_1/best.ckpt").exists());
    assert!(!out.join("fold_0").exists());
    let mut other = base.to_vec();
    other.extend(["--seed", "99"]);
    let o = eusseg(&other);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("different configuration"));
    // Same config again resumes the finished fold.
    let o = eusseg(&base);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("resumed"));
}

fn fake_results(dir: &Path, rows: &[(&str, f64)]) {
    let preds = dir.join("predictions");
    fs::create_dir_all(&preds).unwrap();
    let mut csv = String::from("image_id,image_path,dsc,iou,sensitivity,specificity,accuracy,component_count\n");
    for (i, (id, dsc)) in rows.iter().enumerate() {
        csv.push_str(&format!("{id},/x/{id}.png,{dsc},{dsc},{dsc},1,1,1\n"));
        let (img, gt) = lesion::<f64>(i as u64, 32);
        write_gray16(&preds.join(format!("{id}_input.png")), &img).unwrap();
        write_mask(&preds.join(format!("{id}_gt.png")), &gt).unwrap();
        // Two separate blobs in the prediction.
        let pred = Mask::from_fn(32, 32, |y, x| (y < 4 && x < 4) || (y > 27 && x > 27));
        write_mask(&preds.join(format!("{id}_pred.png")), &pred).unwrap();
    }
    fs::write(dir.join("per_image.csv"), csv).unwrap();
}

#[test]
fn analyze_writes_overlay_for_failures_only() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("eval");
    fake_results(&results, &[("0000_bad", 0.05), ("0001_good", 0.9)]);
    let out = dir.path().join("an");
    let o = eusseg(&["analyze", "--results", s(&results), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let overlays: Vec<_> = fs::read_dir(out.join("overlays")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(overlays, vec!["0000_bad_overlay.png"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("failure_report.json")).unwrap()).unwrap();
    assert_eq!(report["complete_failures"], serde_json::json!(["0000_bad"]));
    assert_eq!(report["multi_prediction_count"], 2);
    assert_eq!(report["multi_prediction_rate_display"], "100.0%");
}

#[test]
fn analyze_reports_missing_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("eval");
    fake_results(&results, &[("0000_a", 0.5)]);
    fs::remove_file(results.join("predictions/0000_a_pred.png")).unwrap();
    let o = eusseg(&["analyze", "--results", s(&results), "--out", s(&dir.path().join("an"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("0000_a_pred.png"));
}
