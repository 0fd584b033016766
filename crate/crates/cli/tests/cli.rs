use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn qmbrl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmbrl"))
        .current_dir(dir)
        .env_remove("QMBRL_WORKERS")
        .args(args)
        .output()
        .expect("spawn qmbrl")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = qmbrl(dir, args);
    assert!(out.status.success(), "qmbrl {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn hash(path: &Path) -> String {
    Sha256::digest(fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn gen_data_default_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--out", "full"]);
    assert_eq!(rows(&dir.path().join("full/dataset.csv")).len(), 10_000);
    assert!(dir.path().join("full/dataset.meta.json").exists());
    assert!(dir.path().join("full/provenance.json").exists());
    ok(dir.path(), &["gen-data", "--size", "500", "--out", "small"]);
    assert_eq!(rows(&dir.path().join("small/dataset.csv")).len(), 500);
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(a.path(), "1"), (b.path(), "3")] {
        ok(dir, &["--workers", workers, "gen-data", "--size", "300", "--seed", "4", "--out", "data"]);
        ok(
            dir,
            &["--workers", workers, "train-model", "--data", "data/dataset.csv", "--epochs", "1", "--reuploads", "1",
              "--layers", "1", "--out", "model"],
        );
    }
    for file in ["data/dataset.csv", "data/dataset.meta.json", "data/provenance.json", "model/model.json",
                 "model/history.csv", "model/provenance.json"] {
        assert_eq!(hash(&a.path().join(file)), hash(&b.path().join(file)), "{file}");
    }
}

#[test]
fn train_model_epochs_and_missing_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--size", "200", "--out", "data"]);
    ok(dir.path(), &["train-model", "--data", "data/dataset.csv", "--epochs", "1", "--out", "m"]);
    assert_eq!(rows(&dir.path().join("m/history.csv")).len(), 1);
    let missing = qmbrl(dir.path(), &["train-model", "--data", "nope.csv", "--out", "m2"]);
    assert!(!missing.status.success());
}

#[test]
fn search_eval_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--size", "200", "--out", "data"]);
    ok(d, &["train-model", "--data", "data/dataset.csv", "--epochs", "1", "--reuploads", "0", "--layers", "1", "--out", "m"]);
    ok(
        d,
        &["search-policy", "--model", "m/model.json", "--particles", "10", "--budget", "25", "--horizon", "15",
          "--starts", "3", "--reuploads", "1", "--eval-during-search", "--eval-episodes", "5", "--out", "p"],
    );
    let history = rows(&d.join("p/history.csv"));
    assert!(!history.is_empty());
    let fitness: Vec<f64> = history.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(fitness.windows(2).all(|w| w[1] > w[0]), "{fitness:?}");
    assert!(history.iter().all(|r| r.split(',').nth(3).is_some_and(|s| !s.is_empty())));

    ok(d, &["eval-policy", "--policy", "p/policy.json", "--out", "e"]);
    let report = rows(&d.join("e/report.csv"));
    assert_eq!(report.len(), 100);
    for r in &report {
        let steps: usize = r.split(',').last().unwrap().parse().unwrap();
        assert!((1..=500).contains(&steps));
    }

    ok(d, &["rerun", "p/provenance.json", "--out", "p2"]);
    for file in ["policy.json", "history.csv"] {
        assert_eq!(hash(&d.join("p").join(file)), hash(&d.join("p2").join(file)), "{file}");
    }
}

#[test]
fn one_swarm_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--size", "100", "--out", "data"]);
    ok(d, &["train-model", "--data", "data/dataset.csv", "--epochs", "1", "--reuploads", "0", "--layers", "1", "--out", "m"]);
    ok(
        d,
        &["search-policy", "--model", "m/model.json", "--budget", "100", "--particles", "100", "--horizon", "5",
          "--starts", "2", "--out", "p"],
    );
    assert!(!rows(&d.join("p/history.csv")).is_empty());
}

#[test]
fn studies_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--size", "300", "--out", "data"]);
    ok(
        d,
        &["study-reupload", "--data", "data/dataset.csv", "--reuploads", "0,1", "--runs", "2", "--layers", "1",
          "--epochs", "1", "--train-samples", "50", "--out", "r"],
    );
    assert_eq!(rows(&d.join("r/runs.csv")).len(), 4);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["groups"].as_array().unwrap().len(), 2);

    ok(
        d,
        &["study-data", "--data", "data/dataset.csv", "--fractions", "1,0.5", "--runs", "1", "--reuploads", "0",
          "--layers", "1", "--epochs", "1", "--mlp-epochs", "2", "--out", "s"],
    );
    let text = fs::read_to_string(d.join("s/runs.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "fraction,family,run,val_loss");
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}
