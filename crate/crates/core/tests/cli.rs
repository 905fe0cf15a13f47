use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mamba-dsse");

const TINY: &str = r#"{
  "dataset": {"n_buses": 6, "days": 2},
  "model": {"window": 6, "hidden": 8, "engine": {"blocks": 1, "d_model": 8, "state_size": 2}},
  "train": {"batch_size": 4, "total_steps": 4, "validate_every": 2, "max_eval_windows": 16},
  "experiment": {"sizes": [6], "bench_sizes": [6], "bench_windows": [4, 8], "bench_reps": 2}
}"#;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.json");
    fs::write(&path, TINY).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["--help"], d)), 0);
    assert_eq!(code(&run(&[], d)), 1);
    assert_eq!(code(&run(&["frobnicate"], d)), 1);
    assert_eq!(code(&run(&["train", "--variant", "lstm"], d)), 1);
    assert_eq!(code(&run(&["train", "--seed", "minus-one"], d)), 1);
    let cfg = tiny_config(d);
    assert_eq!(code(&run(&["ablate", "everything", "--config", &cfg], d)), 1);
    assert_eq!(code(&run(&["train", "--config", "missing.json"], d)), 1);
}

#[test]
fn config_is_strict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for bad in [
        r#"{"train": {"lr": 0.001, "momentum": 0.9}}"#,
        r#"{"modle": {}}"#,
        r#"{"train": {"total_steps": "many"}}"#,
        r#"{"train": {"lr": -1.0}}"#,
        "not json",
    ] {
        fs::write(d.join("bad.json"), bad).unwrap();
        let out = run(&["simulate", "--config", "bad.json"], d);
        assert_eq!(code(&out), 1, "{bad}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    }
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d);
    assert_eq!(code(&run(&["eval", "--checkpoint", "nowhere.ckpt", "--config", &cfg], d)), 2);
    fs::write(d.join("garbage.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(code(&run(&["eval", "--checkpoint", "garbage.ckpt"], d)), 2);
}

#[test]
fn simulate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d);
    assert_eq!(code(&run(&["simulate", "--csv", "--config", &cfg, "--seed", "3", "--out", "data"], d)), 0);
    for f in ["manifest.json", "truth.bin", "measurements.bin", "truth.csv"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    let out = run(&["train", "--config", &cfg, "--data", "data", "--variant", "dsse", "--out", "run"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let loss = fs::read_to_string(d.join("run/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 5);
    assert!(loss.starts_with("step,lr,train_loss,val_loss,val_vm_mae"));

    let out = run(&["eval", "--checkpoint", "run/model.ckpt", "--data", "data", "--out", "eval"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("eval/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["variant"], "dsse");
    for key in ["model", "persistence", "mean"] {
        assert!(metrics[key]["overall"]["mae"].as_f64().unwrap() >= 0.0);
    }
    let predictions = fs::read_to_string(d.join("eval/predictions.csv")).unwrap();
    assert!(predictions.starts_with("timestamp,bus,true_vm,pred_vm,true_va,pred_va"));
    assert!(d.join("eval/per_bus.csv").exists());

    // Without --data the dataset is regenerated from the checkpoint.
    let out = run(&["eval", "--checkpoint", "run/model.ckpt", "--out", "eval2"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(d.join("eval/metrics.json")).unwrap(), fs::read(d.join("eval2/metrics.json")).unwrap());
}

#[test]
fn ablate_and_bench_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = tiny_config(d);
    let out = run(&["ablate", "scalability", "--config", &cfg, "--seed", "2", "--out", "scal"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(d.join("scal/results.csv")).unwrap();
    // Header plus one row per variant.
    assert_eq!(results.lines().count(), 3);
    assert!(d.join("scal/summary.csv").exists());

    let out = run(&["bench", "--config", &cfg, "--variant", "mixer", "--out", "bench"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bench = fs::read_to_string(d.join("bench/bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 3);
    assert!(bench.lines().skip(1).all(|l| l.starts_with("mixer,6,")));
}
