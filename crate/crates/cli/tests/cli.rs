//! End-to-end runs of the `nlc` binary on a deliberately tiny link.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "link.n_spans=2",
    "--set",
    "link.steps_per_span=4",
    "--set",
    "system.frame_len=512",
    "--set",
    "n_train=4",
    "--set",
    "n_val=2",
    "--set",
    "n_test=2",
    "--set",
    "launch_powers_dbm=[0]",
    "--set",
    "train.epochs=2",
    "--set",
    "train.batch_size=2",
    "--set",
    "pruning.finetune_epochs=1",
    "--threads",
    "2",
];

fn nlc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlc"))
        .current_dir(dir)
        .args(SMALL)
        .args(args)
        .output()
        .expect("spawn nlc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn simulate_train_evaluate_prune_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    assert_ok(&nlc(d, &["simulate", "--out", "data"]));
    assert!(d.join("data/train_0dBm.nlcd").exists());
    assert!(d.join("data/test_0dBm.nlcd").exists());

    assert_ok(&nlc(d, &["train", "--data", "data", "--power", "0", "--out", "run"]));
    for f in ["model.json", "train_record.csv", "manifest.json"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/manifest.json")).unwrap()).unwrap();
    assert!(manifest["config_digest"].as_str().unwrap().len() == 64);
    assert!(manifest["version"].as_str().is_some());

    let eval = nlc(d, &["evaluate", "--data", "data", "--model", "run/model.json"]);
    assert_ok(&eval);
    let text = stdout(&eval);
    assert!(text.starts_with("# version="));
    assert!(text.contains("pa-ldbp"));

    let cdo = nlc(
        d,
        &["evaluate", "--data", "data", "--scheme", "cdo", "--out", "cdo.csv"],
    );
    assert_ok(&cdo);
    assert!(std::fs::read_to_string(d.join("cdo.csv")).unwrap().contains("cdo"));

    let prune = nlc(
        d,
        &[
            "prune",
            "--data",
            "data",
            "--power",
            "0",
            "--model",
            "run/model.json",
            "--out",
            "pruned",
        ],
    );
    assert_ok(&prune);
    assert!(stdout(&prune).contains("filter_len,c0_len"));
    assert!(d.join("pruned/model.json").exists());

    let cx = nlc(d, &["complexity", "--model", "run/model.json"]);
    assert_ok(&cx);
    assert!(stdout(&cx).contains("tde"));
    assert!(stdout(&cx).contains("fde"));
}

#[test]
fn design_writes_filters_and_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlc(dir.path(), &["design", "--spans", "1,2", "--out", "design"]);
    assert_ok(&o);
    for f in [
        "filter_s1.json",
        "filter_s2.json",
        "c0_s1.json",
        "c0_s2.json",
        "design.csv",
    ] {
        assert!(dir.path().join("design").join(f).exists(), "missing {f}");
    }
    assert_eq!(stdout(&o).lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn identical_seeds_give_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&nlc(d, &["--seed", "7", "simulate", "--out", "data"]));
    assert_ok(&nlc(
        d,
        &["--seed", "7", "train", "--data", "data", "--power", "0", "--out", "a"],
    ));
    assert_ok(&nlc(
        d,
        &["--seed", "7", "train", "--data", "data", "--power", "0", "--out", "b"],
    ));
    let a = std::fs::read_to_string(d.join("a/model.json")).unwrap();
    let b = std::fs::read_to_string(d.join("b/model.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlc(dir.path(), &["--set", "link.no_such_field=1", "design", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_field"));
}

#[test]
fn invalid_value_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlc(dir.path(), &["--set", "train.learning_rate=-1", "design", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_with_io_code_and_hint() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlc(
        dir.path(),
        &["train", "--data", "nowhere", "--power", "0", "--out", "r"],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nlc simulate"));
}

#[test]
fn missing_model_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlc(dir.path(), &["complexity", "--model", "absent.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn config_file_is_read_and_overridden() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"model": {"spans_per_step": 2}}"#).unwrap();
    let o = nlc(dir.path(), &["--config", "cfg.json", "design", "--out", "d"]);
    assert_ok(&o);
    assert!(dir.path().join("d/filter_s2.json").exists());
}
