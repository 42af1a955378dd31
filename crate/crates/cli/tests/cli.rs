use std::fs;
use std::process::{Command, Output};

fn relmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relmatch")).args(args).output().expect("spawn relmatch")
}

fn config_value(dir: &std::path::Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("config.txt")).unwrap();
    text.lines()
        .find_map(|l| l.split_once(" = ").filter(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
        .unwrap_or_else(|| panic!("{key} missing from config.txt"))
}

#[test]
fn train_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = relmatch(&["train", "--steps", "100", "--set", "eval_interval=50", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.txt", "manifest.json", "metrics.csv", "summary.json", "model.ckpt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["finished_unix"].as_u64().is_some());
    assert_eq!(manifest["config"]["steps"], "100");
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.starts_with("step,lr,ce_sup,ce_unsup,mce,pl_rate,pl_acc,test_acc"));
}

#[test]
fn flags_override_file_which_overrides_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# file layer\npreset = cpl\nsteps = 60\ntau = 0.9\nlr = 0.01\n").unwrap();
    let out = dir.path().join("run");
    let o = relmatch(&[
        "train",
        cfg.to_str().unwrap(),
        "--steps",
        "40",
        "--set",
        "eval_interval=20",
        "--log-backend",
        "principal",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(config_value(&out, "preset"), "cpl");
    assert_eq!(config_value(&out, "cpl"), "true");
    assert_eq!(config_value(&out, "steps"), "40");
    assert_eq!(config_value(&out, "tau"), "0.9");
    assert_eq!(config_value(&out, "log_backend"), "principal");
}

#[test]
fn config_snapshot_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let o = relmatch(&[
        "train",
        "--seed",
        "5",
        "--steps",
        "80",
        "--set",
        "eval_interval=40",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let second = dir.path().join("b");
    let o = relmatch(&["train", first.join("config.txt").to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(first.join("metrics.csv")).unwrap(), fs::read(second.join("metrics.csv")).unwrap());
}

#[test]
fn exported_data_trains_identically() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    assert!(relmatch(&["export-data", "--out", csv.to_str().unwrap()]).status.success());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let common = ["--steps", "60", "--set", "eval_interval=30"];
    assert!(relmatch(&[&["train", "--out", a.to_str().unwrap()][..], &common].concat()).status.success());
    let o =
        relmatch(&[&["train", "--data", csv.to_str().unwrap(), "--out", b.to_str().unwrap()][..], &common].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    for args in [
        vec!["train", "--set", "no_such_key=1", "--out", out],
        vec!["train", "--preset", "nonsense", "--out", out],
        vec!["train", "--log-backend", "taylor0", "--out", out],
        vec!["train", "--set", "tau=1.5", "--out", out],
        vec!["train", "--set", "data.kind=moons", "--out", out],
        vec!["train", "/definitely/not/here.cfg", "--out", out],
    ] {
        let o = relmatch(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = relmatch(&[
        "train",
        "--steps",
        "50",
        "--set",
        "lr=1e6",
        "--set",
        "schedule=constant",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn goldens_pass() {
    let o = relmatch(&["goldens"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

#[test]
fn ablation_refuses_a_fixed_backend() {
    let o = relmatch(&["ablate", "--log-backend", "principal", "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
