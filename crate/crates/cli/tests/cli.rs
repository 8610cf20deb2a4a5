use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shmvdr"))
}

/// Short signals and small frames so the full pipeline runs in seconds.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let config = json!({
        "scene": {
            "room": {"dims": [5.0, 6.0, 4.0], "t60": 0.2},
            "desired": {"position": [4.6, 4.05, 1.7], "signal": {"kind": "synthetic_speech"}},
            "interference": {"position": [1.6, 1.05, 1.2], "signal": {"kind": "synthetic_washer"}},
            "array": {"center": [1.6, 4.05, 1.7]},
            "snr_db": 0.0,
            "ssnr_db": 30.0,
            "seed": 7,
            "duration_s": 2.0
        },
        "method": "both",
        "band": {"f_low": 300.0, "f_high": 1600.0},
        "frame_size": 2048,
        "hop": 512,
        "frames_for_metrics": 5,
        "estimation_duration_s": 1.0
    });
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        run(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    }
    for file in ["metrics.csv", "table.csv", "diagnostics.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
    let m = manifest(&a);
    assert_eq!(m["outputs"], manifest(&b)["outputs"]);
    assert_eq!(m["seed"], 7);
    let panels = m["outputs"]
        .as_object()
        .unwrap()
        .keys()
        .filter(|k| k.contains("/fields/") && k.ends_with(".png"))
        .count();
    assert_eq!(panels, 6);
}

#[test]
fn seed_changes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = config.to_str().unwrap();
    run(&["run", "--config", c, "--method", "proposed", "--out", a.to_str().unwrap()]);
    run(&["run", "--config", c, "--method", "proposed", "--seed", "8", "--out", b.to_str().unwrap()]);
    assert_ne!(manifest(&a)["config_hash"], manifest(&b)["config_hash"]);
    assert_ne!(
        std::fs::read(a.join("metrics.csv")).unwrap(),
        std::fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn staged_commands_match_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let c = config.to_str().unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    run(&["run", "--config", c, "--out", &p("run")]);
    run(&["simulate", "--config", c, "--out", &p("sim")]);
    run(&["enhance", "--config", c, "--out", &p("enh")]);
    run(&["evaluate", "--config", c, "--sim", &p("sim"), "--enh", &p("enh"), "--out", &p("eval")]);
    let aggregates = |file: String| -> Vec<String> {
        std::fs::read_to_string(file)
            .unwrap()
            .lines()
            .filter(|l| l.contains(",all,all,"))
            .map(|l| l.split(',').skip(1).collect::<Vec<_>>().join(","))
            .collect()
    };
    let mut single = aggregates(p("run") + "/metrics.csv");
    let mut staged = aggregates(p("eval") + "/metrics.csv");
    single.sort();
    staged.sort();
    assert_eq!(single.len(), 2);
    assert_eq!(single, staged);
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, "{\n  \"scene\": {},\n  \"hopp\": 3\n}").unwrap();
    let out = bin().args(["run", "--config", path.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "{err}");

    let small = small_config(tmp.path());
    let mut v: Value = serde_json::from_slice(&std::fs::read(small).unwrap()).unwrap();
    v["hopp"] = json!(3);
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    let out = bin().args(["run", "--config", path.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field `hopp`"));
}

#[test]
fn invalid_experiment_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = bin()
        .args(["run", "--config", config.to_str().unwrap(), "--sweep-t60", "", "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}
