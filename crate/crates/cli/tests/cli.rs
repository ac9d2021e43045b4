use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn halfext(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_halfext")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn verify_kernel_writes_a_passing_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _) = halfext(&["run", "verify-kernel", "--n", "3", "--out", out]);
    assert_eq!(code, 0);
    let s = summary(dir.path());
    assert_eq!(s["pass"], Value::Bool(true));
    assert!((s["pt_l1_norm"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(s["config"]["n"], 3);
    assert_eq!(s["grid"]["mapping"], "tan");
    assert!(s["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["pass"] == Value::Bool(true)));
    assert!(dir.path().join("metadata.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, err) = halfext(&["run", "no-such-experiment", "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown experiment"));
    assert_eq!(halfext(&["run", "verify-kernel", "--bogus-flag"]).0, 2);
    assert_eq!(halfext(&["run", "rearrange-demo", "--n", "4", "--out", out]).0, 2);

    // Three iterations cannot converge: the run completes with a failing check.
    let (code, _) = halfext(&[
        "run",
        "solve-el",
        "--n",
        "3",
        "--p",
        "4",
        "--grid-n",
        "32",
        "--max-iters",
        "3",
        "--out",
        out,
    ]);
    assert_eq!(code, 1);
    let s = summary(dir.path());
    assert_eq!(s["pass"], Value::Bool(false));
    assert_eq!(s["status"], "max_iters");
    assert!(dir.path().join("trace.csv").exists());
    assert!(dir.path().join("profile.csv").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 4, "grid_n": 24, "seed": 9}"#).unwrap();
    let out = dir.path().join("out");
    let (code, _) = halfext(&[
        "run",
        "verify-kernel",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let s = summary(&out);
    assert_eq!(s["config"]["n"], 3);
    assert_eq!(s["config"]["grid_n"], 24);
    assert_eq!(s["config"]["seed"], 9);

    std::fs::write(&cfg, r#"{"n": 3, "typo_field": 1}"#).unwrap();
    assert_eq!(
        halfext(&["run", "verify-kernel", "--config", cfg.to_str().unwrap()]).0,
        2
    );
}

#[test]
fn reproducible_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let out = dir.path().join(name);
        let args = [
            "run",
            "classify-radial",
            "--reproducible",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(halfext(&args).0, 0);
        std::fs::read(out.join("summary.json")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}
