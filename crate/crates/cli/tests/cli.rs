use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coupled-otto"))
}

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("config.in.json");
    std::fs::write(&cfg, config).unwrap();
    bin().args(args).arg("--config").arg(&cfg).output().unwrap()
}

const SMALL: &str = r#"{"n_trajectories": 6, "spectrum_detunings": 5, "spectrum_record_s": 4.0}"#;

#[test]
fn dump_defaults_is_a_loadable_config() {
    let out = bin().arg("--dump-defaults").output().unwrap();
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lambda_hz"], 40.0);
    v["n_trajectories"] = 4.into();
    let target = dir.path().join("o");
    let again = run(dir.path(), &["cycle", "--out", target.to_str().unwrap()], &v.to_string());
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let written: serde_json::Value = serde_json::from_slice(&std::fs::read(target.join("config.json")).unwrap()).unwrap();
    v["out_dir"] = written["out_dir"].clone();
    assert_eq!(written, v);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["cycle"], r#"{"gamma1_hz": -3.0}"#);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["cycle"], r#"{"not_a_key": 1}"#);
    assert_eq!(out.status.code(), Some(2));
    let out = bin().arg("cycle").arg("--config").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unresolved_splitting_exits_3_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let cfg = r#"{"lambda_hz": 0.0, "spectrum_detunings": 3, "spectrum_record_s": 4.0}"#;
    let out = run(dir.path(), &["spectrum", "--out", target.to_str().unwrap()], cfg);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!target.exists());
}

#[test]
fn spectrum_reports_splitting() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    let out = run(dir.path(), &["spectrum", "--out", target.to_str().unwrap()], SMALL);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(target.join("splitting.json")).unwrap()).unwrap();
    let s = v["splitting_hz"].as_f64().unwrap();
    assert!((s - 80.0).abs() <= 2.0, "{s}");
    for f in ["spectrum_map.csv", "peaks.csv", "config.json"] {
        assert!(target.join(f).exists(), "{f}");
    }
}

#[test]
fn cycle_output_is_deterministic_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (i, workers) in ["1", "3", "1"].iter().enumerate() {
        let target = dir.path().join(format!("run{i}"));
        let out = run(dir.path(), &["cycle", "--workers", workers, "--out", target.to_str().unwrap()], SMALL);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outs.push(target);
    }
    for f in ["series.csv", "works.csv", "std.csv", "thermo.json", "diagram.csv", "trajectory.csv"] {
        let a = std::fs::read(outs[0].join(f)).unwrap();
        assert_eq!(a, std::fs::read(outs[1].join(f)).unwrap(), "{f} differs across worker counts");
        assert_eq!(a, std::fs::read(outs[2].join(f)).unwrap(), "{f} differs across runs");
    }
}

#[test]
fn seed_flag_changes_samples() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(dir.path(), &["cycle", "--seed", "1", "--out", a.to_str().unwrap()], SMALL).status.success());
    assert!(run(dir.path(), &["cycle", "--seed", "2", "--out", b.to_str().unwrap()], SMALL).status.success());
    assert_ne!(std::fs::read(a.join("works.csv")).unwrap(), std::fs::read(b.join("works.csv")).unwrap());
}

#[test]
fn twin_and_sweep_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("twin");
    let out = run(dir.path(), &["twin", "--out", t.to_str().unwrap()], SMALL);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(t.join("thermo.json")).unwrap()).unwrap();
    assert!(v["upper"]["w_total"].is_f64() && v["lower"]["w_total"].is_f64());

    let s = dir.path().join("sweep");
    let cfg = r#"{"n_trajectories": 4, "sweep_times_s": [0.015, 0.03]}"#;
    let out = run(dir.path(), &["sweep", "--no-correlation", "--out", s.to_str().unwrap()], cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(s.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("sweep_time_s,eta_n,"));
}
