use std::path::Path;
use std::process::{Command, Output};

fn basisdiag(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_basisdiag"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("BASISDIAG_THREADS", t),
        None => cmd.env_remove("BASISDIAG_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn diagnose(out: &Path, extra: &[&str], threads: Option<&str>) -> Output {
    let mut args = vec!["diagnose", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    basisdiag(&args, threads)
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const SMALL_S1: &[&str] = &["--scenario", "builtin:S1", "--window", "20", "--grid-n", "101"];

#[test]
fn s1_completes_with_passing_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = diagnose(dir.path(), SMALL_S1, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(dir.path());
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["scenario"]["window_r"], 20.0);
    for c in rep["checks"].as_array().unwrap() {
        let v = c["verdict"].as_str().unwrap();
        assert!(v == "pass" || v == "stable", "{c}");
    }
    let spectrum = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let first: Vec<f64> = spectrum.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((first[1] + std::f64::consts::LN_2 / 2.0).abs() < 1e-8, "{first:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("theorem_consistency"));
}

#[test]
fn thread_cap_does_not_change_the_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [SMALL_S1, &["--format", "json"]].concat();
    assert_eq!(diagnose(a.path(), &args, None).status.code(), Some(0));
    assert_eq!(diagnose(b.path(), &args, Some("1")).status.code(), Some(0));
    let (mut ra, mut rb) = (report(a.path()), report(b.path()));
    ra.as_object_mut().unwrap().remove("timestamp");
    rb.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(ra, rb);
    assert!(!b.path().join("spectrum.csv").exists());
}

#[test]
fn csv_only_writes_no_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = diagnose(dir.path(), &["--scenario", "builtin:S4", "--format", "csv"], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(!dir.path().join("report.json").exists());
    assert!(dir.path().join("trace_power_0.5.csv").exists());
}

#[test]
fn invalid_scenarios_exit_with_model_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = diagnose(dir.path(), &["--scenario", "builtin:S1", "--grid-n", "1"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.n"));

    let out = diagnose(dir.path(), &["--scenario", "builtin:S7"], None);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1,").unwrap();
    let out = diagnose(dir.path(), &["--scenario", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn io_failures_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = diagnose(dir.path(), &["--scenario", missing.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));

    // The output path is a regular file, so the directory cannot be created.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let out = diagnose(&blocker, &["--scenario", "builtin:S2"], None);
    assert_eq!(out.status.code(), Some(3));
}
