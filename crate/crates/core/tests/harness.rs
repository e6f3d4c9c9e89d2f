use std::collections::BTreeSet;
use std::sync::OnceLock;

use basisdiag::exec::{self, Mode};
use basisdiag::harness::{
    builtin, emit, json_without_timestamp, load_scenario, run_pipeline, DiagnosticsReport, Format, HarnessError, ModelSpec,
    Scenario, StageStatus, VectorSpec,
};
use basisdiag::Verdict;

fn s1() -> &'static DiagnosticsReport {
    static REP: OnceLock<DiagnosticsReport> = OnceLock::new();
    REP.get_or_init(|| run_pipeline(&builtin("S1").unwrap()).unwrap())
}

/// S1 on a short window, cheap enough to run several times.
fn small(g: VectorSpec) -> Scenario {
    let mut sc = builtin("S1").unwrap();
    sc.name = "small".into();
    sc.window_r = 20.0;
    if let ModelSpec::Operator(op) = &mut sc.model {
        op.n = 101;
        op.g = g;
    }
    sc
}

fn verdict(rep: &DiagnosticsReport, id: &str) -> Verdict {
    rep.check(id).unwrap_or_else(|| panic!("missing check {id}")).verdict
}

#[test]
fn s1_checks_are_unique_and_pass() {
    let rep = s1();
    let ids: BTreeSet<&str> = rep.checks.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids.len(), rep.checks.len(), "duplicate check ids");
    assert_eq!(rep.spectrum.as_ref().unwrap().count, 69);
    for c in &rep.checks {
        assert!(
            matches!(c.verdict, Verdict::Pass | Verdict::Stable),
            "{} gave {:?}: {}",
            c.id,
            c.verdict,
            c.detail
        );
    }
    assert!(rep.stages.iter().all(|s| s.status == StageStatus::Ok));
}

#[test]
fn s1_main_band_matches_weights() {
    // W² ≍ w*² holds up to a constant; centre the band on its geometric mean.
    let band = s1().main_band.as_ref().unwrap();
    let centre = (band.at_r.min * band.at_r.max).sqrt();
    assert!(band.at_r.min / centre >= 0.2 && band.at_r.max / centre <= 5.0, "{band:?}");
    assert!(band.drift.abs() < 0.25);
}

#[test]
fn zero_g_marks_spectral_stages_not_applicable() {
    let rep = run_pipeline(&small(VectorSpec::Zero)).unwrap();
    assert_eq!(rep.spectrum.as_ref().unwrap().count, 0);
    for id in ["carleson", "frame_g", "frame_f_star", "lrg", "estimates", "expansion", "strip_distance"] {
        assert_eq!(verdict(&rep, id), Verdict::NotApplicable, "{id}");
    }
    assert_eq!(verdict(&rep, "theorem_consistency"), Verdict::NotApplicable);
    let csv = basisdiag::harness::spectrum_csv(&rep);
    assert_eq!(csv, "re,im,abs_phi_prime\n");
}

#[test]
fn output_is_deterministic_outside_timestamp() {
    let sc = small(VectorSpec::One);
    let a = run_pipeline(&sc).unwrap();
    let b = run_pipeline(&sc).unwrap();
    assert_eq!(json_without_timestamp(&a), json_without_timestamp(&b));
}

#[test]
fn sequential_and_parallel_agree() {
    let sc = small(VectorSpec::ExpT { rate: 1.0 });
    exec::set_mode(Mode::Sequential);
    let a = run_pipeline(&sc).unwrap();
    exec::set_mode(Mode::Parallel);
    let b = run_pipeline(&sc).unwrap();
    assert_eq!(json_without_timestamp(&a), json_without_timestamp(&b));
}

#[test]
fn seed_changes_only_seeded_checks() {
    let sc = small(VectorSpec::One);
    let other = sc.clone().with_overrides(None, None, Some(99), None).unwrap();
    let a = run_pipeline(&sc).unwrap();
    let b = run_pipeline(&other).unwrap();
    assert_eq!(a.spectrum.as_ref().unwrap().zeros.len(), b.spectrum.as_ref().unwrap().zeros.len());
    assert_eq!(a.estimate("lrg").unwrap().left, b.estimate("lrg").unwrap().left);
    assert_ne!(a.estimate("biorthogonality").unwrap().values, b.estimate("biorthogonality").unwrap().values);
    assert_ne!(a.estimate("weighted_g_integral").unwrap().left, b.estimate("weighted_g_integral").unwrap().left);
}

#[test]
fn n_one_is_a_validation_error() {
    let err = builtin("S1").unwrap().with_overrides(Some(1), None, None, None).unwrap_err();
    match err {
        HarnessError::Validation(v) => assert!(v.iter().any(|m| m.starts_with("model.n")), "{v:?}"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn table_length_mismatch_names_the_field() {
    let sc = small(VectorSpec::Table { re: vec![1.0; 7], im: vec![] });
    match sc.validate().unwrap_err() {
        HarnessError::Validation(v) => assert!(v.iter().any(|m| m.starts_with("model.g.re")), "{v:?}"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn unknown_fields_are_parse_errors_with_position() {
    let text = "{\n  \"schema_version\": 1,\n  \"name\": \"x\",\n  \"colour\": 3\n}";
    match Scenario::from_json(text).unwrap_err() {
        HarnessError::Parse { line, .. } => assert_eq!(line, 4),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn builtins_round_trip_through_json() {
    for name in ["S1", "S2", "S3", "S4"] {
        let sc = builtin(name).unwrap();
        let text = serde_json::to_string(&sc).unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
    assert!(matches!(load_scenario("builtin:S9"), Err(HarnessError::UnknownBuiltin(_))));
    assert!(load_scenario("/nonexistent/scenario.json").unwrap_err().is_io());
}

#[test]
fn scenario_file_loads_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sc.json");
    let text = r#"{
        "schema_version": 1,
        "name": "gauss",
        "window_r": 10,
        "model": {"type": "operator", "a": 2, "n": 64,
                  "f": {"type": "one"},
                  "g": {"type": "gaussian", "center": 1.0, "width": 0.3}}
    }"#;
    std::fs::write(&path, text).unwrap();
    let sc = load_scenario(path.to_str().unwrap()).unwrap();
    assert_eq!(sc.seed, 7);
    assert_eq!(sc.strip_c, 1.0);
    assert_eq!(sc.probes.lrg_columns, 41);
    assert_eq!(sc.spectrum_window().re_max, 35.0);
}

#[test]
fn s2_and_s4_verdicts() {
    let s2 = run_pipeline(&builtin("S2").unwrap()).unwrap();
    assert_eq!(verdict(&s2, "frame_kadec_0.1"), Verdict::Stable);
    let s4 = run_pipeline(&builtin("S4").unwrap()).unwrap();
    assert_eq!(verdict(&s4, "a2_power_0.5"), Verdict::Stable);
    assert_eq!(verdict(&s4, "a2_power_1.5"), Verdict::Growing);
    assert_eq!(verdict(&s4, "a2_one_plus_x_sq"), Verdict::Growing);
    assert_eq!(verdict(&s4, "integrability_power_0.5"), Verdict::Pass);
}

#[test]
fn emit_writes_requested_formats() {
    let rep = run_pipeline(&small(VectorSpec::One)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit(&rep, Format::Both, dir.path()).unwrap();
    let names: BTreeSet<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["report.json", "spectrum.csv", "estimates.csv", "trace_w_sq.csv", "trace_w_star_sq.csv", "trace_W_sq.csv"] {
        assert!(names.contains(n), "{n} missing from {names:?}");
    }
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let last_key = text.rfind("\n  \"").unwrap();
    assert!(text[last_key..].starts_with("\n  \"timestamp\""));
    serde_json::from_str::<serde_json::Value>(&text).unwrap();
    let spectrum = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(spectrum.lines().count(), 1 + rep.spectrum.as_ref().unwrap().count);

    let only_json = tempfile::tempdir().unwrap();
    assert_eq!(emit(&rep, Format::Json, only_json.path()).unwrap().len(), 1);
}
