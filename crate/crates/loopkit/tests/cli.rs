//! End-to-end tests of the command-line binary: exit-code contract, output
//! reproducibility, and format round-trips.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_loopkit")
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn model_arg() -> String {
    fixtures().join("two_state.json").display().to_string()
}

fn spec_arg() -> String {
    fixtures().join("spec_two_state.json").display().to_string()
}

#[test]
fn check_passes_on_reference_chain() {
    let out = run(&["check", "--model", &model_arg(), "--no-timestamp"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("resolvent"));
    assert!(text.contains("# seed: 42"));
    assert!(!text.contains("false"));
}

#[test]
fn moments_reports_reference_value() {
    let out = run(&["moments", "--model", &model_arg(), "--spec", &spec_arg(), "--no-timestamp"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mu_line = text.lines().find(|l| l.starts_with("mu,")).unwrap();
    let value: f64 = mu_line.split(',').nth(3).unwrap().parse().unwrap();
    assert!((value - 1.0 / 9.0).abs() < 1e-14);
}

#[test]
fn missing_model_is_usage_error() {
    let out = run(&["check"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["check", "--model", "/nonexistent/path.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_model_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"type\": \"nope\"}").unwrap();
    let out = run(&["check", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_transient_model_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("recurrent.json");
    std::fs::write(
        &bad,
        r#"{"type":"finite_chain","states":["a","b"],"m":{"a":1.0,"b":1.0},
            "rates":[["a","b",1.0],["b","a",1.0]],"kill":{}}"#,
    )
    .unwrap();
    let out = run(&["check", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not transient"));
}

#[test]
fn missing_spec_section_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "{}").unwrap();
    let out = run(&["moments", "--model", &model_arg(), "--spec", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn broken_invariance_mutant_is_verdict_failure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("broken.json");
    std::fs::write(
        &spec,
        r#"{"invariance":{
            "functions":[{"type":"finite","values":{"a":1.0}},
                         {"type":"finite","values":{"b":1.0}}],
            "times":[0.25,0.8],"r":0.37,"broken_factor":0.5}}"#,
    )
    .unwrap();
    let out = run(&["invariance", "--model", &model_arg(), "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_csv_is_byte_identical_across_runs() {
    let args = [
        "simulate",
        "--model",
        &model_arg(),
        "--spec",
        &spec_arg(),
        "--seed",
        "7",
        "--samples",
        "20000",
        "--no-timestamp",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn different_seeds_differ() {
    let base = |seed: &str| {
        run(&[
            "simulate",
            "--model",
            &model_arg(),
            "--spec",
            &spec_arg(),
            "--seed",
            seed,
            "--samples",
            "20000",
            "--no-timestamp",
        ])
        .stdout
    };
    assert_ne!(base("7"), base("8"));
}

#[test]
fn json_output_reparses() {
    let out = run(&[
        "moments",
        "--model",
        &model_arg(),
        "--spec",
        &spec_arg(),
        "--no-timestamp",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["header"]["command"], "moments");
    assert!(doc["rows"].as_array().unwrap().len() >= 2);
}

#[test]
fn threads_flag_does_not_change_results() {
    let mk = |threads: &str| {
        run(&[
            "simulate",
            "--model",
            &model_arg(),
            "--spec",
            &spec_arg(),
            "--seed",
            "3",
            "--samples",
            "20000",
            "--no-timestamp",
            "--threads",
            threads,
        ])
        .stdout
    };
    assert_eq!(mk("1"), mk("4"));
}

#[test]
fn timestamp_header_present_by_default() {
    let out = run(&["moments", "--model", &model_arg(), "--spec", &spec_arg()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("# timestamp:"));
}
