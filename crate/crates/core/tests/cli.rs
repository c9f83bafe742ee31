use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn problem(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn wpsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpsd")).args(args).output().expect("spawn wpsd")
}

fn run(cmd: &str, name: &str, extra: &[&str]) -> (i32, Value) {
    let path = problem(name);
    let mut args = vec![cmd, path.to_str().unwrap(), "--no-timestamp"];
    args.extend_from_slice(extra);
    let out = wpsd(&args);
    let code = out.status.code().unwrap();
    let report = if out.stdout.is_empty() { Value::Null } else { serde_json::from_slice(&out.stdout).unwrap() };
    (code, report)
}

fn task<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["tasks"].as_array().unwrap().iter().find(|t| t["task"] == name).unwrap()
}

#[test]
fn validate_circulant_passes() {
    let (code, r) = run("validate", "z3_circulant.json", &[]);
    assert_eq!(code, 0);
    assert_eq!(r["status"], "pass");
    assert_eq!(task(&r, "validate")["result"]["semigroup_violations"], serde_json::json!([]));
}

#[test]
fn broken_involution_is_violation() {
    let (code, r) = run("validate", "broken_involution.json", &[]);
    assert_eq!(code, 1);
    assert!(!task(&r, "validate")["result"]["semigroup_violations"].as_array().unwrap().is_empty());
}

#[test]
fn missing_source_is_input_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let path = problem("missing_source.json");
    let o = wpsd(&["validate", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("required"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_arguments_are_input_errors() {
    assert_eq!(wpsd(&["frobnicate", "x.json"]).status.code(), Some(3));
    assert_eq!(wpsd(&["validate"]).status.code(), Some(3));
    let path = problem("z3_circulant.json");
    assert_eq!(wpsd(&["validate", path.to_str().unwrap(), "--tol", "-1"]).status.code(), Some(3));
    assert_eq!(wpsd(&["--help"]).status.code(), Some(0));
}

#[test]
fn positivity_exit_codes() {
    let (code, _) = run("check-positivity", "scalar_psd.json", &[]);
    assert_eq!(code, 0);

    let (code, r) = run("check-positivity", "swap.json", &["--restarts", "1000"]);
    assert_eq!(code, 2);
    let res = &task(&r, "check-positivity")["result"];
    assert!(res["verdict"]["best_found"].as_f64().unwrap() >= -1e-9);
    assert!((res["strong"]["min_eig"].as_f64().unwrap() + 1.0).abs() <= 1e-9);

    let (code, r) = run("check-positivity", "scalar_indefinite.json", &[]);
    assert_eq!(code, 1);
    let res = &task(&r, "check-positivity")["result"];
    assert_eq!(res["witness_verified"], true);
    assert!(res["verdict"]["witness"]["value"].as_f64().unwrap() < 0.0);
}

#[test]
fn gns_instance_matches_fourier_oracle() {
    let (code, r) = run("all", "gns_z4.json", &[]);
    assert_eq!(code, 0);
    // phi = delta_0 has full Fourier support
    assert_eq!(task(&r, "decompose")["result"]["n"], 4);
    let rep = &task(&r, "represent")["result"]["representation"];
    for key in ["mult_defect", "star_defect", "intertwine_defect"] {
        assert!(rep[key].as_f64().unwrap() <= 1e-9);
    }
}

#[test]
fn idempotent_pair_bracket() {
    let (code, r) = run("bounds", "idempotent_pair.json", &[]);
    assert_eq!(code, 0);
    let e = &task(&r, "bounds")["result"]["estimates"][0];
    assert_eq!(e["element"], 1);
    assert!((e["lower"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert!((e["upper"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert_eq!(e["witness_verified"], true);
}

#[test]
fn factorize_z2() {
    let (code, r) = run("factorize", "factorize_z2.json", &[]);
    assert_eq!(code, 0);
    assert!(task(&r, "factorize")["result"]["residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn lift_reports_legend() {
    let (code, r) = run("lift", "operator_lift.json", &[]);
    assert_eq!(code, 0);
    let legend = task(&r, "lift")["result"]["legend"].as_array().unwrap().clone();
    assert_eq!(legend.len(), 4);
    assert_eq!(legend[3], serde_json::json!([1, 1]));
    let (code, r) = run("lift", "factorize_z2.json", &[]);
    assert_eq!(code, 0);
    assert_eq!(task(&r, "lift")["result"]["legend"].as_array().unwrap().len(), 2);
}

#[test]
fn lift_without_source_is_input_error() {
    let (code, r) = run("lift", "z3_circulant.json", &[]);
    assert_eq!(code, 3);
    assert!(r.is_null());
}

#[test]
fn all_runs_listed_tasks() {
    let (code, r) = run("all", "factorize_z2.json", &[]);
    assert_eq!(code, 0);
    let names: Vec<&str> = r["tasks"].as_array().unwrap().iter().map(|t| t["task"].as_str().unwrap()).collect();
    assert_eq!(names, ["validate", "check-positivity", "lift", "factorize"]);
}

#[test]
fn reports_are_byte_identical() {
    for name in ["z3_circulant.json", "swap.json", "operator_lift.json"] {
        let path = problem(name);
        let args = ["all", path.to_str().unwrap(), "--no-timestamp", "--seed", "11"];
        let a = wpsd(&args);
        let b = wpsd(&args);
        assert_eq!(a.stdout, b.stdout, "{name}");
        assert!(!String::from_utf8_lossy(&a.stdout).contains("elapsed_ms"));
    }
}

#[test]
fn timestamps_present_by_default() {
    let path = problem("scalar_psd.json");
    let o = wpsd(&["check-positivity", path.to_str().unwrap()]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["timestamp_unix"].as_u64().is_some());
    assert!(r["tasks"][0]["elapsed_ms"].as_f64().is_some());
}

#[test]
fn out_flag_writes_file_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let path = problem("z3_circulant.json");
    let o = wpsd(&[
        "all",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
        "--tol",
        "1e-6",
        "--no-timestamp",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["seed"], 5);
    assert_eq!(r["tolerances"]["report"], 1e-6);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
