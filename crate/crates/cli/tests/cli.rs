use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_minmax-bounds"));
    c.env_remove("MINMAX_BOUNDS_TOL_PROFILE");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn minmax-bounds")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn schema_check(doc: &Value) {
    let schema: Value =
        serde_json::from_str(include_str!("../schema/report.schema.json")).expect("schema parses");
    let v = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn gen(dir: &Path, seed: &str) -> String {
    let path = dir.join(format!("inst{seed}.json"));
    let out = run(&["gen-random", "--n", "3", "--m", "1", "--l", "1", "--p", "4", "--seed", seed, "-o", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_random_is_deterministic() {
    let a = run(&["gen-random", "--n", "3", "--m", "2", "--l", "1", "--p", "4", "--seed", "7"]);
    let b = run(&["gen-random", "--n", "3", "--m", "2", "--l", "1", "--p", "4", "--seed", "7"]);
    let c = run(&["gen-random", "--n", "3", "--m", "2", "--l", "1", "--p", "4", "--seed", "8"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn generated_instance_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "3");
    let out = run(&["validate", &f, "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let doc = json(&out);
    schema_check(&doc);
    assert_eq!(doc["result"]["passed"], Value::Bool(true));
}

#[test]
fn validate_rejects_nan_entries() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "1");
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    doc["A"][0][0] = Value::String("NaN".into());
    let bad = dir.path().join("nan.json");
    std::fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = run(&["validate", bad.to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&out);
    schema_check(&err);
    assert_eq!(err["ok"], Value::Bool(false));
    assert_eq!(err["error"]["class"], "user");
    let line = String::from_utf8_lossy(&out.stderr);
    assert_eq!(line.trim_end().lines().count(), 1, "one diagnostic line: {line}");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["validate", "/nonexistent/file.json"]).status.code(), Some(1));
    assert_eq!(run(&["--sdp-tol", "5", "validate", "x.json"]).status.code(), Some(1));
    assert_eq!(run(&["--tol-profile", "bogus", "validate", "x.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "2");
    // γ below the instance's γ0.
    assert_eq!(run(&["bound", &f, "--gamma", "1e-3"]).status.code(), Some(1));
    assert_eq!(run(&["bound", &f, "--x0", "1,2"]).status.code(), Some(1));
    assert_eq!(run(&["bound", &f]).status.code(), Some(0));
}

#[test]
fn tolerance_profile_from_environment() {
    let out = bin().args(["validate", "x.json"]).env("MINMAX_BOUNDS_TOL_PROFILE", "bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "4");
    let out = bin().args(["hinf-gamma", &f]).env("MINMAX_BOUNDS_TOL_PROFILE", "strict").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bound_reports_are_schema_valid() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "5");
    for args in [
        vec!["hinf-gamma", f.as_str()],
        vec!["bound", f.as_str(), "--x0", "0.1,0,-0.2"],
        vec!["optimize", f.as_str(), "--rounds", "2"],
        vec!["verify", f.as_str(), "--x0", "0.1,0,0"],
        vec!["simulate", f.as_str(), "--x0", "0.1,0,0", "--all-adversaries"],
    ] {
        let mut a = args.clone();
        a.extend(["--format", "json"]);
        let out = run(&a);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        schema_check(&json(&out));
    }
}

#[test]
fn bound_json_carries_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "6");
    let doc = json(&run(&["bound", &f, "--format", "json"]));
    let c = &doc["result"]["certificate"];
    assert_eq!(c["provenance"], "basic");
    let value = c["value"].as_f64().unwrap();
    let trace = c["trace"].as_f64().unwrap();
    assert!((value - trace).abs() <= 1e-12 * trace.abs());
    assert_eq!(c["P"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_csv_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "7");
    let out = run(&["simulate", &f, "--x0", "0.5,0,0", "--horizon", "25", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x0,x1,x2,u0,w0,stage_cost,discounted_sum");
    // 25 steps plus the terminal state.
    assert_eq!(lines.count(), 26);
}

#[test]
fn csv_key_value_rows() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "8");
    let out = run(&["hinf-gamma", &f, "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.lines().any(|l| l.starts_with("gamma_star,")));
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = gen(dir.path(), "9");
    let dest = dir.path().join("report.json");
    let out = run(&["hinf-gamma", &f, "--format", "json", "--output", dest.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dest).unwrap()).unwrap();
    schema_check(&doc);
}

#[test]
fn reference_example_reports_both_bounds() {
    let out = run(&["paper-example", "--rounds", "2", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    schema_check(&doc);
    assert_eq!(doc["command"], "reference-example");
    let r = &doc["result"];
    let basic = r["basic"]["value"].as_f64().unwrap();
    let opt = r["optimized"]["value"].as_f64().unwrap();
    assert!((basic - 3.526).abs() / 3.526 < 0.01, "basic {basic}");
    assert!(opt >= basic - 1e-9 * basic);
    assert_eq!(r["u_max"].as_f64(), Some(1.0));
    assert!(r["gamma0"].as_f64().unwrap() > r["gamma_star"].as_f64().unwrap());
    assert!(r["log"]["records"].as_array().is_some_and(|v| !v.is_empty()));
}
