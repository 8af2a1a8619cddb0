use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

const SPACE3: &str = r#"{"id": "3", "kronecker": [1, 2], "ma_cap": 0}"#;

fn truth() -> Value {
    json!({
        "model": {
            "kronecker": [1, 2],
            "ma_cap": 0,
            "theta": [-1.0, -2.0, 1.0, -2.0, -3.0],
            "sigma_chol": [0.6892640948561884, -0.2353584714143082, 0.5616087898417431]
        },
        "driver": {"kind": "brownian"}
    })
}

fn write_config(dir: &Path, name: &str, value: &Value) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn mcarma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcarma")).args(args).output().unwrap()
}

fn run(command: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    mcarma(&args)
}

fn simulate_config(n: usize, replications: usize, out: &str) -> Value {
    json!({"schema_version": 1, "true_model": truth(), "n": n, "replications": replications, "master_seed": 9, "out": out})
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.json", &simulate_config(300, 2, "a"));
    assert!(run("simulate", &cfg, &[]).status.success());
    let other = dir.path().join("b");
    assert!(run("simulate", &cfg, &["--out", other.to_str().unwrap()]).status.success());
    let first = fs::read(dir.path().join("a/rep_0000.csv")).unwrap();
    assert_eq!(first, fs::read(other.join("rep_0000.csv")).unwrap());
    assert_ne!(first, fs::read(dir.path().join("a/rep_0001.csv")).unwrap());
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().next(), Some("t,y1,y2"));
    assert_eq!(text.lines().count(), 301);
    let reseeded = dir.path().join("c");
    assert!(run("simulate", &cfg, &["--out", reseeded.to_str().unwrap(), "--seed", "10"]).status.success());
    assert_ne!(first, fs::read(reseeded.join("rep_0000.csv")).unwrap());
}

fn fit_config(data: &Path) -> Value {
    json!({
        "schema_version": 1,
        "true_model": truth(),
        "warm_start_truth": true,
        "space": serde_json::from_str::<Value>(SPACE3).unwrap(),
        "data": data,
        "fit": {"n_starts": 0, "max_evals": 4000},
        "out": "fit"
    })
}

#[test]
fn simulate_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = write_config(dir.path(), "sim.json", &simulate_config(500, 1, "sim"));
    assert!(run("simulate", &sim, &[]).status.success());
    let fit = write_config(dir.path(), "fit.json", &fit_config(Path::new("sim/rep_0000.csv")));
    let output = run("fit", &fit, &["--dump-filter"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit/fit.json")).unwrap()).unwrap();
    assert_eq!(report["n_obs"], 500);
    assert_eq!(report["theta_hat"].as_array().unwrap().len(), 8);
    assert_eq!(report["h_hat"].as_array().unwrap().len(), 8);
    let filter: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit/filter.json")).unwrap()).unwrap();
    assert_eq!(filter["innovation_cov"].as_array().unwrap().len(), 2);
    assert!(filter["closed_loop_spectral_radius"].as_f64().unwrap() < 1.0);
}

#[test]
fn empty_data_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "t,y1,y2\n").unwrap();
    let cfg = write_config(dir.path(), "fit.json", &fit_config(Path::new("empty.csv")));
    let output = run("fit", &cfg, &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_row_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "t,y1,y2\n1,0.5,0.1\n2,NaN,0.3\n3,0.2,0.1\n").unwrap();
    let cfg = write_config(dir.path(), "fit.json", &fit_config(Path::new("bad.csv")));
    let output = run("fit", &cfg, &[]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn invalid_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut value = simulate_config(100, 1, "x");
    value["unknown_field"] = json!(1);
    let cfg = write_config(dir.path(), "bad.json", &value);
    assert_eq!(run("simulate", &cfg, &[]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "ok.json", &simulate_config(100, 1, "x"));
    assert_eq!(run("replicate", &cfg, &["--threads", "0"]).status.code(), Some(2));
    assert_eq!(run("simulate", &dir.path().join("missing.json"), &[]).status.code(), Some(2));
}

fn replicate_config(replications: usize) -> Value {
    json!({
        "schema_version": 1,
        "true_model": truth(),
        "candidate_spaces": [
            {"id": "2", "kronecker": [1, 2], "ma_cap": 1},
            serde_json::from_str::<Value>(SPACE3).unwrap()
        ],
        "criteria": ["CAIC", "BIC"],
        "n": 400,
        "replications": replications,
        "master_seed": 3,
        "warm_start_truth": true,
        "fit": {"n_starts": 0, "max_evals": 4000, "covariance": false},
        "out": "rep"
    })
}

fn counts(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("rep/counts.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn one_replication_counts_a_single_choice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rep.json", &replicate_config(1));
    let output = run("replicate", &cfg, &[]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let table = counts(dir.path());
    assert_eq!(table[0], vec!["space", "CAIC", "BIC"]);
    assert_eq!(table.len(), 4);
    for col in 1..3 {
        let values: Vec<usize> = table[1..].iter().map(|row| row[col].parse().unwrap()).collect();
        assert_eq!(values.iter().sum::<usize>(), 1);
        assert!(values.iter().all(|v| *v <= 1));
    }
}

#[test]
fn counts_add_up_to_the_replications() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rep.json", &replicate_config(3));
    let output = run("replicate", &cfg, &["--threads", "2"]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep/counts.json")).unwrap()).unwrap();
    let failed = summary["failed_replications"].as_array().unwrap().len();
    assert_eq!(output.status.code(), Some(if failed == 0 { 0 } else { 4 }));
    let table = counts(dir.path());
    for col in 1..3 {
        let chosen: usize = table[1..3].iter().map(|row| row[col].parse::<usize>().unwrap()).sum();
        let failures: usize = table[3][col].parse().unwrap();
        assert_eq!(chosen + failures, 3);
    }
    let outcomes = fs::read_to_string(dir.path().join("rep/replications.csv")).unwrap();
    assert_eq!(outcomes.lines().count(), 4);
}
