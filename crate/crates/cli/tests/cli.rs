use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_commute")).args(args).output().expect("binary runs")
}

fn config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const ER: &str = r#"{"name": "er-small", "scenario": {"kind": "er", "p": 0.3}, "n_list": [40, 60], "pairs_per_graph": 5}"#;

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_edge_list_and_points() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        r#"{"name": "knn", "scenario": {"kind": "knn_sweep", "dim": 2, "k": 6}, "n_list": [50]}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["gen", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::metadata(out.join("graph.txt")).unwrap().len() > 0);
    let points = std::fs::read_to_string(out.join("points.txt")).unwrap();
    assert!(points.lines().filter(|l| !l.starts_with('#')).count() >= 50);
}

#[test]
fn metrics_and_bounds_cover_requested_pairs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), ER);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(run(&["metrics", "--config", &cfg, "--out", out_s]).status.success());
    assert_eq!(json(&out.join("metrics.json"))["pairs"].as_array().unwrap().len(), 5);
    assert!(run(&["bounds", "--config", &cfg, "--out", out_s]).status.success());
    let b = json(&out.join("bounds.json"));
    assert_eq!(b["reports"].as_array().unwrap().len(), 5);
    assert_eq!(b["violations"], 0);
}

#[test]
fn seed_override_changes_the_graph() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), ER);
    let read = |seed: &str| {
        let out = dir.path().join(seed);
        assert!(run(&["gen", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]).status.success());
        std::fs::read(out.join("graph.txt")).unwrap()
    };
    assert_eq!(read("3"), read("3"));
    assert_ne!(read("3"), read("4"));
}

#[test]
fn sweep_writes_all_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), ER);
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(csv.starts_with("# schema=1"));
    assert!(std::fs::read_to_string(out.join("deviation.svg")).unwrap().contains("<svg"));
    assert_eq!(json(&out.join("summary.json"))["per_n"].as_array().unwrap().len(), 2);
}

#[test]
fn report_on_gaussian_graph() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        r#"{"name": "deg", "scenario": {"kind": "degeneracy", "dim": 3, "bandwidth": 0.3}, "n_list": [120]}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["report", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&out.join("degeneracy.json"));
    assert_eq!(rep["n"], 120);
    assert!(rep["approx_nn_fraction"].as_f64().unwrap() > 0.9);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), r#"{"name": "bad", "scenario": {"kind": "er", "p": 0.3}, "n_list": [60, 40]}"#);
    let o = run(&["gen", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unsatisfiable_precondition_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        r#"{"name": "sep", "scenario": {"kind": "eps_sweep", "dim": 2, "c": 3.0, "separation": 100.0, "pilot_seeds": 2}, "n_list": [100]}"#,
    );
    let o = run(&["sweep", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
