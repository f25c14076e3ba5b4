//! End-to-end runs of the `gnnverify` binary on the bundled fixtures.

use std::path::PathBuf;
use std::process::{Command, Output};

use gnnverify::milp::parse_lp_summary;
use serde_json::Value;

fn fixture(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnnverify"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn toy(cmd: &str) -> Vec<String> {
    vec![
        cmd.into(),
        "--model".into(),
        fixture("toy/model.json"),
        "--graph".into(),
        fixture("toy/graph.json"),
        "--spec".into(),
        fixture("toy/spec.json"),
    ]
}

fn with(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn statuses(report: &Value) -> Vec<String> {
    report["tasks"]
        .as_array()
        .expect("tasks")
        .iter()
        .map(|t| t["status"].as_str().expect("status").to_string())
        .collect()
}

/// Drops wall-clock fields so that two reports can be compared.
fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !matches!(k.as_str(), "time_s" | "elapsed_ms"));
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[test]
fn verify_toy_targets() {
    let report = json(&run(&args(&with(toy("verify"), &["--targets", "0,1,2"]))));
    assert_eq!(statuses(&report), ["robust", "robust", "robust"]);
    assert_eq!(report["aggregate"]["robust"], 3);
    assert_eq!(report["command"], "verify");
    assert_eq!(report["inputs"]["model"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_budgets_are_robust_everywhere() {
    let report = json(&run(&args(&with(toy("verify"), &["--all", "--delta", "0", "--eps", "0"]))));
    assert!(statuses(&report).iter().all(|s| s == "robust"));
    assert_eq!(report["aggregate"]["tasks"], 6);
}

#[test]
fn oracle_agrees_with_verify() {
    for delta in ["1", "2", "3"] {
        let extra = ["--all", "--eps", "0", "--delta", delta];
        let verify = json(&run(&args(&with(toy("verify"), &extra))));
        let oracle = json(&run(&args(&with(toy("oracle"), &extra))));
        assert_eq!(statuses(&verify), statuses(&oracle), "delta {delta}");
    }
}

#[test]
fn predict_matches_labels() {
    let out = run(&[
        "predict",
        "--model",
        &fixture("toy/model.json"),
        "--graph",
        &fixture("toy/graph.json"),
    ]);
    let report = json(&out);
    let classes: Vec<u64> = report["predictions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["class"].as_u64().unwrap())
        .collect();
    assert_eq!(classes, [0, 0, 0, 1, 1, 1]);
}

#[test]
fn bounds_tightened_never_wider_than_plain() {
    for aggr in ["max", "mean", "sum"] {
        let out = run(&[
            "bounds",
            "--model",
            &fixture(&format!("fig1/model_{aggr}.json")),
            "--graph",
            &fixture("fig1/graph.json"),
            "--spec",
            &fixture("fig1/spec.json"),
            "--targets",
            "0",
        ]);
        let report = json(&out);
        for layer in report["layers"].as_array().unwrap() {
            let t = layer["tightened_max_gap"].as_f64().unwrap();
            let p = layer["plain_max_gap"].as_f64().unwrap();
            assert!(t <= p + 1e-12, "{aggr}: tightened {t} > plain {p}");
        }
    }
}

#[test]
fn export_lp_is_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("task.lp");
    let out = run(&args(&with(toy("export-lp"), &["--node", "0", "-o", path.to_str().unwrap()])));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let summary = parse_lp_summary(&text).expect("LP parses");
    assert!(summary.constraints > 0 && summary.bounds > 0 && summary.binaries > 0);
}

#[test]
fn attack_finds_nothing_on_robust_targets() {
    let report = json(&run(&args(&with(toy("attack"), &["--targets", "0,1,2", "--trials", "200"]))));
    assert!(statuses(&report).iter().all(|s| s != "nonrobust"));
}

#[test]
fn reports_are_reproducible() {
    let a = with(toy("verify"), &["--sample", "3", "--seed", "7", "--sweep", "0,1,2"]);
    let mut first = json(&run(&args(&a)));
    let mut second = json(&run(&args(&a)));
    strip_timing(&mut first);
    strip_timing(&mut second);
    assert_eq!(first, second);
    assert_eq!(first["targets"]["nodes"].as_array().unwrap().len(), 3);
    let sweep = first["sweep"].as_array().unwrap();
    let robust: Vec<u64> = sweep.iter().map(|p| p["aggregate"]["robust"].as_u64().unwrap()).collect();
    assert!(robust.windows(2).all(|w| w[1] <= w[0]), "{robust:?}");
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("model.json");
    std::fs::write(&bad, r#"{"layers": 1, "dims": [2], "aggr": "sum", "weights": []}"#).unwrap();
    let out = run(&[
        "verify",
        "--model",
        bad.to_str().unwrap(),
        "--graph",
        &fixture("toy/graph.json"),
        "--spec",
        &fixture("toy/spec.json"),
        "--all",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = run(&args(&with(toy("verify"), &["--targets", "99"])));
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["verify", "--model", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
}
