//! Exit codes and report contents of the `fidforest` binary.

use std::path::Path;
use std::process::{Command, Output};

fn fidforest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fidforest"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_data(dir: &Path) {
    let mut text = String::from("a,b,y\n");
    for i in 0..60 {
        let a = (i as f64 * 0.618).fract();
        let b = (i as f64 * 0.377).fract();
        text.push_str(&format!("{a},{b},{}\n", 2.0 * a + (i % 7) as f64 * 0.1));
    }
    text.push_str("0.5,,1\n");
    std::fs::write(dir.join("d.csv"), text).unwrap();
}

#[test]
fn simulate_writes_one_coverage_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = fidforest(
        dir.path(),
        &[
            "simulate",
            "--function",
            "cosine",
            "--n",
            "200",
            "--p",
            "2",
            "--reps",
            "50",
            "--level",
            "0.95",
            "--seed",
            "1",
            "--trees",
            "50",
            "--draws",
            "100",
            "--out",
            "r.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["records"].as_array().unwrap().len(), 1);
    let record = &report["records"][0];
    assert_eq!(record["target"], "conditional-mean");
    assert_eq!(record["reps"], 50);
    assert!(report["mc_stderr"].is_number());
    assert!(report["runtime_ms"].is_null());
    assert_eq!(report["config"]["master_seed"], 1);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    for args in [
        vec!["predict", "--data", "d.csv"],
        vec!["frobnicate"],
        vec![
            "simulate",
            "--function",
            "cosine",
            "--n",
            "50",
            "--p",
            "2",
            "--bogus",
        ],
        vec!["simulate", "--function", "sine", "--n", "50", "--p", "2"],
        vec![
            "simulate",
            "--function",
            "cosine",
            "--n",
            "50",
            "--p",
            "2",
            "--level",
            "1.5",
        ],
        vec!["simulate", "--function", "xor", "--n", "50", "--p", "2"],
    ] {
        let out = fidforest(dir.path(), &args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    for args in [
        vec![
            "fit",
            "--data",
            "missing.csv",
            "--target",
            "y",
            "--model",
            "m.json",
        ],
        vec![
            "fit", "--data", "d.csv", "--target", "nope", "--model", "m.json",
        ],
        vec!["predict", "--model", "missing.json", "--data", "d.csv"],
    ] {
        let out = fidforest(dir.path(), &args);
        assert_eq!(
            out.status.code(),
            Some(3),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn numeric_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    // A constant response: every tree fits exactly, so none can be weighted.
    let mut text = String::from("a,y\n");
    for i in 0..40 {
        text.push_str(&format!("{},3\n", i as f64 / 40.0));
    }
    std::fs::write(dir.path().join("flat.csv"), text).unwrap();
    let out = fidforest(
        dir.path(),
        &[
            "fit", "--data", "flat.csv", "--target", "y", "--model", "m.json", "--trees", "10",
            "--draws", "10",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn fit_then_predict_reports_every_complete_row() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let fit = fidforest(
        dir.path(),
        &[
            "fit", "--data", "d.csv", "--target", "y", "--model", "m.json", "--trees", "40",
            "--draws", "80",
        ],
    );
    assert!(
        fit.status.success(),
        "{}",
        String::from_utf8_lossy(&fit.stderr)
    );
    let fit_report: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert_eq!(fit_report["records"][0]["dropped_rows"], 1);
    assert_eq!(fit_report["records"][0]["rows"], 60);

    let predict = fidforest(
        dir.path(),
        &[
            "predict", "--model", "m.json", "--data", "d.csv", "--level", "0.8", "--format", "csv",
        ],
    );
    assert!(
        predict.status.success(),
        "{}",
        String::from_utf8_lossy(&predict.stderr)
    );
    let text = String::from_utf8(predict.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "schema_version,row,level,point,ci_lower,ci_upper,pi_lower,pi_upper"
    );
    assert_eq!(lines.count(), 60);
}

#[test]
fn histogram_and_concentration_reports() {
    let dir = tempfile::tempdir().unwrap();
    let hist = fidforest(
        dir.path(),
        &[
            "sigma-hist",
            "--function",
            "xor",
            "--n",
            "100",
            "--p",
            "5",
            "--bins",
            "12",
            "--trees",
            "40",
            "--draws",
            "150",
        ],
    );
    assert!(hist.status.success());
    let report: serde_json::Value = serde_json::from_slice(&hist.stdout).unwrap();
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 13);
    let total: u64 = records[..12]
        .iter()
        .map(|r| r["count"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 150);
    assert_eq!(records[12]["kind"], "summary");

    let conc = fidforest(
        dir.path(),
        &["concentrate", "--sizes", "100,400", "--seeds", "2"],
    );
    assert!(conc.status.success());
    let report: serde_json::Value = serde_json::from_slice(&conc.stdout).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 4);
}
