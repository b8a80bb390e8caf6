use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_martingality")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON report")
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("martingality-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn catalog_lists_every_preset() {
    let out = run(&["catalog"]);
    assert!(out.status.success());
    let names: Vec<String> = json(&out)["estimates"]["presets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap().to_string())
        .collect();
    for n in ["brownian-linear", "brownian-cubic", "poisson-U4", "running-sup-16"] {
        assert!(names.iter().any(|x| x == n), "{n} missing");
    }
}

#[test]
fn classify_reproduces_the_catalog_verdicts() {
    for (preset, expected) in [("brownian-zero", "TrueMartingale"), ("brownian-linear", "TrueMartingale"), ("brownian-cubic", "StrictLocal")] {
        let out = run(&["classify", "--preset", preset]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report = json(&out);
        assert_eq!(report["command"], "classify");
        assert_eq!(report["verdict"]["classification"], expected, "{preset}");
        assert_eq!(report["resolved_config"]["mc"]["seed"], 2024);
    }
}

#[test]
fn invalid_config_exits_1_with_field_path() {
    let path = tmp("bad.json");
    std::fs::write(&path, r#"{"preset": "brownian-linear", "mc": {"dt_max": "small"}}"#).unwrap();
    let out = run(&["deficit", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("mc.dt_max"), "{err}");

    let out = run(&["classify", "--preset", "no-such-model"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["hilbert", "--preset", "brownian-linear"]);
    assert_eq!(out.status.code(), Some(1), "missing sections are validation errors");
}

#[test]
fn zero_exponent_deficit_csv_is_all_ones() {
    let out = run(&["deficit", "--preset", "brownian-zero", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,cap,time,survival,exit_probability,std_error"));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(&cells[3..], ["1", "0", "0"], "{line}");
    }
}

#[test]
fn report_reproduces_from_its_resolved_config() {
    let out = run(&["deficit", "--preset", "brownian-linear", "--paths", "400", "--seed", "5"]);
    assert!(out.status.success());
    let report = json(&out);
    let path = tmp("resolved.json");
    std::fs::write(&path, serde_json::to_string(&report["resolved_config"]).unwrap()).unwrap();
    let again = run(&["deficit", "--config", path.to_str().unwrap()]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["ensemble", "--preset", "cev-strict", "--paths", "300", "--format", "csv"];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let four = run(&[&args[..], &["--threads", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn output_flag_writes_file_and_prints_summary() {
    let path = tmp("novikov.json");
    let out = run(&["novikov", "--preset", "brownian-linear", "--paths", "256", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["command"], "novikov");
    assert!(String::from_utf8_lossy(&out.stdout).contains("running_mean"));
}

#[test]
fn jump_stopped_means_stay_at_one_on_poisson_u4() {
    let out = run(&["jump", "--preset", "poisson-U4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    for row in report["estimates"]["stopped"].as_array().unwrap() {
        let e = &row["estimate"];
        let (m, se) = (e["mean"].as_f64().unwrap(), e["std_error"].as_f64().unwrap());
        assert!(se > 0.0, "level {} is degenerate", row["level"]);
        assert!((m - 1.0).abs() <= 3.0 * se, "level {}: {m} ± {se}", row["level"]);
    }
    assert_eq!(report["estimates"]["compensator"]["pass"], true);
    assert_eq!(report["verdict"]["classification"], "TrueMartingale");
}

#[test]
fn csv_is_rejected_for_classify() {
    let out = run(&["classify", "--preset", "brownian-linear", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(1));
}
