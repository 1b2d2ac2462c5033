use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn ltasep(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ltasep"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn homogeneous(n: usize, ell: u32, alpha: f64, beta: f64) -> Value {
    serde_json::json!({
        "n_sites": n, "ell": ell, "alpha": alpha, "beta": beta,
        "rates": {"source": "generator", "function": {"kind": "constant", "value": 1.0}}
    })
}

#[test]
fn theory_mode_reports_low_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "theory.json", &serde_json::json!({"mode": "theory", "model": homogeneous(100, 1, 0.2, 0.7)}));
    let out = dir.path().join("out");
    let o = ltasep(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(out.join("phase_report.json"));
    assert_eq!(report["phase"], "LD_I");
    assert!((report["j_c"].as_f64().unwrap() - 0.16).abs() < 1e-12);
    let csv = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(csv.starts_with("x,rho,branch\n"));
    assert_eq!(csv.lines().count(), 101);
    assert!(out.join("run.json").exists());
}

#[test]
fn simulate_output_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        &serde_json::json!({
            "mode": "simulate", "seed": 11, "model": homogeneous(20, 2, 0.3, 0.6),
            "simulate": {"burn_in_events": 1000, "sample_events": 20000, "replicas": 4}
        }),
    );
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(ltasep(&cfg, &a, &["--workers", "1"]).status.success());
    assert!(ltasep(&cfg, &b, &["--workers", "3"]).status.success());
    assert!(ltasep(&cfg, &c, &["--workers", "2", "--seed", "12"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("simulation.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(std::fs::read(a.join("simulation.json")).unwrap(), std::fs::read(b.join("simulation.json")).unwrap());
    let meta = read_json(a.join("simulation.json"));
    assert_eq!(meta["seeds"].as_array().unwrap().len(), 4);
}

#[test]
fn phase_scan_on_a_piecewise_linear_profile() {
    let dir = tempfile::tempdir().unwrap();
    // piecewise-linear rates with lambda0 = 0.9, lambda1 = 0.3 and lambda_min = 0.1
    let values: Vec<f64> = (0..=40).map(|k| if k <= 20 { 0.9 - 0.04 * k as f64 } else { 0.1 + 0.01 * (k - 20) as f64 }).collect();
    let cfg = write_config(
        dir.path(),
        "scan.json",
        &serde_json::json!({
            "mode": "phase-scan",
            "model": {"ell": 10, "rates": {"source": "inline", "values": values}},
            "phase_scan": {"alpha": {"min": 1e-3, "max": 0.05, "points": 50, "log": true},
                           "beta": {"min": 1e-3, "max": 0.05, "points": 50, "log": true}}
        }),
    );
    let out = dir.path().join("out");
    let o = ltasep(&cfg, &out, &["--workers", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = read_json(out.join("phase_lines.json"));
    assert!((lines["alpha_star"].as_f64().unwrap() - 6.1706e-3).abs() < 1e-7);
    assert!((lines["beta_star"].as_f64().unwrap() - 7.1894e-3).abs() < 1e-7);
    let mut rdr = csv::Reader::from_path(out.join("phase_scan.csv")).unwrap();
    let mut phases = std::collections::BTreeSet::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (a, b): (f64, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        let phase = rec[2].to_string();
        if a > 6.18e-3 && b > 7.2e-3 {
            assert_eq!(phase, "MC");
        }
        phases.insert(phase.chars().take(2).collect::<String>());
        rows += 1;
    }
    assert_eq!(rows, 2500);
    assert_eq!(phases.into_iter().collect::<Vec<_>>(), vec!["HD", "LD", "MC"]);
}

#[test]
fn compare_summary_is_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cmp.json",
        &serde_json::json!({
            "mode": "compare", "seed": 3, "model": homogeneous(60, 1, 0.2, 0.7),
            "simulate": {"burn_in_events": 20000, "sample_events": 400000}
        }),
    );
    let out = dir.path().join("out");
    let o = ltasep(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(out.join("compare_summary.json"));
    let mut rdr = csv::Reader::from_path(out.join("compare.csv")).unwrap();
    let (mut sum, mut count) = (0.0, 0);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[1].parse().unwrap();
        let sim: f64 = rec[2].parse().unwrap();
        let theory: f64 = rec[4].parse().unwrap();
        let diff: f64 = rec[6].parse().unwrap();
        assert_eq!(diff, (sim - theory).abs());
        if (0.05..=0.95).contains(&x) {
            sum += diff;
            count += 1;
        }
    }
    let mae = summary["mae_bulk"].as_f64().unwrap();
    assert!((mae - sum / count as f64).abs() < 1e-15);
    assert!(mae < 0.02, "{mae}");
    assert_eq!(summary["mae_bulk_block"].as_f64().unwrap(), mae);
    assert_eq!(summary["phase"], "LD_I");
}

#[test]
fn infer_mode_reads_a_density_csv() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("density.csv");
    let mut text = String::from("site,density\n");
    for k in 1..=30 {
        text.push_str(&format!("{k},0.2\n"));
    }
    std::fs::write(&profile, text).unwrap();
    let cfg = write_config(
        dir.path(),
        "infer.json",
        &serde_json::json!({"mode": "infer", "infer": {"profile": "density.csv", "ell": 1, "anchor": 5}}),
    );
    let out = dir.path().join("out");
    let o = ltasep(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(out.join("inference.json"));
    assert!((r["j_estimate"].as_f64().unwrap() - 0.16).abs() < 1e-12);
    assert!((r["alpha_estimate"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!((r["beta_estimate"].as_f64().unwrap() - 0.8).abs() < 1e-12);
    let csv = std::fs::read_to_string(out.join("inference.csv")).unwrap();
    assert!(csv.starts_with("x,lambda_estimate,lambda_naive,reliability_flag\n"));
}

#[test]
fn pde_mode_and_non_convergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(
        dir.path(),
        "pde.json",
        &serde_json::json!({"mode": "pde", "model": homogeneous(50, 1, 0.2, 0.7), "pde": {"cells": 100}}),
    );
    let out = dir.path().join("out");
    let o = ltasep(&ok, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_json(out.join("pde_summary.json"));
    assert!((summary["j"].as_f64().unwrap() - 0.16).abs() < 1e-9);

    let stuck = write_config(
        dir.path(),
        "stuck.json",
        &serde_json::json!({"mode": "pde", "model": homogeneous(50, 1, 0.2, 0.7), "pde": {"cells": 100, "max_steps": 3}}),
    );
    let o = ltasep(&stuck, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "no_convergence");
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_mode = write_config(dir.path(), "a.json", &serde_json::json!({"mode": "nope"}));
    let missing = write_config(dir.path(), "b.json", &serde_json::json!({"mode": "simulate", "model": homogeneous(10, 1, 0.1, 0.1)}));
    let bad_rate = write_config(dir.path(), "c.json", &serde_json::json!({"mode": "theory", "model": homogeneous(10, 1, -0.1, 0.1)}));
    for cfg in [bad_mode, missing, bad_rate, dir.path().join("absent.json")] {
        let o = ltasep(&cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{}", cfg.display());
        let err: Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"], "config_error");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_ltasep")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
