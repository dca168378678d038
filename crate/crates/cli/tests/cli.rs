use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn driftbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftbench")).args(args).output().unwrap()
}

fn simulate_to(path: &Path, seed: &str) -> Output {
    driftbench(&[
        "simulate", "--n", "1024", "--delta", "0.01", "--seed", seed, "--substeps", "10", "--out",
        path.to_str().unwrap(),
    ])
}

#[test]
fn simulate_writes_n_plus_one_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    assert!(simulate_to(&a, "7").status.success());
    assert!(simulate_to(&b, "7").status.success());
    assert!(simulate_to(&c, "8").status.success());
    let text = fs::read_to_string(&a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1026);
    assert!(lines[0].chars().any(|ch| ch.is_alphabetic()));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn simulate_reads_a_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(
        &model,
        r#"{"drift": {"type": "closed_form", "cos": [1.0]}, "sigma": {"type": "constant", "value": 0.5}}"#,
    )
    .unwrap();
    let out = dir.path().join("p.csv");
    let res = driftbench(&[
        "simulate", "--config", model.to_str().unwrap(), "--n", "200", "--delta", "0.05", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 202);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(driftbench(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(driftbench(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(driftbench(&["simulate", "--n", "10"]).status.code(), Some(1));
    assert_eq!(driftbench(&["--help"]).status.code(), Some(0));
}

#[test]
fn regime_guard_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let args = ["simulate", "--n", "100000", "--delta", "0.05", "--substeps", "1", "--out", out.to_str().unwrap()];
    let res = driftbench(&args);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("allow-out-of-regime"));
    let mut with = args.to_vec();
    with.push("--allow-out-of-regime");
    assert!(driftbench(&with).status.success());
}

#[test]
fn estimate_and_posterior_on_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.csv");
    assert!(simulate_to(&data, "3").status.success());
    let fit = dir.path().join("fit.json");
    let plot = dir.path().join("fit.svg");
    let res = driftbench(&[
        "estimate", "--data", data.to_str().unwrap(), "--level", "2", "--max-level", "6", "--out",
        fit.to_str().unwrap(), "--plot", plot.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(fit).unwrap()).unwrap();
    assert_eq!(json["metadata"]["l_n"], 2);
    assert!(fs::read_to_string(plot).unwrap().contains("<svg"));

    let chain = dir.path().join("chain.jsonl");
    let res = driftbench(&[
        "posterior", "--data", data.to_str().unwrap(), "--max-level", "6", "--cap", "4", "--iters", "600",
        "--burnin", "200", "--seed", "1", "--out", chain.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(chain).unwrap().lines().count(), 400);
    let summary: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(summary["draws"], 400);
}

#[test]
fn numerical_refusal_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.csv");
    let res = driftbench(&[
        "simulate", "--n", "40", "--delta", "0.05", "--out", data.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    // D = 64 coefficients from 40 observations
    let res = driftbench(&["estimate", "--data", data.to_str().unwrap(), "--level", "6", "--max-level", "6"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn rate_study_writes_report_with_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rate.json");
    fs::write(
        &cfg,
        r#"{"study": "rate", "n_grid": [512, 1024, 2048], "delta_rule": "n^(-0.6)", "reps": 2, "seed": 5,
            "substeps": 10, "max_level": 6}"#,
    )
    .unwrap();
    let out = dir.path().join("report");
    let res = driftbench(&[
        "study", "rate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--plots",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["slope"].is_f64());
    assert_eq!(report["study"], "rate");
    assert!(out.join("rate.svg").exists());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("estimator_rate_slope"));
}

#[test]
fn study_with_a_broken_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"study": "rate", "n_grid": [2048, 1024]}"#).unwrap();
    assert_eq!(driftbench(&["study", "rate", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(driftbench(&["study", "rate", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
}
