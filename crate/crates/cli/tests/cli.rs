use std::path::Path;
use std::process::{Command, Output};

use gtr_core::montecarlo::TransitionEstimate;
use gtr_core::robustness::{DiracLimitReport, RobustnessReport};
use gtr_core::universal::UniversalTable;
use serde_json::Value;

fn gtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtr")).args(args).env_remove("GTR_THREADS").output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = gtr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.json");
    let o = run_ok(&[
        "simulate", "--state", "0.2,0.3,0.5", "--density", "uniform", "--samples", "200000", "--seed", "7",
        "--format", "json", "--out", out.to_str().unwrap(),
    ]);
    let summary = String::from_utf8(o.stdout).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("outcome 1:"));

    let doc = read_json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "simulate");
    assert_eq!(doc["config"]["seed"], 7);
    let est: TransitionEstimate = serde_json::from_value(doc["result"].clone()).unwrap();
    assert_eq!(est.n_samples, 200_000);
    for (p, x) in est.probabilities.iter().zip([0.2, 0.3, 0.5]) {
        assert!((p - x).abs() < 0.005);
    }
    // Re-serialising the parsed result reproduces it.
    assert_eq!(serde_json::to_value(&est).unwrap(), doc["result"]);
}

#[test]
fn simulate_csv_layout() {
    let o = run_ok(&["simulate", "--state", "0.5,0.5", "--samples", "1000", "--seed", "1"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "outcome_index,count,p_hat,ci_lo,ci_hi");
    assert_eq!(lines.len(), 3);
    let p_hat = lines[1].split(',').nth(2).unwrap();
    // 17 significant digits in scientific notation.
    assert_eq!(p_hat.split('e').next().unwrap().replace('.', "").len(), 17);
    assert_eq!(String::from_utf8(o.stderr).unwrap().lines().count(), 2);
}

#[test]
fn config_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "command = \"robustness\"\nseed = 11\nformat = \"json\"\nstate = [0.2, 0.4, 0.4]\n\
         delta = [0.01, -0.01, 0.0]\nsamples = 100000\nepsilons = [0.5, 1.0]\n",
    )
    .unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    run_ok(&["--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--threads", "1"]);
    run_ok(&["--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let report: RobustnessReport = serde_json::from_value(read_json(&a)["result"].clone()).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!((report.rows[1].analytic.unwrap() - 0.01).abs() < 1e-12);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("u.toml");
    std::fs::write(&cfg, "command = \"universal-exact\"\ncells = 10\nposition = 2\n").unwrap();
    let from_file = run_ok(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(String::from_utf8(from_file.stdout).unwrap(), "position,average,uniform,equal\n2,4/5,4/5,true\n");
    let o = run_ok(&["--config", cfg.to_str().unwrap(), "universal-exact", "--position", "7", "--format", "json"]);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let table: UniversalTable = serde_json::from_value(doc["result"].clone()).unwrap();
    assert_eq!(table.cells, 10);
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].average.to_string(), "3/10");
    assert!(table.rows[0].equal);
}

#[test]
fn identities_all_hold() {
    let o = run_ok(&["identities", "--n-max", "40"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 41);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    assert!(csv.contains("\nb,3,15/4,15/4,true\n"));
}

#[test]
fn approximate_reports_max_error() {
    let o = run_ok(&["approximate", "--m", "64", "--ell", "64", "--format", "json"]);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["result"]["target"], "ramp");
    assert!(doc["result"]["max_error"].as_f64().unwrap() < 0.02);
}

#[test]
fn dirac_limit_round_trip() {
    let o = run_ok(&[
        "dirac-limit", "--state", "0.3333333333333333,0.3333333333333333,0.3333333333333334",
        "--centers", "0.1,0.45,0.45;0.45,0.45,0.1", "--epsilons", "0.05,0.001", "--samples", "0",
        "--format", "json",
    ]);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let report: DiracLimitReport = serde_json::from_value(doc["result"].clone()).unwrap();
    assert_eq!(report.limit, vec![0.5, 0.0, 0.5]);
    assert!(report.rows.iter().all(|r| r.total_variation < 1e-12));
}

#[test]
fn validation_errors_exit_2() {
    for args in [
        &["simulate", "--state", "0.5,0.5", "--density", "gaussian", "--seed", "1"][..],
        &["simulate", "--state", "0.5,0.5"],
        &["simulate", "--state", "0.6,0.6", "--seed", "1"],
        &["robustness", "--state", "0.5,0.5", "--delta", "0.01,-0.01", "--outcome", "3", "--samples", "0"],
        &["universal-exact", "--cells", "41", "--position", "3"],
        &["no-such-command"],
        &[],
    ] {
        assert_eq!(gtr(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("x.csv");
    let o = gtr(&["identities", "--n-max", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn thread_count_from_environment() {
    let ok = Command::new(env!("CARGO_BIN_EXE_gtr"))
        .args(["identities", "--n-max", "2"])
        .env("GTR_THREADS", "2")
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_gtr"))
        .args(["identities", "--n-max", "2"])
        .env("GTR_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
