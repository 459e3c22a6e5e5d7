use std::path::Path;
use std::process::{Command, Output};

use steklov_core::lab::{ExperimentSpec, PerturbSummary, TrialRecord};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steklov-lab"))
        .args(args)
        .output()
        .unwrap()
}

fn summary_value(stdout: &str, key: &str) -> String {
    let prefix = format!("{key}: ");
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .to_string()
}

fn read_records(path: &Path) -> (ExperimentSpec, Vec<TrialRecord>) {
    let text = std::fs::read_to_string(path).unwrap();
    let (header, body) = text.split_once('\n').unwrap();
    let spec = serde_json::from_str(header.strip_prefix("# ").unwrap()).unwrap();
    let records = csv::Reader::from_reader(body.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap();
    (spec, records)
}

#[test]
fn perturb_csv_is_deterministic_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = [
        "perturb",
        "--trials",
        "20",
        "--seed",
        "5",
        "--resolution",
        "128",
    ];
    let run_a = lab(&[&args[..], &["--out", a.to_str().unwrap()]].concat());
    let run_b = lab(&[&args[..], &["--out", b.to_str().unwrap()]].concat());
    assert!(
        run_a.status.success(),
        "{}",
        String::from_utf8_lossy(&run_a.stdout)
    );
    assert!(run_b.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let (spec, records) = read_records(&a);
    assert_eq!((spec.seed, spec.trials, spec.resolution), (5, 20, 128));
    assert_eq!(records.len(), 20);
    for r in &records {
        assert_eq!(
            r.recomputed_flags(),
            (r.ratio_ok, r.trefftz_ok, r.gauss_green_ok, r.j_ok)
        );
    }
    let s = PerturbSummary::from_records(&records);
    let stdout = String::from_utf8(run_a.stdout).unwrap();
    assert_eq!(
        summary_value(&stdout, "ratio_violations"),
        s.ratio_violations.to_string()
    );
    assert_eq!(
        summary_value(&stdout, "k_empirical"),
        serde_json::to_string(&s.k_empirical).unwrap()
    );
    assert_eq!(
        summary_value(&stdout, "max_ratio"),
        serde_json::to_string(&s.max_ratio).unwrap()
    );
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"n": 3, "omega": 8.0}"#).unwrap();
    let out = lab(&[
        "ball",
        "--config",
        config.to_str().unwrap(),
        "--omega",
        "4.18879020478639",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lam: f64 = summary_value(&stdout, "lambda").parse().unwrap();
    assert!((lam - (1.0 / 1f64.tanh() - 1.0)).abs() < 1e-10);
}

#[test]
fn exit_codes() {
    assert_eq!(lab(&["robin", "--alpha", "-2"]).status.code(), Some(0));
    // invalid input
    assert_eq!(lab(&["perturb", "--eps", "0.5"]).status.code(), Some(2));
    assert_eq!(
        lab(&["penalty", "--shape", "/nonexistent/shape.json"])
            .status
            .code(),
        Some(2)
    );
    // far from the ball the gap stops scaling like ε²
    let out = lab(&["stability-scan", "--eps", "0.9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("FAIL: gap/eps^2"));
    let counter = lab(&[
        "search",
        "--no-project",
        "--allow-degree1",
        "--resolution",
        "64",
        "--modes",
        "4",
        "--budget",
        "200",
    ]);
    assert_eq!(counter.status.code(), Some(0));
}

#[test]
fn shape_file_round_trip_through_trefftz() {
    let dir = tempfile::tempdir().unwrap();
    let shape = dir.path().join("s.json");
    std::fs::write(
        &shape,
        r#"{"n": 2, "omega": 3.141592653589793, "coefficients": [[3, 1, 0.02]]}"#,
    )
    .unwrap();
    let out = lab(&[
        "trefftz",
        "--shape",
        shape.to_str().unwrap(),
        "--modes",
        "12",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lt: f64 = summary_value(&stdout, "lambda_trefftz").parse().unwrap();
    let ratio: f64 = summary_value(&stdout, "ratio").parse().unwrap();
    assert!(lt <= ratio);
}
