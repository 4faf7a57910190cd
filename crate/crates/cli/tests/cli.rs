//! End-to-end tests of the gkdvlab binary: exit codes, artifact layout and
//! byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gkdvlab"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_cmd(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gkdvlab-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const FAST_PROPAGATION: &str = r#"{
    "version": 1,
    "scenario": "soliton-propagation",
    "nonlinearity": {"kind": "pure_power", "p": 2, "a": 1.0},
    "grid": {"length": 80.0, "n": 512},
    "dt": 0.001,
    "t_final": 0.5,
    "output_cadence": 0.1,
    "analysis_grid": {"length": 80.0, "n": 512}
}"#;

#[test]
fn scan_cstar_matches_closed_form() {
    let out = run_cmd(&["scan-cstar", "--p", "2", "--q", "3", "--a", "1.0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.2222222222"), "{text}");
    assert!(text.contains("PASS"));

    // invalid exponent ordering is a usage error, not an assertion failure
    let out = run_cmd(&["scan-cstar", "--p", "3", "--q", "2", "--a", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_passes() {
    let dir = tmpdir("artifacts");
    let cfg = write_config(&dir, "cfg.json", FAST_PROPAGATION);
    let out_dir = dir.join("out");
    let out = run_cmd(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert!(csv.starts_with("t,mass,energy,c,rho,eta_h1,I,J,V,local_h1\n"));
    assert_eq!(csv.lines().count(), 7); // header + 6 records

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["verdict"], "PASS");
    assert_eq!(summary["scenario"], "soliton-propagation");
    assert!(summary["constants"]["lambda2"].as_f64().unwrap() > 0.0);

    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("verdict: PASS"));
    assert!(report.contains("PASS mass_conserved"));
}

#[test]
fn identical_configs_are_byte_deterministic() {
    let dir = tmpdir("determinism");
    let body = r#"{
        "version": 1,
        "scenario": "perturbed-soliton",
        "nonlinearity": {"kind": "pure_power", "p": 2, "a": 1.0},
        "grid": {"length": 80.0, "n": 512},
        "dt": 0.001,
        "t_final": 0.5,
        "output_cadence": 0.1,
        "perturbation": {"shape": "random_band_limited", "amplitude": 0.02, "width": 2.0},
        "seed": 12345,
        "analysis_grid": {"length": 80.0, "n": 512}
    }"#;
    let cfg = write_config(&dir, "cfg.json", body);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let o = run_cmd(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["diagnostics.csv", "summary.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn zero_amplitude_perturbation_matches_propagation() {
    let dir = tmpdir("zero-amp");
    let perturbed = FAST_PROPAGATION
        .replace("soliton-propagation", "perturbed-soliton")
        .replace(
            "\"analysis_grid\"",
            "\"perturbation\": {\"shape\": \"gaussian\", \"amplitude\": 0.0},\n    \"analysis_grid\"",
        );
    let cfg_a = write_config(&dir, "plain.json", FAST_PROPAGATION);
    let cfg_b = write_config(&dir, "pert.json", &perturbed);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    assert_eq!(
        run_cmd(&["run", "--config", cfg_a.to_str().unwrap(), "--out", out_a.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run_cmd(&["run", "--config", cfg_b.to_str().unwrap(), "--out", out_b.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let a = std::fs::read(out_a.join("diagnostics.csv")).unwrap();
    let b = std::fs::read(out_b.join("diagnostics.csv")).unwrap();
    assert_eq!(a, b, "zero-amplitude perturbed run must reproduce the plain run");
}

#[test]
fn under_resolved_run_fails_with_named_invariant() {
    let dir = tmpdir("under-resolved");
    let body = FAST_PROPAGATION
        .replace("\"grid\": {\"length\": 80.0, \"n\": 512}", "\"grid\": {\"length\": 80.0, \"n\": 128}")
        .replace("\"t_final\": 0.5", "\"t_final\": 2.0")
        .replace("\"output_cadence\": 0.1", "\"output_cadence\": 0.5");
    let cfg = write_config(&dir, "cfg.json", &body);
    let out_dir = dir.join("out");
    let out = run_cmd(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("FAIL"), "{report}");
    assert!(report.contains("verdict: FAIL"));
    // the violated invariant is named on the FAIL line
    assert!(
        report.lines().any(|l| l.starts_with("FAIL ") && l.contains(':')),
        "{report}"
    );
}

#[test]
fn bad_configs_exit_with_code_2() {
    let dir = tmpdir("bad-config");
    // malformed JSON
    let cfg = write_config(&dir, "broken.json", "{ not json");
    let out = run_cmd(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // schema violation: n not a power of two
    let body = FAST_PROPAGATION.replace("\"n\": 512", "\"n\": 300");
    let cfg = write_config(&dir, "badn.json", &body);
    let out = run_cmd(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));

    // missing file
    let out = run_cmd(&["run", "--config", dir.join("nope.json").to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectral_subcommand_prints_report() {
    let dir = tmpdir("spectral");
    // residual thresholds need the full analysis resolution
    let body = FAST_PROPAGATION
        .replace("\"analysis_grid\": {\"length\": 80.0, \"n\": 512}", "\"analysis_grid\": {\"length\": 80.0, \"n\": 1024}");
    let cfg = write_config(&dir, "cfg.json", &body);
    let out = run_cmd(&["spectral", "--c", "1.0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).unwrap();
    let lam0 = report["lambda0"].as_f64().unwrap();
    assert!((lam0 - 1.25).abs() < 1e-4, "lambda0 = {lam0}");
    assert!(report["lambda2_measured"].as_f64().unwrap() > 0.0);
}
