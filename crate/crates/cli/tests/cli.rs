//! CLI behavior: config validation gates, exit codes, artifact round trips.

use std::path::{Path, PathBuf};
use std::process::Output;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("pendrot-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(config_body: &str, dir: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, config_body).unwrap();
    let out = dir.join("out");
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_pendrot"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

#[test]
fn invalid_assumptions_exit_3_without_compute() {
    let dir = scratch("bad-a2");
    let (output, out) = run(
        r#"{
  "version": 1,
  "system": { "epsilon": 0.5, "mu": 0.04, "coupling": "arnold" },
  "pipeline": { "kind": "melnikov-scan", "omega_lo": 1.0, "omega_hi": 1.0, "n_omega": 1, "n_t": 8, "n_v": 8 }
}"#,
        &dir,
        &[],
    );
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("16*mu"), "{stderr}");
    assert!(
        !out.join("report.json").exists(),
        "no artifacts on validation failure"
    );
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = scratch("unknown-key");
    let (output, _) = run(
        r#"{
  "version": 1,
  "system": { "epsilon": 1.0, "mu": 0.0, "coupling": "arnold", "extra": 1 },
  "pipeline": { "kind": "melnikov-scan", "omega_lo": 1.0, "omega_hi": 1.0, "n_omega": 1, "n_t": 8, "n_v": 8 }
}"#,
        &dir,
        &[],
    );
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown field"));
}

#[test]
fn version_gate() {
    let dir = scratch("version");
    let (output, _) = run(
        r#"{ "version": 99, "system": { "epsilon": 1.0, "mu": 0.0, "coupling": "arnold" },
             "pipeline": { "kind": "melnikov-scan", "omega_lo": 1.0, "omega_hi": 1.0, "n_omega": 1, "n_t": 8, "n_v": 8 } }"#,
        &dir,
        &[],
    );
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unsupported config version"));
}

#[test]
fn melnikov_scan_writes_fields_and_report() {
    let dir = scratch("scan");
    let (output, out) = run(
        r#"{
  "version": 1,
  "system": { "epsilon": 1.0, "mu": 0.0, "coupling": "arnold" },
  "pipeline": { "kind": "melnikov-scan", "omega_lo": 0.9, "omega_hi": 1.1, "n_omega": 2, "n_t": 16, "n_v": 16 }
}"#,
        &dir,
        &["--workers", "2"],
    );
    assert_eq!(
        output.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rollup"], "pass");
    let csv = std::fs::read_to_string(out.join("melnikov_omega_0.900000.csv")).unwrap();
    assert!(csv.starts_with("t0,v0,value\n"));
    assert_eq!(csv.lines().count(), 1 + 16 * 16);
}

#[test]
fn heteroclinic_pipeline_emits_readable_orbit() {
    let dir = scratch("het");
    let (output, out) = run(
        r#"{
  "version": 1,
  "system": { "epsilon": 0.64, "mu": 0.01, "coupling": "arnold" },
  "pipeline": {
    "kind": "heteroclinic",
    "omega": 1.0,
    "omega_tilde": 1.0,
    "search_box": { "t_center": 0.1, "v_center": 0.1, "t_half": 1.0, "v_half": 1.0 },
    "minimizer": { "dt": 0.02, "horizon": 20.0, "grad_tol": 1e-8, "max_iter": 8000 }
  }
}"#,
        &dir,
        &["--csv"],
    );
    assert_eq!(
        output.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let orbit = pendrot_cli::orbit::read(&out.join("heteroclinic.orbit")).unwrap();
    assert!(orbit.trajectory.len() > 100);
    let csv = std::fs::read_to_string(out.join("heteroclinic.csv")).unwrap();
    assert!(csv.starts_with("t,u,v\n"));
}
