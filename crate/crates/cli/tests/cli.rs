//! End-to-end runner tests: dispatch pipelines into temp directories, check
//! manifests, artifact hashing, byte-level reproducibility, and the
//! binary's exit codes.

use std::fs;
use std::process::Command;

use kflab_cli::config::parse_config;
use kflab_cli::run::dispatch;
use sha2::{Digest, Sha256};

const CANTOR: &str = r#"{"type":"ifs","maps":[{"s":0.3333333333333333,"b":0.0},{"s":0.3333333333333333,"b":0.6666666666666666}],"weights":[0.5,0.5]}"#;

fn hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn transfer_run_records_discrepancy_and_hashes() {
    let config = parse_config(&format!(
        r#"{{"kind":"transfer","nu":{{"type":"ifs","maps":[{{"s":0.3333333333333333,"b":0.0}},{{"s":0.3333333333333333,"b":0.6666666666666666}}],"weights":[0.3,0.7]}},"mu":{CANTOR},"depth":6}}"#
    ))
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dispatch(&config, dir.path()).unwrap();

    let discrepancy = manifest.summary["max_eigenvalue_rel_discrepancy"]
        .as_f64()
        .unwrap();
    assert!(discrepancy <= 1e-12, "discrepancy {discrepancy}");

    // Every listed artifact exists and its hash matches the bytes on disk.
    assert!(manifest.outputs.len() >= 2);
    for output in &manifest.outputs {
        let bytes = fs::read(dir.path().join(&output.path)).unwrap();
        assert_eq!(output.sha256, hex(&bytes), "{}", output.path);
        assert_eq!(output.bytes, bytes.len() as u64);
    }
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn simulate_runs_are_byte_identical_under_a_fixed_seed() {
    let text = format!(
        r#"{{"kind":"simulate","seed":77,"dt":0.001,"horizon":0.5,"start":0.5,"speed":{{"type":"lebesgue","window":[0.0,1.0]}},"mu":{CANTOR}}}"#
    );
    let config = parse_config(&text).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    dispatch(&config, dir_a.path()).unwrap();
    dispatch(&config, dir_b.path()).unwrap();
    for name in ["brownian.csv", "time_change.csv", "lbm.csv", "transformed.csv"] {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn walkdim_on_lebesgue_reports_dimension_two() {
    let config = parse_config(
        r#"{"kind":"walkdim","speed":{"type":"lebesgue"},"x":0.0,"radii":[4,8,16,32,64,128,256,512,1024]}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dispatch(&config, dir.path()).unwrap();
    let d_w = manifest.summary["walk_dimension"].as_f64().unwrap();
    assert!((d_w - 2.0).abs() < 1e-9, "walk dimension {d_w}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["consistency_gap"].as_f64().unwrap() < 1e-9);
}

#[test]
fn exit_run_passes_self_check() {
    let config = parse_config(
        r#"{"kind":"exit","seed":9,"n_paths":2000,"interval":[0.0,1.0],"start":0.5,"speed":{"type":"ifs_atomized","measure":{"type":"lebesgue"},"depth":6}}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = dispatch(&config, dir.path()).unwrap();
    let quad = manifest.summary["quadrature"].as_f64().unwrap();
    assert!((quad - 0.25).abs() < 5e-3, "quadrature {quad}");
}

#[test]
fn binary_round_trip_and_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_kflab");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("spectrum.json");
    fs::write(
        &config_path,
        format!(r#"{{"kind":"spectrum","nu":{CANTOR},"mu":{CANTOR},"depth":5}}"#),
    )
    .unwrap();
    let out = dir.path().join("out");

    let status = Command::new(bin)
        .args([
            "spectrum",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("eigenvalues.csv").exists());
    assert!(out.join("manifest.json").exists());

    // Mismatched kind is a validation failure: exit code 2.
    let status = Command::new(bin)
        .args([
            "transfer",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Unreadable config: exit code 1.
    let status = Command::new(bin)
        .args(["spectrum", "--config", "/nonexistent.json", "--out", "/tmp/x"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
