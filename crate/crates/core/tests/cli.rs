//! End-to-end runs of the `loctime` binary.

use std::path::Path;
use std::process::Command;

use loctime::run::RunManifest;

fn loctime(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_loctime")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn oracle_grid_passes_with_assert() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "grid.json", r#"{"mode": "oracle-grid", "N": [8]}"#);
    let o = loctime(&["--config", &cfg, "--out", out.to_str().unwrap(), "--assert"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS")));
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL")));
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.passed());
    assert!(out.join("oracle_grid.csv").exists());
}

#[test]
fn seed_override_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "avoided.json",
        r#"{"mode": "avoided", "N": [32], "theta": 0.3, "replicas": 2, "seed": 1}"#,
    );
    let digest = |sub: &str, seed: &str, threads: &str| {
        let out = dir.path().join(sub);
        let o = loctime(&["--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed, "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m: RunManifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        (m.seed, m.output_digest())
    };
    let a = digest("a", "9", "1");
    let b = digest("b", "9", "2");
    let c = digest("c", "10", "1");
    assert_eq!(a.0, 9);
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
}

#[test]
fn bad_configs_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "unknown.json", r#"{"mode": "thick", "N": [32], "theta": 1, "lambda": 0.3, "colour": 1}"#);
    let bad_theta = write_config(dir.path(), "theta.json", r#"{"mode": "avoided", "N": [32], "theta": -1}"#);
    let malformed = write_config(dir.path(), "broken.json", "{");
    let missing = dir.path().join("nope.json");
    for cfg in [unknown.as_str(), bad_theta.as_str(), malformed.as_str(), missing.to_str().unwrap()] {
        let o = loctime(&["--config", cfg, "--out", dir.path().join("out").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_flag_is_a_usage_error() {
    let o = loctime(&[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}
