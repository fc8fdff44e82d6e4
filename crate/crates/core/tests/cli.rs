use std::path::Path;
use std::process::Command;

fn phasecool(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phasecool"))
        .args(args)
        .current_dir(dir)
        .env_remove("PHASECOOL_WORKERS")
        .output()
        .unwrap()
}

const SMALL: &str = r#"{
  "grid": {"n_points": 128, "length": 20.0},
  "physics": {"alpha_tilde": 2.0, "eta": 6.0, "w": 3000.0},
  "control": {"c1": 2.0},
  "integration": {"dt": 0.001, "tau_max": 1.0, "sample_stride": 0.05},
  "ensemble": {"paths": 6, "seed": 11}
}"#;

#[test]
fn manifest_replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), SMALL).unwrap();
    let first = phasecool(&["ensemble", "--config", "run.json", "--out", "a"], dir.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let replay = phasecool(&["ensemble", "--config", "a/manifest.json", "--workers", "1", "--out", "b"], dir.path());
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    let a = std::fs::read(dir.path().join("a/stats.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/stats.csv")).unwrap();
    assert_eq!(a, b);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["run"]["seed"], 11);
}

#[test]
fn seed_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), SMALL).unwrap();
    for (seed, out) in [("11", "a"), ("12", "b")] {
        let o = phasecool(&["ensemble", "--config", "run.json", "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("a/stats.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/stats.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"grid": {"n_points": 3}}"#).unwrap();
    std::fs::write(dir.path().join("unknown.json"), r#"{"extra": 1}"#).unwrap();
    for args in [
        &["ensemble", "--config", "bad.json"][..],
        &["ensemble", "--config", "unknown.json"],
        &["ensemble", "--config", "missing.json"],
        &["figure", "--preset", "fig9"],
        &["meanfield", "--target", "nothing"],
    ] {
        assert_eq!(phasecool(args, dir.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn params_reports_regime_warnings() {
    let dir = tempfile::tempdir().unwrap();
    // A detuning below the trap frequency breaks the elimination ordering.
    let config = r#"{"physical": {"d_ge": 3.584e-29, "k0": 8.055e6, "omega_T": 628.3, "omega_z": 1.2566e5,
        "Delta": 100.0, "F0": 1.0e12, "m": 1.443e-25}}"#;
    std::fs::write(dir.path().join("lab.json"), config).unwrap();
    let o = phasecool(&["params", "--config", "lab.json"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["derived"]["eta"].as_f64().unwrap() > 0.0);
    assert!(!v["warnings"].as_array().unwrap().is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn validate_passes_on_a_clean_build() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasecool(&["validate", "--out", "v"], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 6);
    assert!(dir.path().join("v/validation.json").exists());
}
