use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smoothfix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothfix")).args(args).env_remove("SMOOTHFIX_THREADS").output().unwrap()
}

fn run_in(config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = configs().join(config);
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    smoothfix(&args)
}

fn body(path: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["header"]["toolkit"], "smoothfix");
    v["body"].clone()
}

#[test]
fn spectral_on_the_diagonal_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in("diagonal.json", dir.path(), &["spectral"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let b = body(&dir.path().join("spectral.json"));
    assert!((b["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-8);
    assert!((b["m_prime_alpha"].as_f64().unwrap() + 16f64.ln()).abs() < 1e-6);
    assert_eq!(b["regime"], "subcritical");
    let h = fs::read_to_string(dir.path().join("H_alpha.csv")).unwrap();
    assert!(h.starts_with("# smoothfix "));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["--budget-scale", "0.05", "simulate"];
    let ra = run_in("acceptance.json", a.path(), &[&["--threads", "1"][..], &common[..]].concat());
    let rb = run_in("acceptance.json", b.path(), &[&["--threads", "3"][..], &common[..]].concat());
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(rb.status.code(), Some(0));
    for f in ["martingale.csv", "rn.csv", "wstar.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_samples_but_not_shape() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_in("acceptance.json", a.path(), &["fixedpoint"]);
    run_in("acceptance.json", b.path(), &["--seed", "99", "fixedpoint"]);
    let sa = fs::read_to_string(a.path().join("samples.csv")).unwrap();
    let sb = fs::read_to_string(b.path().join("samples.csv")).unwrap();
    assert_ne!(sa, sb);
    assert_eq!(sa.lines().count(), sb.lines().count());
    assert!(sb.contains("seed=99"));
}

#[test]
fn imposter_config_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in("imposter.json", dir.path(), &["--budget-scale", "0.2", "verify", "residual"]);
    assert_eq!(out.status.code(), Some(4));
    let rep = body(&dir.path().join("report.json"));
    let fails: Vec<_> = rep["entries"].as_array().unwrap().iter().filter(|e| e["verdict"] == "fail").collect();
    assert!(fails.iter().any(|e| e["check"] == "fp_residual"));
}

#[test]
fn iterated_law_passes_the_residual_test() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in("acceptance.json", dir.path(), &["--budget-scale", "0.2", "verify", "residual"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn critical_command_on_a_critical_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in("critical.json", dir.path(), &["--budget-scale", "0.2", "critical", "--chi", "0.3,0.4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("critical_lt.csv").exists());
    // the diagonal ensemble is not critical
    let out = run_in("diagonal.json", dir.path(), &["critical"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ \"seed\": 1, ").unwrap();
    let out = smoothfix(&["--config", cfg.to_str().unwrap(), "spectral"]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(&cfg, r#"{"ensemble": {"dim": 2}}"#).unwrap();
    assert_eq!(smoothfix(&["--config", cfg.to_str().unwrap(), "spectral"]).status.code(), Some(1));
}

#[test]
fn invalid_ensemble_exits_with_model_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let ens = r#"{"dim":2,"kind":"mixture","atoms":[{"prob":0.5,"Q":[0,0],"Ts":[[[0.1,0],[0,0.1]]]}]}"#;
    fs::write(&cfg, format!(r#"{{"ensemble": {ens}, "seed": 1}}"#)).unwrap();
    let out = smoothfix(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "spectral"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(smoothfix(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(smoothfix(&[]).status.code(), Some(1));
    assert_eq!(smoothfix(&["spectral"]).status.code(), Some(1));
    let cfg = configs().join("diagonal.json");
    assert_eq!(smoothfix(&["--config", cfg.to_str().unwrap(), "verify", "nonsense"]).status.code(), Some(1));
    assert_eq!(smoothfix(&["--help"]).status.code(), Some(0));
}
