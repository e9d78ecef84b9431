use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const DESIGN: &str = "c0 = 0.5\nc2 = 1\nd0 = 0.5\nd2 = 4\ncensoring_rate = 0.3\nhorizon = 1.5\nseed = 3\n";

fn rdsurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdsurv")).args(args).output().expect("run rdsurv")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = rdsurv(args);
    assert!(out.status.success(), "rdsurv {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// simulate, estimate and infer on one seeded dataset.
fn pipeline(dir: &Path) -> String {
    let spec = write(dir, "design.cfg", DESIGN);
    let data = dir.join("data.csv");
    stdout_ok(&["simulate", "--spec", spec.to_str().unwrap(), "--n", "1500", "--out", data.to_str().unwrap()]);
    let input = data.to_str().unwrap();
    let mut all = std::fs::read_to_string(&data).unwrap();
    all += &stdout_ok(&["estimate", "--input", input, "--h", "0.5", "--grid", "0.5,1,1.5"]);
    for mode in ["raw", "bc", "robust"] {
        all += &stdout_ok(&["infer", "--input", input, "--h", "0.5", "--grid", "0.5,1,1.5", "--mode", mode]);
    }
    all.replace(input, "data.csv")
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"], &["infer", "--help"], &["montecarlo", "--help"]] {
        let out = rdsurv(args);
        assert!(out.status.success(), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn missing_input_is_a_usage_error_naming_the_flag() {
    let out = rdsurv(&["estimate", "--h", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[usage]"), "{err}");
    assert!(err.contains("--input"), "{err}");
}

#[test]
fn invalid_values_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "bad.cfg", "c0 = -1\n");
    let out = rdsurv(&["simulate", "--spec", spec.to_str().unwrap(), "--n", "10"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[validation]"));

    let data = write(dir.path(), "d.csv", "time,event,forcing\n1,1,0.2\n2,maybe,-0.1\n");
    let out = rdsurv(&["estimate", "--input", data.to_str().unwrap(), "--cutoff", "0", "--horizon", "3", "--h", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2"), "{err}");
}

#[test]
fn missing_cutoff_without_metadata_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "time,event,forcing\n1,1,0.2\n2,0,-0.1\n");
    let out = rdsurv(&["estimate", "--input", data.to_str().unwrap(), "--h", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--cutoff"));
}

#[test]
fn degenerate_pilot_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "d.csv", "time,event,forcing\n1,1,0.1\n2,1,-0.1\n3,0,0.2\n3,0,-0.2\n");
    let out = rdsurv(&["infer", "--input", data.to_str().unwrap(), "--cutoff", "0", "--horizon", "5", "--h", "1", "--b", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[numeric]"));
}

#[test]
fn kernel_constants_emit_known_values() {
    let json: serde_json::Value = serde_json::from_str(&stdout_ok(&["kernel-constants", "--kernel", "uniform", "--p", "1"])).unwrap();
    assert_eq!(json["gamma"][0][1].as_f64(), Some(0.5));
    assert_eq!(json["q"].as_u64(), Some(2));
    assert!((json["bias_constant"].as_f64().unwrap() + 1.0 / 12.0).abs() < 1e-12);
    assert_eq!(json["psi_cross"].as_array().unwrap().len(), 2);
    assert_eq!(json["psi_cross"][0].as_array().unwrap().len(), 3);
}

#[test]
fn pipeline_is_idempotent_and_matches_golden_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    assert_eq!(first, pipeline(b.path()));
    let digest = hex::encode(Sha256::digest(first.as_bytes()));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pipeline.sha256");
    let expected = std::fs::read_to_string(&golden).unwrap();
    assert_eq!(digest, expected.trim(), "pipeline output changed:\n{first}");
}

#[test]
fn seed_flag_overrides_the_design_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "design.cfg", DESIGN);
    let s = spec.to_str().unwrap();
    let base = stdout_ok(&["simulate", "--spec", s, "--n", "50"]);
    let same = stdout_ok(&["simulate", "--spec", s, "--n", "50", "--seed", "3"]);
    let other = stdout_ok(&["simulate", "--spec", s, "--n", "50", "--seed", "4"]);
    assert_eq!(base, same);
    assert_ne!(base, other);
}

#[test]
fn montecarlo_report_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.cfg", &format!("{DESIGN}sample_sizes = 200\nbandwidths = 0.6,0.9\nreplications = 12\n"));
    let p = plan.to_str().unwrap();
    let one = stdout_ok(&["montecarlo", "--plan", p, "--threads", "1"]);
    let four = stdout_ok(&["montecarlo", "--plan", p, "--threads", "4"]);
    assert_eq!(one, four);
    assert!(one.lines().any(|l| l.starts_with("200,0.6,1.2,1.5,coverage_robust,")));
}
