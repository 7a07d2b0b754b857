use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nhsquare"));
    cmd.args(args).env_remove("NHSQUARE_OUT_DIR");
    if let Some(d) = env_out {
        cmd.env("NHSQUARE_OUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn eval_fixture_matches_closed_form() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--config", &cfg("eval_one_atom.json"), "--out", out.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("eval.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let v: f64 = row[1].parse().unwrap();
    assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-4);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    for key in ["experiment", "seed", "constants", "pass", "paper_refs"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(m["pass"], Value::Bool(true));
}

#[test]
fn manifests_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run(&["goodbad", "--config", &cfg("goodbad.json"), "--seed", "7", "--out", d.path().to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["manifest.json", "goodbad.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let out = tempfile::tempdir().unwrap();
    run(&["goodbad", "--config", &cfg("goodbad.json"), "--seed", "99", "--out", out.path().to_str().unwrap()], None);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
}

#[test]
fn missing_measure_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.json", r#"{"experiment": "eval", "measure": "nope.json"}"#);
    let o = run(&["eval", "--config", &c, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn experiment_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cz", "--config", &cfg("eval_one_atom.json"), "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "bad.json", "{\n  \"experiment\": \"eval\",\n  \"measure\": [1, 2,\n}\n");
    let o = run(&["eval", "--config", &c, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:4:"), "{err}");
}

#[test]
fn unknown_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "c.json", "{\n  \"experiment\": \"eval\",\n  \"mesure\": 1\n}\n");
    let o = run(&["eval", "--config", &c, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_params_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(
        dir.path(),
        "c.json",
        r#"{"experiment": "eval", "measure": {"uniform": {"dim": 1, "k": 4}}, "params": {"lambda": 1.5}}"#,
    );
    let o = run(&["eval", "--config", &c, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn env_sets_output_dir_and_flag_wins() {
    let env_dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--config", &cfg("eval_one_atom.json")], Some(env_dir.path()));
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.path().join("manifest.json").exists());

    let env2 = tempfile::tempdir().unwrap();
    let flag = tempfile::tempdir().unwrap();
    run(&["eval", "--config", &cfg("eval_one_atom.json"), "--out", flag.path().to_str().unwrap()], Some(env2.path()));
    assert!(flag.path().join("manifest.json").exists());
    assert!(!env2.path().join("manifest.json").exists());
}

#[test]
fn failed_audit_exits_1() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["whitney", "--config", &cfg("whitney_interval.json"), "--out", out.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL rho0_bound"));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["pass"], Value::Bool(false));
    assert_eq!(m["audits"]["whitney_properties"], Value::Bool(true));
}

#[test]
fn every_shipped_config_runs() {
    for name in ["cz.json", "weak11.json", "tb.json", "bessel.json", "goodlambda.json"] {
        let out = tempfile::tempdir().unwrap();
        let exp = name.trim_end_matches(".json");
        let o = run(&[exp, "--config", &cfg(name), "--out", out.path().to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.path().join("manifest.json").exists());
    }
}
