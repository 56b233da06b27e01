use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carleman_core::experiment::CSV_HEADER;

fn carleman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carleman")).args(args).env_remove("CARLEMAN_BUDGET_BYTES").output().expect("run carleman")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn run_prints_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", r#"{"model":{"model":"burgers","n":7,"c":0.5},"sweep":{"N":3,"T":0.5}}"#);
    let out = carleman(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["model"], "burgers");
    assert_eq!(v["N"], 3);
    assert_eq!(v["status"], "ok");
    assert!(v["finalError"].as_f64().unwrap() < 1e-2);
    assert!(v["bound"].as_f64().unwrap() >= v["finalError"].as_f64().unwrap());
}

#[test]
fn sweep_csv_is_ordered_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.json", r#"{"model":{"model":"burgers","n":5},"sweep":{"N":[1,2,3],"T":[0.2,0.4],"nonlinearity":[0.1,0.3]}}"#);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, workers) in [(&a, "1"), (&b, "3")] {
        let out = carleman(&["sweep", "--config", cfg.to_str().unwrap(), "--workers", workers, "--out", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 13);
    let keys: Vec<(String, String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 17);
            (f[3].to_string(), f[5].to_string(), f[2].to_string())
        })
        .collect();
    assert_eq!(keys[0], ("1.000000000000e-01".into(), "2.000000000000e-01".into(), "1".into()));
    assert_eq!(keys[1].2, "2");
    assert_eq!(keys[3].1, "4.000000000000e-01");
    assert_eq!(keys[6].0, "3.000000000000e-01");
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "empty.json", r#"{"model":{"model":"burgers","n":5},"sweep":{"N":[],"T":1.0}}"#);
    let out = carleman(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), format!("{CSV_HEADER}\n"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"model":{"model":"burgers","n":5},"sweep":{"N":2,"T":1.0},"extra":true}"#);
    let out = carleman(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));

    let missing = dir.path().join("nope.json");
    assert_eq!(code(&carleman(&["run", "--config", missing.to_str().unwrap()])), 2);
    assert_eq!(code(&carleman(&["spectrum"])), 2);

    let two = write_config(dir.path(), "two.json", r#"{"model":{"model":"burgers","n":5},"sweep":{"N":[2,3],"T":1.0}}"#);
    assert_eq!(code(&carleman(&["run", "--config", two.to_str().unwrap()])), 2);
}

#[test]
fn budget_exceeded_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "big.json", r#"{"model":{"model":"burgers","n":7},"sweep":{"N":[2,6],"T":1.0}}"#);
    let out = carleman(&["sweep", "--config", cfg.to_str().unwrap(), "--budget-bytes", "100000"]);
    assert_eq!(code(&out), 3);
    let one = write_config(dir.path(), "one.json", r#"{"model":{"model":"burgers","n":7},"sweep":{"N":6,"T":1.0}}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_carleman"))
        .args(["run", "--config", one.to_str().unwrap()])
        .env("CARLEMAN_BUDGET_BYTES", "100000")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn divergence_exits_4_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "div.json", r#"{"model":{"model":"burgers","n":7,"c":500},"sweep":{"N":2,"T":1.0}}"#);
    let out = carleman(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["status"], "diverged");
    assert_eq!(v["finalError"].as_f64().unwrap(), 1e12);

    let out = carleman(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).lines().nth(1).unwrap().ends_with(",diverged"));
}

#[test]
fn spectrum_reports_resonance_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let burgers = write_config(dir.path(), "b.json", r#"{"model":{"model":"burgers","n":7,"c":1},"spectral":{"max_order":9}}"#);
    let out = carleman(&["spectrum", "--config", burgers.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["delta"].as_f64().unwrap() - 0.1497).abs() < 1e-3);
    assert!((v["norm_f2_1"].as_f64().unwrap() - 6.0).abs() < 1e-12);

    let kdv = write_config(dir.path(), "k.json", r#"{"model":{"model":"kdv","n":7,"c":0.1},"sweep":{"N":8,"T":0.1}}"#);
    let out = carleman(&["spectrum", "--config", kdv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["delta"].as_f64().unwrap() - 9.860).abs() < 0.01 * 9.860);
    assert_eq!(v["zero_modes_removed"], 1);
    assert_eq!(v["search_order"], 9);
}

#[test]
fn verify_theory_passes() {
    let out = carleman(&["verify-theory", "--n", "2", "--N", "3", "--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 4);
    assert!(v["checks"].as_array().unwrap().len() >= 10);

    assert_eq!(code(&carleman(&["verify-theory", "--n", "5", "--N", "3"])), 2);
}
