use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bifocus(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bifocus")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).expect("one JSON line on stderr")
}

#[test]
fn validate_default_params() {
    let dir = tempfile::tempdir().unwrap();
    let o = bifocus(dir.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("validation.json"))["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).count(), 0);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["files"][0]["path"], "validation.json");
}

#[test]
fn invalid_params_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bifocus(dir.path(), &["init-params"]).status.code(), Some(0));
    let p = dir.path().join("params.json");
    let mut v = json(&p);
    v["alpha"] = Value::from(-1.0);
    std::fs::write(&p, v.to_string()).unwrap();
    let o = bifocus(dir.path(), &["--params", p.to_str().unwrap(), "spiral"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "Validation");
    assert_eq!(e["exit_code"], 2);
}

#[test]
fn usage_and_io_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bifocus(dir.path(), &["chain"]).status.code(), Some(1));
    assert_eq!(bifocus(dir.path(), &["spiral", "--turns", "5"]).status.code(), Some(1));
    let o = bifocus(dir.path(), &["--params", "/nonexistent/params.json", "validate"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "Io");
    let o = bifocus(dir.path(), &["periodic", "--word", "1,5"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "Usage");
}

#[test]
fn spiral_export() {
    let dir = tempfile::tempdir().unwrap();
    let o = bifocus(dir.path(), &["spiral", "--target", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let pts = json(&dir.path().join("intersections.json"));
    assert_eq!(pts.as_array().unwrap().len(), 10);
    let report = json(&dir.path().join("spiral_report.json"));
    assert_eq!(report["condition1"]["passed"], true);
    let csv = std::fs::read_to_string(dir.path().join("spiral.csv")).unwrap();
    assert!(csv.starts_with("s,x,y,r,phi_unwrapped\n"));
}

#[test]
fn sweep_entropy_and_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let o = bifocus(dir.path(), &["switch", "--word-len", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = json(&dir.path().join("sweep.json"));
    let rows = sweep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 90);
    assert!(rows.iter().all(|r| r["realized"] == true));

    let o = bifocus(dir.path(), &["entropy"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().next(), Some("0.6931"));

    let o = bifocus(dir.path(), &["orbit", "--word", "1,2,2,1", "--steps", "16"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("orbit.csv")).unwrap();
    let steps: Vec<(i64, usize)> = rd.records().map(|r| r.unwrap()).map(|r| (r[0].parse().unwrap(), r[4].parse().unwrap())).collect();
    for &(k, s) in &steps {
        if let Some(&(_, t)) = steps.iter().find(|(j, _)| *j == -k) {
            assert_eq!(s, t, "step {k}");
        }
    }
    let fwd: Vec<usize> = steps.iter().filter(|(k, _)| (0..4).contains(k)).map(|p| p.1).collect();
    assert_eq!(fwd, vec![1, 2, 2, 1]);

    let manifest = json(&dir.path().join("manifest.json"));
    let paths: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    for p in ["convergence.json", "entropy.json", "orbit.csv", "sweep.csv", "sweep.json"] {
        assert!(paths.contains(&p), "{p} missing from {paths:?}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = bifocus(d.path(), &["--seed", "3", "chain", "--word", "1,2,1", "--samples", "2000"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("chain.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    let c = tempfile::tempdir().unwrap();
    bifocus(c.path(), &["--seed", "4", "chain", "--word", "1,2,1", "--samples", "2000"]);
    assert_ne!(read(&a), read(&c));
}
