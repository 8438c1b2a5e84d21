use std::path::Path;
use std::process::{Command, Output};

fn wsp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsp"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("WSP_WORKERS")
        .output()
        .expect("spawn wsp")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_wsp")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = wsp(dir.path(), &["seminorm", "--field", "x", "--s", "0.5", "--p", "2", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seminorm_of_the_linear_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let f = path(dir.path(), "lin.txt");
    assert!(wsp(dir.path(), &["fixture", "linear", "--m", "1", "--N", "64", "--out", &f]).status.success());
    let out = wsp(dir.path(), &["seminorm", "--field", &f, "--s", "0.5", "--p", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("quantity,value\n"));
    let sq: f64 = text.lines().find_map(|l| l.strip_prefix("seminorm_p,")).unwrap().parse().unwrap();
    // closed form of the discrete double sum for u = x: 4 (1 - 1/N)
    assert!((sq - 4.0 * (1.0 - 1.0 / 64.0)).abs() < 1e-12, "{sq}");
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "seminorm");
    assert_eq!(manifest["measured"]["seminorm_p"].as_f64().unwrap(), sq);
    assert!(manifest["version"].is_string());
}

#[test]
fn domain_errors_exit_one_and_still_write_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = wsp(dir.path(), &["seminorm", "--field", &path(dir.path(), "missing.txt"), "--s", "0.5", "--p", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let m = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(m.contains("i/o error"));
}

#[test]
fn regime_gate_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = path(dir.path(), "v.txt");
    assert!(wsp(dir.path(), &["fixture", "vortex", "--N", "16", "--out", &f]).status.success());
    let out = wsp(dir.path(), &["approx-high", "--field", &f, "--s", "0.4", "--p", "2", "--t", "0.25", "--out", &f]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regime gate"));
}

#[test]
fn obstruction_reports_winding_one_for_the_vortex() {
    let dir = tempfile::tempdir().unwrap();
    let f = path(dir.path(), "v.txt");
    assert!(wsp(dir.path(), &["fixture", "vortex", "--N", "16", "--out", &f]).status.success());
    let out = wsp(dir.path(), &["obstruction", "--field", &f]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.ends_with(",1")));
}

#[test]
fn pipelines_are_reproducible_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let f = path(dir.path(), "v.txt");
    assert!(wsp(dir.path(), &["fixture", "vortex", "--N", "16", "--out", &f]).status.success());
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let o = path(dir.path(), &format!("hi{workers}.txt"));
        let out = wsp(
            dir.path(),
            &["--workers", workers, "approx-high", "--field", &f, "--s", "0.6", "--p", "2", "--t", "0.25", "--shifts", "16", "--out", &o],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((std::fs::read(&o).unwrap(), out.stdout));
    }
    assert_eq!(outputs[0], outputs[1]);
    let low = path(dir.path(), "lo.txt");
    let out = wsp(dir.path(), &["approx-low", "--field", &f, "--s", "0.4", "--p", "2", "--j", "2", "--b", "1,0", "--out", &low]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("stage,quantity,value\n"));
}

#[test]
fn mollify_haar_and_counterexample_tables() {
    let dir = tempfile::tempdir().unwrap();
    let f = path(dir.path(), "b.txt");
    assert!(wsp(dir.path(), &["fixture", "bump", "--N", "32", "--out", &f]).status.success());
    let m = path(dir.path(), "m.txt");
    let out = wsp(dir.path(), &["mollify", "--field", &f, "--t", "0.25", "--gamma", "0.25", "--audit", "0.5,2", "--out", &m]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let smoothed = wsp_core::io::load_field(&m).unwrap();
    assert_eq!(smoothed.grid().n, 32);
    assert!(dir.path().join("mollify_audit.csv").exists());

    let out = wsp(dir.path(), &["haar", "--field", &f, "--j", "1,2,3", "--audit", "0.5,1.5"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);

    let out = wsp(dir.path(), &["counterexample", "--mode", "nonuniform", "--s", "0.5", "--p", "2", "--j-list", "1,2", "--N", "128"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = wsp(dir.path(), &["counterexample", "--mode", "continuity", "--s", "0.5", "--p", "2", "--N", "64", "--k-max", "4"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 6);
}
