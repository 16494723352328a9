use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_osgood-lab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("osgood-lab-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn modulus_closed_form_example() {
    let dir = scratch("modulus");
    let out = run(&["modulus", "--kind", "log_lipschitz", "--check", "closed-form"], &dir.join("o"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("o/closed_form.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,R_pipeline,R_closed,rel_err"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[3] <= 1e-6, "{line}");
    }
    let m = manifest(&dir.join("o"));
    assert_eq!(m["pass"], true);
    assert_eq!(m["subcommand"], "modulus");
}

#[test]
fn acm_blowup_example_reports_divergence() {
    let dir = scratch("acm");
    let out = run(&["acm", "--theta", "log1", "--N", "8", "--condition", "blowup", "--s", "0.5", "--t", "0.1"], &dir);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&dir);
    assert_eq!(m["results"]["display_verdict"], "diverging");
    assert_eq!(m["config"]["acm"]["n_cells"], 8);
    let series = std::fs::read_to_string(dir.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 9);
}

#[test]
fn empty_config_is_status_2_without_output() {
    let dir = scratch("empty");
    let cfg = dir.join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("o").exists());
}

#[test]
fn usage_errors_are_status_2() {
    let dir = scratch("usage");
    assert_eq!(run(&["modulus", "--kind", "bogus"], &dir.join("o")).status.code(), Some(2));
    assert_eq!(run(&[], &dir.join("o")).status.code(), Some(2));
}

#[test]
fn validation_failure_is_status_3_and_writes_nothing() {
    let dir = scratch("invalid");
    let o = dir.join("o");
    assert_eq!(run(&["modulus", "--kind", "associated", "--check", "closed-form"], &o).status.code(), Some(3));
    assert_eq!(run(&["acm", "--theta", "sqrt"], &o).status.code(), Some(3));
    assert_eq!(run(&["euler", "--n-grid", "48"], &o).status.code(), Some(3));
    assert!(!o.exists());
}

#[test]
fn failed_audit_is_status_1() {
    let dir = scratch("audit");
    let out = run(&["interp", "--fields", "3", "--max-ratio", "1"], &dir);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(&dir);
    assert_eq!(m["pass"], false);
    assert_eq!(m["audits"][0]["pass"], false);
}

#[test]
fn unwritable_output_is_status_4() {
    let dir = scratch("io");
    let blocker = dir.join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = run(&["modulus"], &blocker.join("sub"));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_file_values_and_flag_overrides() {
    let dir = scratch("config");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        "subcommand = \"interp\"\nseed = 5\n[interp]\nfields = 2\nn_grid = 16\nkmax = 4\nepsilons = [0.3]\n",
    )
    .unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(&dir.join("o")).arg("--seed").arg("9").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir.join("o"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["interp"]["n_grid"], 16);
    let csv = std::fs::read_to_string(dir.join("o/interp.csv")).unwrap();
    // 2 fields × 3 weights × 1 ε
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn reruns_are_identical_modulo_timing() {
    let dir = scratch("rerun");
    let args = ["interp", "--fields", "4", "--seed", "17", "--threads", "2"];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        assert_eq!(run(&args, &dir).status.code(), Some(0));
        let mut m = manifest(&dir);
        m.as_object_mut().unwrap().remove("timing");
        snapshots.push((m, std::fs::read(dir.join("interp.csv")).unwrap()));
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let other = dir.join("other");
    assert_eq!(run(&["interp", "--fields", "4", "--seed", "18"], &other).status.code(), Some(0));
    assert_ne!(std::fs::read(other.join("interp.csv")).unwrap(), snapshots[0].1);
}

#[test]
fn flow_and_euler_runs_pass() {
    let dir = scratch("flow-euler");
    let out = run(&["flow", "--pairs", "200"], &dir.join("flow"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let head = std::fs::read_to_string(dir.join("flow/trajectory_0.csv")).unwrap();
    assert!(head.starts_with("t,x1,err\n"));
    let out = run(&["euler", "--mode", "conservation", "--n-grid", "32", "--t-end", "0.2"], &dir.join("ec"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = run(&["euler", "--n-grid", "32", "--t-end", "0.1", "--deltas", "0.1,0.01"], &dir.join("es"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let m = manifest(&dir.join("es"));
    assert!(m["results"]["fitted_c"].as_f64().unwrap() > 0.0);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
}
