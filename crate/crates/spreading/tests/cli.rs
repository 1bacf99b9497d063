use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spreading"));
    for var in ["SPREADING_SPEC", "SPREADING_OUT", "SPREADING_GRID_N", "SPREADING_TOL", "SPREADING_WORKERS", "SPREADING_SEED"] {
        c.env_remove(var);
    }
    c
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = bin().args(args).output().unwrap();
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), json, out)
}

#[test]
fn speed_of_constant_kpp_is_two() {
    let spec = corpus("kpp_scalar.toml");
    let (code, v, _) = run(&["speed", "--spec", spec.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["command"], "speed");
    assert_eq!(v["status"], "ok");
    assert_eq!(v["spec"]["hash"].as_str().unwrap().len(), 64);
    let r = &v["result"]["report"];
    assert!((r["c_right"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((r["c_left"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert_eq!(v["result"]["crossing_at_c_star"]["kind"], "tangent");
}

#[test]
fn wave_below_critical_speed_exits_two() {
    let spec = corpus("kpp_scalar.toml");
    let (code, v, _) = run(&["wave", "--spec", spec.to_str().unwrap(), "--c", "1.5"]);
    assert_eq!(code, 2);
    assert_eq!(v["status"], "error");
    assert_eq!(v["failure"]["reason"], "c < c*");
}

#[test]
fn verify_corpus_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v, _) = run(&["verify", "--workers", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["result"]["all_passed"], true);
    assert_eq!(v["result"]["entries"].as_array().unwrap().len(), 10);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(written, v);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_workers() {
    let spec = corpus("piecewise_homogenization.toml");
    let spec = spec.to_str().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, _, oa) = run(&["homogenize", "--spec", spec, "--workers", "1", "--out", a.path().to_str().unwrap()]);
    let (cb, _, ob) = run(&["homogenize", "--spec", spec, "--workers", "3", "--out", b.path().to_str().unwrap()]);
    assert_eq!((ca, cb), (0, 0));
    assert_eq!(oa.stdout, ob.stdout);
    for f in ["summary.json", "epsilon_sweep.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.path().join("epsilon_sweep.csv")).unwrap();
    assert!(csv.starts_with("# spec_hash="));
    assert!(csv.contains("# n_per_period=128"));
}

#[test]
fn malformed_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = \"1 + sinn(x)\"\n").unwrap();
    let (code, v, _) = run(&["eig", "--spec", path.to_str().unwrap()]);
    assert_eq!(code, 3);
    let msg = v["failure"]["message"].as_str().unwrap();
    assert!(msg.contains("sinn") && msg.contains("line 5"), "{msg}");

    std::fs::write(&path, "[system]\nkind = \"scalar\"\n[coefficients]\nr = 1\nsigma = \"cos(2*pi*x)\"\n").unwrap();
    let (code, v, _) = run(&["eig", "--spec", path.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(v["failure"]["message"].as_str().unwrap().contains("sigma"));

    let (code, _, _) = run(&["eig", "--spec", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code, 3);
    let (code, _, _) = run(&["eig"]);
    assert_eq!(code, 3);
}

#[test]
fn environment_variables_fill_in_flags() {
    let spec = corpus("periodic_scalar.toml");
    let out = bin().args(["eig"]).env("SPREADING_SPEC", &spec).env("SPREADING_GRID_N", "64").output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["tolerances"]["n"], 64);
    let flag = bin().args(["eig", "--grid-n", "48"]).env("SPREADING_SPEC", &spec).env("SPREADING_GRID_N", "64").output().unwrap();
    let v: Value = serde_json::from_slice(&flag.stdout).unwrap();
    assert_eq!(v["tolerances"]["n"], 48);
}

#[test]
fn bad_numeric_options_are_rejected() {
    let spec = corpus("kpp_scalar.toml");
    let spec = spec.to_str().unwrap();
    assert_eq!(run(&["speed", "--spec", spec, "--tol", "-1"]).0, 3);
    assert_eq!(run(&["simulate", "--spec", spec, "--nx", "16"]).0, 3);
    assert_eq!(run(&["homogenize", "--spec", spec, "--eps", "0.1,0.2"]).0, 3);
    assert_eq!(run(&["speed", "--spec", spec, "--workers", "0"]).0, 3);
}

#[test]
fn simulate_writes_front_trace() {
    let dir = tempfile::tempdir().unwrap();
    let spec = corpus("kpp_scalar.toml");
    let (code, v, _) = run(&[
        "simulate",
        "--spec",
        spec.to_str().unwrap(),
        "--nx",
        "1024",
        "--t-end",
        "40",
        "--x-max",
        "200",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{v}");
    let c = v["result"]["fitted_speed"].as_f64().unwrap();
    assert!((c - 2.0).abs() / 2.0 < 0.05, "{c}");
    let trace = std::fs::read_to_string(dir.path().join("front_trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l == "t,front"));
    assert!(dir.path().join("final_state.csv").exists());
}
