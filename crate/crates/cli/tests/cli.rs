use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use psmgc::dynamics::gravity_torque;
use psmgc::excitation::JointLimits;
use psmgc::identification::{assemble, preprocess_with, PreprocessOptions};
use psmgc::io::{self, ModelConfig, DRIFT_HEADER, POSE_HEADER};
use psmgc::model::{example_psm, InertialMode};
use psmgc::{JointVector, ParamLayout, N_JOINTS};
use serde_json::Value;
use tempfile::TempDir;

fn psmgc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psmgc"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn truth() -> String {
    configs().join("truth_gravity.json").display().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

/// Short trajectory run followed by noiseless simulation.
fn simulated(dir: &TempDir) {
    let o = psmgc(dir.path(), &["gen-traj", "--budget", "40", "--starts", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = psmgc(dir.path(), &["simulate", "--params", &truth(), "--trajectory", &path(dir, "trajectory.csv")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn gen_traj_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let o = psmgc(dir.path(), &["gen-traj", "--budget", "40", "--starts", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("cond(W·B)"));
    for f in ["trajectory.csv", "trajectory.json", "gen-traj.manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), io::trajectory_header());
}

#[test]
fn inverted_limits_name_the_joint() {
    let dir = TempDir::new().unwrap();
    let mut limits = JointLimits::default();
    limits.q_min[3] = 2.5;
    let file = dir.path().join("limits.json");
    std::fs::write(&file, io::limits_json(&limits)).unwrap();
    let o = psmgc(dir.path(), &["gen-traj", "--limits", file.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("joint 4"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let mut cfg: Value = serde_json::from_str(&io::to_json(&ModelConfig::default())).unwrap();
    cfg["gravty"] = serde_json::json!([0.0, 0.0, -9.81]);
    let file = dir.path().join("psm.json");
    std::fs::write(&file, cfg.to_string()).unwrap();
    let o = psmgc(dir.path(), &["--config", file.to_str().unwrap(), "gravity", "--params", &truth(), "0", "0", "0.1", "0", "0", "0", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("gravty"), "{}", stderr(&o));
}

#[test]
fn noiseless_simulation_matches_the_regressor() {
    let dir = TempDir::new().unwrap();
    simulated(&dir);
    let model = example_psm();
    let data = io::read_dataset(&dir.path().join("data.csv")).unwrap();
    let pre = preprocess_with(
        &data,
        &PreprocessOptions {
            cutoff_hz: None,
            use_provided_derivatives: true,
        },
    )
    .unwrap();
    let params = io::load_params(Path::new(&truth()), &model).unwrap();
    let (w, t) = assemble(&model, &ParamLayout::for_model(&model, InertialMode::Gravity), &pre).unwrap();
    assert!((w * &params.values - t).amax() < 1e-8);
    let text = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("t,q1,q2,q3,q4,q5,q6,q7,tau1,"));
    assert!(rows[1].starts_with("s,rad,rad,m,"));
}

#[test]
fn noise_is_echoed_into_the_manifest() {
    let dir = TempDir::new().unwrap();
    let o = psmgc(dir.path(), &["gen-traj", "--budget", "20", "--starts", "1"]);
    assert_eq!(code(&o), 0);
    let traj = path(&dir, "trajectory.csv");
    let o = psmgc(dir.path(), &["simulate", "--params", &truth(), "--trajectory", &traj, "--noise", "0.01"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("simulate.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["options"]["noise"]["sigma"], 0.01);
    assert_eq!(m["seed"], 42);
}

#[test]
fn missing_params_file_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = psmgc(dir.path(), &["simulate", "--params", &path(&dir, "nope.json"), "--trajectory", &path(&dir, "t.csv")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn identify_reports_a_tight_fit() {
    let dir = TempDir::new().unwrap();
    simulated(&dir);
    let o = psmgc(dir.path(), &["--json", "identify", "--data", &path(&dir, "data.csv")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["layout"].as_array().unwrap().len(), 64);
    assert_eq!(report["dimension"], 64);
    let worst = report["residual_rms"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
    assert!(report["constraint_violations"].as_array().unwrap().is_empty());
}

#[test]
fn solver_iteration_cap_exits_3_with_best_iterate() {
    let dir = TempDir::new().unwrap();
    simulated(&dir);
    let o = psmgc(dir.path(), &["identify", "--data", &path(&dir, "data.csv"), "--max-iter", "5"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let model = example_psm();
    assert!(io::load_params(&dir.path().join("params.best.json"), &model).is_ok());
}

#[test]
fn malformed_header_names_the_column() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("data.csv");
    std::fs::write(&file, "t,q1,q2,q3,q4,q5,qq6,q7,tau1,tau2,tau3,tau4,tau5,tau6,tau7\n").unwrap();
    let o = psmgc(dir.path(), &["identify", "--data", file.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("qq6"), "{}", stderr(&o));
}

#[test]
fn gravity_matches_the_library_bit_for_bit() {
    let dir = TempDir::new().unwrap();
    let model = example_psm();
    let params = io::load_params(Path::new(&truth()), &model).unwrap();
    let q = [0.3, -0.2, 0.12, 1.0, -0.5, 0.25, -0.75];
    let args: Vec<String> = q.iter().map(|v| v.to_string()).collect();
    let mut cmd = vec!["--json", "gravity", "--params"];
    let t = truth();
    cmd.push(&t);
    cmd.extend(args.iter().map(String::as_str));
    let o = psmgc(dir.path(), &cmd);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let tau: Vec<f64> = serde_json::from_value(v["tau"].clone()).unwrap();
    let expect = gravity_torque(&model, &JointVector::from_column_slice(&q), &params, true).unwrap();
    for j in 0..N_JOINTS {
        assert_eq!(tau[j].to_bits(), expect[j].to_bits(), "joint {}", j + 1);
    }
    let back: Value = serde_json::from_str(&v.to_string()).unwrap();
    assert_eq!(back, v);

    // Plain output carries the same values.
    cmd.remove(0);
    let o = psmgc(dir.path(), &cmd);
    let plain: Vec<f64> = String::from_utf8_lossy(&o.stdout).split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(plain, tau);
}

#[test]
fn zero_gravity_config_gives_zero_effort() {
    let dir = TempDir::new().unwrap();
    let cfg = ModelConfig {
        gravity: [0.0; 3],
        ..ModelConfig::default()
    };
    let file = dir.path().join("psm.json");
    std::fs::write(&file, io::to_json(&cfg)).unwrap();
    let o = psmgc(dir.path(), &["--config", file.to_str().unwrap(), "gravity", "--params", &truth(), "0.2", "0.1", "0.1", "0", "0", "0", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let tau: Vec<f64> = String::from_utf8_lossy(&o.stdout).split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(tau, vec![0.0; N_JOINTS]);
}

#[test]
fn gravity_arity_is_checked() {
    let dir = TempDir::new().unwrap();
    let o = psmgc(dir.path(), &["gravity", "--params", &truth(), "0", "0", "0"]);
    assert_eq!(code(&o), 2);
    let o = psmgc(dir.path(), &["gravity", "--params", &truth(), "0", "0", "0", "0", "0", "0", "0", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn json_errors_carry_the_exit_code() {
    let dir = TempDir::new().unwrap();
    let o = psmgc(dir.path(), &["--json", "gravity", "--params", &path(&dir, "missing.json"), "0", "0", "0", "0", "0", "0", "0"]);
    assert_eq!(code(&o), 2);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["exit_code"], 2);
}

#[test]
fn pipeline_with_identified_params_never_drifts() {
    let dir = TempDir::new().unwrap();
    simulated(&dir);
    let o = psmgc(dir.path(), &["identify", "--data", &path(&dir, "data.csv")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ident = path(&dir, "params.json");
    let o = psmgc(dir.path(), &["drift-test", "--plant", &ident, "--ident", &ident]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("drift.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), DRIFT_HEADER);
    let rows = io::parse_drift_rows(&text);
    assert_eq!(rows.len(), 3 * 5);
    assert!(rows.iter().all(|r| r[8] == "false"));
    let poses: Vec<&str> = text.lines().skip_while(|l| *l != POSE_HEADER).collect();
    assert_eq!(poses.len(), 1 + 5);
}

#[test]
fn default_poses_are_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let o = psmgc(d.path(), &["--seed", "42", "drift-test", "--plant", &truth(), "--ident", &truth()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let read = |d: &TempDir| std::fs::read(d.path().join("drift.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}
