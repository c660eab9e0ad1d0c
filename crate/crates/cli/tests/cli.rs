use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use taskqp::catalog;
use taskqp::control::BarrierGains;
use taskqp::kinematics::BarrierForm;
use taskqp::sim::{Activation, BarrierConfig, BarrierMode};

fn taskqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskqp")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn run_file(dir: &Path, text: &str, out: &str) -> Output {
    let file = dir.join("scenario.toml");
    fs::write(&file, text).unwrap();
    let out = dir.join(out);
    taskqp(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn stable_builtin_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("left");
    let o = taskqp(&["builtin", "fig4-left", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("log.csv")).unwrap();
    assert!(csv.starts_with("t,"));
    assert!(fs::read_to_string(out.join("metrics.toml")).unwrap().contains("oscillation_index"));
}

#[test]
fn unstable_builtin_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("right");
    let o = taskqp(&["builtin", "fig4-right", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 6);
    assert!(out.join("metrics.toml").exists());
}

#[test]
fn malformed_file_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_file(dir.path(), "schema_version = 1\nname = [", "out");
    assert_eq!(code(&o), 3);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invariant_violation_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = catalog::fig4(10.0);
    s.tasks[0].kd = vec![-1.0];
    let o = run_file(dir.path(), &s.to_toml().unwrap(), "out");
    assert_eq!(code(&o), 4);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn conflicting_barriers_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = catalog::fig4(10.0);
    s.robot.q0 = vec![0.75];
    let gains = BarrierGains::repeated_pole(-40.0, 0.0).unwrap();
    for (name, form) in [
        ("upper", BarrierForm::JointUpper { joint: 0, max: 0.5 }),
        ("lower", BarrierForm::JointLower { joint: 0, min: 1.0 }),
    ] {
        s.barriers.push(BarrierConfig {
            name: name.into(),
            form,
            mode: BarrierMode::FeedbackEcbf,
            gains: gains.clone(),
            activation: Activation::Always,
        });
    }
    let o = run_file(dir.path(), &s.to_toml().unwrap(), "out");
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&taskqp(&["check", "nonsense"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&taskqp(&["builtin", "no-such", "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn list_names_every_builtin() {
    let o = taskqp(&["list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 14);
    assert!(text.contains("fig4-left"));
}

#[test]
fn shown_scenario_runs_like_the_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let shown = taskqp(&["show", "fig7-ffwd"]);
    assert_eq!(code(&shown), 0);
    let a = run_file(dir.path(), &String::from_utf8(shown.stdout).unwrap(), "a");
    assert_eq!(code(&a), 0);
    let b = dir.path().join("b");
    assert_eq!(code(&taskqp(&["builtin", "fig7-ffwd", "--out", b.to_str().unwrap()])), 0);
    let csv_a = fs::read(dir.path().join("a/log.csv")).unwrap();
    let csv_b = fs::read(b.join("log.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
}
