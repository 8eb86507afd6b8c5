//! End-to-end tests of the command-line binary: exit codes, JSON piping and
//! the run manifest.

use std::io::Write;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_steerkit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn verify_thm2_passes_with_manifest() {
    let out = run(&["verify-thm2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["manifest"]["command"], "verify-thm2");
    assert_eq!(v["manifest"]["verdict"], "passed");
    assert!(v["result"]["max_reconstruction_error"].as_f64().unwrap() <= 1e-12);
    assert!(v["manifest"]["wall_time_ms"].as_f64().unwrap() < 1000.0);
}

#[test]
fn jm_detects_the_borderline_pair_as_incompatible() {
    let dir = tempdir();
    let pair = dir.join("pair.json");
    let eta = format!("{}", 2f64.powf(-0.25));
    let out = run(&[
        "make-meas",
        "--kind",
        "pauli-pair",
        "--eta",
        &eta,
        "--out",
        pair.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["jm", "--meas", pair.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["manifest"]["verdict"], "infeasible");
    // input hash recorded
    let inputs = v["manifest"]["inputs"].as_object().unwrap();
    assert_eq!(inputs.len(), 1);
    assert_eq!(inputs.values().next().unwrap().as_str().unwrap().len(), 64);
}

#[test]
fn steer_pipes_into_lhs() {
    let dir = tempdir();
    let state = dir.join("ghz3.json");
    let meas = dir.join("trivial.json");
    assert_eq!(
        run(&["make-state", "--kind", "ghz", "--n", "3", "--out", state.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run(&["make-meas", "--kind", "trivial", "--out", meas.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let steer = run(&[
        "steer",
        "--state",
        state.to_str().unwrap(),
        "--meas",
        meas.to_str().unwrap(),
    ]);
    assert_eq!(steer.status.code(), Some(0));

    let mut lhs = bin()
        .arg("lhs")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    lhs.stdin.as_mut().unwrap().write_all(&steer.stdout).unwrap();
    let out = lhs.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["manifest"]["verdict"], "feasible");
}

#[test]
fn usage_and_validation_exit_codes() {
    let out = run(&["jm", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(64));
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(64));
    let out = run(&["jm", "--meas", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn identical_inputs_reproduce_the_verdict() {
    let dir = tempdir();
    let pair = dir.join("pair.json");
    run(&["make-meas", "--kind", "pauli-pair", "--eta", "0.6", "--out", pair.to_str().unwrap()]);
    let a = json_of(&run(&["jm", "--meas", pair.to_str().unwrap()]));
    let b = json_of(&run(&["jm", "--meas", pair.to_str().unwrap()]));
    assert_eq!(a["manifest"]["verdict"], b["manifest"]["verdict"]);
    assert_eq!(a["manifest"]["inputs"], b["manifest"]["inputs"]);
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("steerkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
