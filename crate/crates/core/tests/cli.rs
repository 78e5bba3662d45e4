use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use presched::PrescriptionModel;

fn presched(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_presched"))
        .args(args)
        .current_dir(cwd)
        .env("PRESCHED_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = presched(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn fixture_generate_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &["fixture", "three-bus", "--variant", "base", "-o", "sys"],
        d,
    );
    ok(
        &[
            "generate", "--system", "sys", "--n", "120", "--seed", "7", "-o", "data.csv",
        ],
        d,
    );
    ok(
        &[
            "train",
            "--system",
            "sys",
            "--data",
            "data.csv",
            "--k",
            "3",
            "--reduce",
            "50",
            "--seed",
            "7",
            "-o",
            "model.json",
        ],
        d,
    );
    ok(
        &[
            "evaluate",
            "--system",
            "sys",
            "--data",
            "data.csv",
            "--model",
            "model.json",
            "--baseline",
            "forecast",
            "--report",
            "out",
        ],
        d,
    );

    let model = PrescriptionModel::load(&d.join("model.json")).unwrap();
    assert_eq!(model.rules.len(), 3);
    for f in [
        "sys/manifest.json",
        "data.manifest.json",
        "model.manifest.json",
        "out/manifest.json",
        "out/summary.json",
        "out/rows.csv",
    ] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/summary.json")).unwrap()).unwrap();
    let methods = summary["methods"].as_array().unwrap();
    assert_eq!(methods[0]["method"], "F-SC");
    assert!(methods.iter().all(|m| m["delta_percent"].is_number()));
}

#[test]
fn config_file_wins_over_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["fixture", "three-bus", "-o", "sys"], d);
    ok(
        &["generate", "--system", "sys", "--n", "60", "-o", "data.csv"],
        d,
    );
    fs::write(d.join("run.toml"), "[train]\nk = 2\n").unwrap();
    ok(
        &[
            "--config",
            "run.toml",
            "train",
            "--system",
            "sys",
            "--data",
            "data.csv",
            "--k",
            "4",
            "-o",
            "model.json",
        ],
        d,
    );
    assert_eq!(PrescriptionModel::load(&d.join("model.json")).unwrap().k, 2);
}

#[test]
fn report_runs_rolling_windows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "fixture",
            "three-bus",
            "--variant",
            "congested",
            "-o",
            "sys",
        ],
        d,
    );
    ok(
        &["generate", "--system", "sys", "--n", "90", "-o", "data.csv"],
        d,
    );
    ok(
        &[
            "report",
            "--system",
            "sys",
            "--data",
            "data.csv",
            "--methods",
            "fsc,psc,lsc,pi",
            "--windows",
            "2",
            "--window-length",
            "45",
            "--train-size",
            "30",
            "--test-size",
            "15",
            "--report",
            "rep",
        ],
        d,
    );
    let rows = fs::read_to_string(d.join("rep/rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 2 * 15);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(presched(&["no-such-command"], d).status.code(), Some(2));
    assert_eq!(
        presched(&["train", "--system", "sys"], d).status.code(),
        Some(2)
    );
    let missing = presched(
        &[
            "train", "--system", "nowhere", "--data", "x.csv", "-o", "m.json",
        ],
        d,
    );
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());
    assert_eq!(
        presched(&["fixture", "three-bus", "--variant", "nope", "-o", "s"], d)
            .status
            .code(),
        Some(1)
    );
}
