//! End-to-end behavior of the `gaitlab` binary: ingest, artifact headers,
//! unlabeled scoring, and exit codes.

use gaitlab::gaitsim::{generate_session, GaitParams};
use gaitlab::telemetry::{encode_frame, session_to_frames, Task};
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaitlab"))
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn data_rows(csv: &str) -> usize {
    csv.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count() - 1
}

/// One minute of two-wrist telemetry at 100 Hz is 12,000 frames; ingest
/// must merge them back into 6,000 per-timestamp rows.
#[test]
fn ingest_rebuilds_one_row_per_timestamp_from_paired_frames() {
    let dir = tempfile::tempdir().unwrap();
    let session = generate_session(&GaitParams::control(), "s01", Task::Walk).unwrap();
    assert_eq!(session.len(), 6000);

    let frames = session_to_frames(&session);
    assert_eq!(frames.len(), 12_000);
    let mut bytes = Vec::with_capacity(frames.len() * 27);
    for frame in &frames {
        bytes.extend_from_slice(&encode_frame(frame));
    }
    let raw = dir.path().join("frames.bin");
    std::fs::write(&raw, &bytes).unwrap();

    let out_csv = dir.path().join("session.csv");
    let out = bin()
        .args(["ingest", "--input"])
        .arg(&raw)
        .args(["--subject", "s01", "--task", "walk", "--label", "0", "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_ok(&out, "ingest");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("12000 frames"), "stderr was: {stderr}");

    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert!(text.starts_with("# gaitlab v"), "missing artifact header");
    assert_eq!(data_rows(&text), 6000);
}

#[test]
fn ingest_reads_stdin_when_input_is_dash() {
    let session = generate_session(
        &GaitParams { duration_s: 10.0, ..GaitParams::control() },
        "s02",
        Task::Walk,
    )
    .unwrap();
    let mut bytes = Vec::new();
    for frame in session_to_frames(&session) {
        bytes.extend_from_slice(&encode_frame(&frame));
    }

    let mut child = bin()
        .args(["ingest", "--input", "-", "--subject", "s02"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&bytes).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_ok(&out, "ingest from stdin");
    let csv = String::from_utf8_lossy(&out.stdout);
    assert_eq!(data_rows(&csv), 1000);
}

/// Builds a labeled wide table plus a trained model in `dir`, returning
/// (table path, model path).
fn trained_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let sessions = dir.join("sessions");
    let out = bin()
        .args(["simulate", "--n-control", "4", "--n-pd", "4", "--seed", "11", "--out-dir"])
        .arg(&sessions)
        .output()
        .unwrap();
    assert_ok(&out, "simulate");

    let long = dir.join("long.csv");
    let wide = dir.join("wide.csv");
    let out = bin()
        .args(["extract", "--sessions"])
        .arg(&sessions)
        .arg("--out")
        .arg(&long)
        .arg("--wide-out")
        .arg(&wide)
        .output()
        .unwrap();
    assert_ok(&out, "extract");

    let model = dir.join("model.bin");
    let out = bin()
        .args(["train", "--spec", "knn k=3", "--table"])
        .arg(&wide)
        .arg("--out")
        .arg(&model)
        .output()
        .unwrap();
    assert_ok(&out, "train");
    (wide, model)
}

/// Strips the label column so the table carries no ground truth.
fn unlabel(table: &Path, to: &Path) {
    let text = std::fs::read_to_string(table).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        if line.starts_with('#') {
            out.push_str(line);
        } else {
            let cells: Vec<&str> = line.split(',').collect();
            let kept: Vec<&str> =
                std::iter::once(cells[0]).chain(cells[2..].iter().copied()).collect();
            out.push_str(&kept.join(","));
        }
        out.push('\n');
    }
    std::fs::write(to, out).unwrap();
}

#[test]
fn evaluate_without_labels_emits_predictions_and_no_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let (wide, model) = trained_fixture(dir.path());
    let bare = dir.path().join("bare.csv");
    unlabel(&wide, &bare);

    let out = bin()
        .arg("evaluate")
        .arg("--model")
        .arg(&model)
        .arg("--table")
        .arg(&bare)
        .output()
        .unwrap();
    assert_ok(&out, "evaluate unlabeled");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stdout.contains("row_id,label,score"), "stdout was: {stdout}");
    assert!(!stdout.to_lowercase().contains("accuracy"));
    assert!(!stderr.to_lowercase().contains("accuracy"));
    assert_eq!(data_rows(&stdout), 8);

    // the same table with labels produces a report, not predictions
    let out = bin()
        .arg("evaluate")
        .arg("--model")
        .arg(&model)
        .arg("--table")
        .arg(&wide)
        .output()
        .unwrap();
    assert_ok(&out, "evaluate labeled");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("accuracy"), "stdout was: {stdout}");
    assert!(!stdout.contains("row_id,label,score"));
}

#[test]
fn predict_writes_headered_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (wide, model) = trained_fixture(dir.path());
    let pred = dir.path().join("pred.csv");
    let out = bin()
        .arg("predict")
        .arg("--model")
        .arg(&model)
        .arg("--table")
        .arg(&wide)
        .arg("--out")
        .arg(&pred)
        .output()
        .unwrap();
    assert_ok(&out, "predict");
    let text = std::fs::read_to_string(&pred).unwrap();
    assert!(text.starts_with("# gaitlab v"));
    assert!(text.lines().nth(1).unwrap().starts_with("row_id,label,score"));
    assert_eq!(data_rows(&text), 8);
}

#[test]
fn exit_codes_distinguish_usage_errors_from_success() {
    let out = bin().arg("--version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["rank", "--table", "/nonexistent.csv", "--out", "/tmp/x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().count() == 1, "errors should be one line, got: {stderr}");
    assert!(stderr.contains("/nonexistent.csv"));

    let out = bin()
        .args(["ingest", "--input", "/dev/null", "--task", "sprint"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_env_var_is_honored_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");

    let run = |out_dir: &Path, env_seed: Option<&str>, flag_seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["simulate", "--n-control", "2", "--n-pd", "0", "--out-dir"]).arg(out_dir);
        cmd.env_remove("GAITLAB_SEED");
        if let Some(s) = env_seed {
            cmd.env("GAITLAB_SEED", s);
        }
        if let Some(s) = flag_seed {
            cmd.args(["--seed", s]);
        }
        assert_ok(&cmd.output().unwrap(), "simulate");
    };
    run(&a, Some("5"), None);
    run(&b, None, Some("5"));
    run(&c, Some("99"), Some("5"));

    let read = |d: &Path| std::fs::read_to_string(d.join("ctl_001_walk.csv")).unwrap();
    assert_eq!(read(&a), read(&b), "env seed and flag seed should agree");
    assert_eq!(read(&a), read(&c), "flag must override the env seed");

    let out = bin()
        .args(["simulate", "--n-control", "2", "--n-pd", "0", "--out-dir", "/tmp/unused"])
        .env("GAITLAB_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
