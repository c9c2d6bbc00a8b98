//! End-to-end CLI exercise: generate -> train -> eval -> predict, plus the
//! machine-readable error path.

use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::tempdir;

fn sfcad() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sfcad"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn sfcad");
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8")
}

fn write_configs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let model = dir.join("model.json");
    fs::write(
        &model,
        serde_json::json!({
            "d_input": 23,
            "d_z": 8,
            "encoder": "uni_rnn",
            "readout": "mean",
            "window_len": 3,
            "classifier_hidden": [8],
            "n_heads": 1,
            "n_enc_layers": 1,
            "feedback": true
        })
        .to_string(),
    )
    .unwrap();
    let train = dir.join("train.json");
    fs::write(
        &train,
        serde_json::json!({
            "learning_rate": 2e-3,
            "batch_size": 32,
            "max_epochs": 2,
            "patience": 2,
            "seed": 5,
            "feedback_training_mode": "teacher_forcing"
        })
        .to_string(),
    )
    .unwrap();
    (model, train)
}

#[test]
fn generate_train_eval_predict_pipeline() {
    let dir = tempdir().unwrap();
    let data_dir = dir.path().join("data");

    run_ok(
        sfcad()
            .args(["generate", "--preset", "wsd-like", "--steps", "600", "--seed", "3"])
            .arg("--out")
            .arg(&data_dir),
    );
    let csv = data_dir.join("wsd-like.csv");
    assert!(csv.exists());
    assert!(data_dir.join("wsd-like.manifest.json").exists());

    let (model, train) = write_configs(dir.path());
    let ckpt = dir.path().join("model.ckpt.json");
    let out = run_ok(
        sfcad()
            .args(["train"])
            .arg("--model-config")
            .arg(&model)
            .arg("--data")
            .arg(&csv)
            .arg("--train-config")
            .arg(&train)
            .arg("--out")
            .arg(&ckpt),
    );
    assert!(ckpt.exists(), "train output: {out}");
    let log = dir.path().join("model.ckpt.log.jsonl");
    assert!(log.exists());
    let log_text = fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(log_text.lines().next().unwrap()).unwrap();
    assert_eq!(first["epoch"], 1);
    assert!(first["val_f1"].is_number());

    let eval_out = run_ok(
        sfcad()
            .args(["eval"])
            .arg("--ckpt")
            .arg(&ckpt)
            .arg("--data")
            .arg(&csv)
            .args(["--split", "test"]),
    );
    let report: serde_json::Value = serde_json::from_str(&eval_out).unwrap();
    assert_eq!(report["dataset"], "wsd-like");
    assert_eq!(report["eval_feedback_mode"], "own_prediction");
    assert!(report["f1"].is_number());

    // determinism: a second eval prints the identical report modulo wall time
    let eval_out2 = run_ok(
        sfcad()
            .args(["eval"])
            .arg("--ckpt")
            .arg(&ckpt)
            .arg("--data")
            .arg(&csv)
            .args(["--split", "test"]),
    );
    let mut a: serde_json::Value = serde_json::from_str(&eval_out).unwrap();
    let mut b: serde_json::Value = serde_json::from_str(&eval_out2).unwrap();
    a["wall_ms"] = 0.into();
    b["wall_ms"] = 0.into();
    assert_eq!(a, b);

    let pred_csv = dir.path().join("preds.csv");
    run_ok(
        sfcad()
            .args(["predict"])
            .arg("--ckpt")
            .arg(&ckpt)
            .arg("--data")
            .arg(&csv)
            .arg("--out")
            .arg(&pred_csv),
    );
    let preds = fs::read_to_string(&pred_csv).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next().unwrap(), "time,label,prob");
    // whole series: T - l + 1 = 600 - 3 + 1 predictions
    assert_eq!(preds.lines().count() - 1, 598);
}

#[test]
fn failures_emit_machine_readable_errors() {
    let out = sfcad()
        .args(["eval", "--ckpt", "/nonexistent.ckpt", "--data", "/nonexistent.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert!(err["error"]["kind"].is_string());
    assert!(err["error"]["message"].is_string());

    let dir = tempdir().unwrap();
    let out = sfcad()
        .args(["generate", "--preset", "no-such-preset"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}
