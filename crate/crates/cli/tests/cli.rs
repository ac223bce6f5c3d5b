//! Drives the `camprompt` binary through the full workflow on a tiny
//! synthetic dataset.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn camprompt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camprompt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = camprompt(args);
    assert!(
        out.status.success(),
        "camprompt {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&ok(args)).unwrap()
}

const TINY: &str = r#"
input_resolution = 32
epochs = 2
warmup_epochs = 0
base_lr = 5e-3
batch_size = 4
keep_checkpoints = 1

[backbone]
img_size = 32
patch_size = 4
embed_dim = 16
depths = [1]
num_heads = [2]
window_size = 1
mlp_ratio = 2

[augmentation]
crop_size = 32
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_train_run_report_review_export() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    let runs = tmp.path().join("runs");
    let cfg = tmp.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();

    ok(&["synth", "--out", s(&data), "--n-train", "8", "--n-test", "3", "--size", "32", "--seed", "4"]);
    let ingest = json(&["ingest", "--data", s(&data)]);
    assert_eq!(ingest["splits"]["train"]["count"], 8, "{ingest}");
    assert_eq!(ingest["splits"]["test"]["count"], 3, "{ingest}");

    let trained = json(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&model)]);
    assert_eq!(trained["epoch_losses"].as_array().unwrap().len(), 2);
    assert!(model.join("config.json").is_file());

    let eval = json(&[
        "run", "--data", s(&data), "--model", s(&model), "--out", s(&runs),
        "--mode", "auto-eval", "--input", "smoothed", "--masks", "single", "-k", "3", "--threshold", "0.05",
    ]);
    assert_eq!(eval["setting"], "smoothed/single");
    assert_eq!(eval["conservation"]["holds"], true);
    let eval_id = eval["run_id"].as_str().unwrap().to_string();

    let table = ok(&["report", "--runs", s(&runs)]);
    assert!(table.contains("smoothed/single"), "{table}");
    let reports = json(&["report", "--runs", s(&runs), "--run", &eval_id, "--json"]);
    assert_eq!(reports.as_array().unwrap().len(), 1);

    let review = json(&[
        "run", "--data", s(&data), "--model", s(&model), "--out", s(&runs),
        "--mode", "review", "--masks", "multi", "-k", "2", "--threshold", "0.05",
    ]);
    assert!(review["mIoU"].is_null());
    let review_id = review["run_id"].as_str().unwrap();
    assert_ne!(review_id, eval_id);

    // nothing decided yet: the export is an empty train split
    let exported = json(&["export", "--runs", s(&runs), "--run", review_id, "--out", s(&tmp.path().join("exp"))]);
    assert_eq!(exported["n_accepted"], 0);
    assert!(exported["n_undecided"].as_u64().unwrap() > 0);

    // review runs have no report; asking for one by id is an error
    let out = camprompt(&["report", "--runs", s(&runs), "--run", review_id]);
    assert!(!out.status.success());
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = TempDir::new().unwrap();
    let out = camprompt(&["run", "--data", "x", "--model", "y", "--out", "z", "--mode", "sideways"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sideways"));

    let out = camprompt(&["run", "--data", "x", "--model", "y", "--out", "z", "--backend", "command"]);
    assert!(!out.status.success(), "command backend needs --backend-cmd");

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "epochs = 3\nwarmup_epochs = 3\n").unwrap();
    let out = camprompt(&["train", "--data", s(tmp.path()), "--config", s(&cfg), "--out", s(&tmp.path().join("m"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warmup_epochs"));

    let out = camprompt(&["export", "--runs", s(tmp.path()), "--run", "../etc", "--out", s(tmp.path())]);
    assert!(!out.status.success());
}
