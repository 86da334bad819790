//! CLI behavior: exit codes, stage chaining, and the offline report shape.

use std::path::Path;
use std::process::Command;

fn airshield() -> Command {
    Command::new(env!("CARGO_BIN_EXE_airshield"))
}

fn small_config(dir: &Path, with_gateway: bool) -> std::path::PathBuf {
    let gateway = if with_gateway {
        "\n[gateway]\nbackend = \"mock\"\n"
    } else {
        ""
    };
    let text = format!(
        r#"
master_seed = 424242
report_dir = "{}"

[scene]
bs_position = [0.0, 0.0, 15.0]
user_height = 2.0
carrier_frequency = 28.0e9
pathloss_exponent_los = 2.0
pathloss_exponent_nlos = 3.3
shadowing_sigma_db = 4.0
nlos_excess_delay_max = 3.0e-7
blockage_probability = 0.02
blockage_pathloss_db = 250.0
tx_power_dbm = 0.0

[[scene.user_grids]]
x_min = 5.0
x_max = 49.0
y_min = 5.0
y_max = 49.0
spacing = 1.0

[scene.nlos_probability_model]
model = "distance_dependent"
d_cutoff_m = 400.0

[regressor]
family = "linear"
learning_rate = 0.1
epochs = 150

[attack]
epsilon = 0.5
fract = 0.5

[split]
train_fraction = 0.8
test_count = 100

[detector]
kind = "logistic"
learning_rate = 0.5
epochs = 150

[attribution]
samples = 128
background_size = 64
{gateway}"#,
        dir.join("run").display()
    );
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_config_exits_2() {
    let out = airshield()
        .args(["emulate", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_backend_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), false);
    let out = airshield()
        .args(["emulate", "--config", cfg.to_str().unwrap(), "--backend", "quantum"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn attack_without_records_exits_with_stage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), false);
    let out = airshield()
        .args(["attack", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(12));
}

#[test]
fn classify_llm_without_gateway_exits_with_stage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), false);
    // Build the prerequisites first.
    for sub in ["emulate", "train-regressor", "attack", "train-detector"] {
        let out = airshield()
            .args([sub, "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = airshield()
        .args(["classify-llm", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(17));
}

#[test]
fn offline_report_marks_llm_sections_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), false);
    let out = airshield()
        .args(["run-experiment", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("run/report.md")).unwrap();
    assert!(report.contains("## Attack degradation"));
    assert!(report.contains("## Detector metrics"));
    assert!(report.contains("## LLM metrics\n\nskipped (no gateway configured)"));
    assert!(!dir.path().join("run/llm_metrics.txt").exists());
    assert!(!dir.path().join("run/transcripts.jsonl").exists());
}

#[test]
fn stage_chain_reproduces_run_experiment_bytes() {
    let dir_a = tempfile::tempdir().unwrap();
    let cfg_a = small_config(dir_a.path(), true);
    let out = airshield()
        .args(["run-experiment", "--config", cfg_a.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dir_b = tempfile::tempdir().unwrap();
    let cfg_b = small_config(dir_b.path(), true);
    for sub in [
        "emulate",
        "train-regressor",
        "attack",
        "attribute",
        "train-detector",
        "evaluate",
        "export-sft",
        "classify-llm",
        "explain",
    ] {
        let out = airshield()
            .args([sub, "--config", cfg_b.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }

    for name in [
        "records.csv",
        "regressor.txt",
        "labeled.csv",
        "degradation.txt",
        "attribution_samples.csv",
        "attribution_global.csv",
        "detector.txt",
        "detector_metrics.txt",
        "sft_train.jsonl",
        "sft_test.jsonl",
        "llm_metrics.txt",
        "explanations.md",
    ] {
        let a = std::fs::read(dir_a.path().join("run").join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join("run").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between run-experiment and the stage chain");
    }
}

#[test]
fn seed_override_changes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), false);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (seed, out) in [("1", &out_a), ("2", &out_b)] {
        let status = airshield()
            .args([
                "emulate",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                seed,
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(status.status.success());
    }
    let a = std::fs::read(out_a.join("records.csv")).unwrap();
    let b = std::fs::read(out_b.join("records.csv")).unwrap();
    assert_ne!(a, b);
}
