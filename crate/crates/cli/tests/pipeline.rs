//! End-to-end tests of the compiled binary: the full stage pipeline on a
//! tiny config, the byte-identical rerun guarantee, and the error surface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dreamlane")
}

/// Tiny but complete run: every stage finishes in well under a second.
fn tiny_config(dir: &Path) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"
seed = 7
out_dir = "{}"

[scenes]
train = 4
eval = 2

[vocab]
library_size = 512
k = 16

[wm]
train_steps = 20
batch = 8

[rm]
items_per_scene = 4
train_steps = 20
batch = 8
eval_pairs = 8

[rl]
bc_steps = 20
bc_batch = 4
train_steps = 3
scenes_per_step = 2
g1 = 3
g2 = 3

[eval]
latency_scenes = 1
latency_reps = 1
"#,
        out.display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_stage(config: &Path, stage: &str, extra: &[&str]) -> Output {
    Command::new(bin())
        .arg(stage)
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .expect("binary spawns")
}

fn run_all(config: &Path) {
    for stage in ["gen-data", "train-wm", "label", "train-rm", "train-rl", "eval"] {
        let out = run_stage(config, stage, &[]);
        assert!(
            out.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

/// Every artifact byte except wall-clock carriers (logs, latency report).
fn artifact_snapshot(out: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                if path.file_name().is_some_and(|n| n == "logs") {
                    continue;
                }
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "latency.json") {
                let rel = path.strip_prefix(out).unwrap().to_path_buf();
                map.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    map
}

#[test]
fn pipeline_runs_end_to_end_and_reruns_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = tiny_config(dir.path());
    let out = dir.path().join("out");

    run_all(&config);

    for artifact in [
        "scenes/train/scene_0003.txt",
        "scenes/eval/scene_0001.txt",
        "anchors/train/anchor_0000.txt",
        "vocabs/train/vocab_0000.txt",
        "vocabs/train/vocab_0000.prov.json",
        "labels/eval/label_0001.txt",
        "checkpoints/wm.ckpt",
        "checkpoints/rm.ckpt",
        "checkpoints/policy_bc.ckpt",
        "checkpoints/policy_rl.ckpt",
        "metrics/gen_data.json",
        "metrics/eval_bc.json",
        "metrics/eval_rl.json",
        "metrics/latency.json",
        "plots/wm_loss.csv",
        "plots/rm_loss.csv",
        "plots/bc_loss.csv",
        "plots/rl_reward.csv",
        "logs/train_wm.jsonl",
    ] {
        assert!(out.join(artifact).is_file(), "missing {artifact}");
    }

    // Reports carry the versioned schema and a stable shape.
    let eval_rl: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("metrics/eval_rl.json")).unwrap()).unwrap();
    assert_eq!(eval_rl["schema_version"], 1);
    assert_eq!(eval_rl["scenes"], 2);
    assert!(eval_rl["oracle"]["collision_rate"].is_number());
    assert!(eval_rl["oracle"]["horizon8_means"]["nc"].is_number());
    assert!(eval_rl["predicted"]["fused_mean"].is_number());
    let latency: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("metrics/latency.json")).unwrap()).unwrap();
    assert!(latency["ratio_16_over_1"].as_f64().unwrap() > 1.0);

    // Plot series are (step, metric) CSV.
    let csv = std::fs::read_to_string(out.join("plots/wm_loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,loss"));
    assert!(lines.next().unwrap().starts_with("0,"));

    let first = artifact_snapshot(&out);
    run_all(&config);
    let second = artifact_snapshot(&out);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (path, bytes) in &first {
        assert_eq!(bytes, &second[path], "{} changed across reruns", path.display());
    }
}

#[test]
fn missing_upstream_artifact_is_a_machine_readable_error() {
    let dir = TempDir::new().unwrap();
    let config = tiny_config(dir.path());
    let empty = dir.path().join("nothing");
    let out = run_stage(&config, "train-wm", &["--out", empty.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().next().expect("one error line");
    let err: serde_json::Value = serde_json::from_str(line).expect("stderr line is JSON");
    assert_eq!(err["error"], "missing_artifact");
    assert!(err["message"].as_str().unwrap().contains("gen-data"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "sede = 9\n").unwrap();
    let out = run_stage(&path, "gen-data", &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let err: serde_json::Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("sede"));
}

#[test]
fn out_of_domain_step_count_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = tiny_config(dir.path());
    let out = run_stage(&config, "eval", &["--steps", "3"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("possible values"), "{stderr}");
}

#[test]
fn seed_flag_flows_into_artifacts() {
    let dir = TempDir::new().unwrap();
    let config = tiny_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    for (out, seed) in [(&out_a, "7"), (&out_b, "8"), (&out_c, "7")] {
        let res = run_stage(
            &config,
            "gen-data",
            &["--seed", seed, "--out", out.to_str().unwrap()],
        );
        assert!(res.status.success());
    }
    let scene = |out: &Path| std::fs::read(out.join("scenes/train/scene_0000.txt")).unwrap();
    assert_ne!(scene(&out_a), scene(&out_b), "seed must change the data");
    assert_eq!(scene(&out_a), scene(&out_c), "same seed must reproduce bytes");
}
