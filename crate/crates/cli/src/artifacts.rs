//! Artifact layout under the output directory, plus the metrics, log, and
//! plot writers. Everything written here is deterministic except the JSONL
//! training logs (per-step `ms` field) and the latency report, which are the
//! only files allowed to differ between reruns of an identical config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }

    pub fn count(self, cfg: &RunConfig) -> usize {
        match self {
            Split::Train => cfg.scenes.train,
            Split::Eval => cfg.scenes.eval,
        }
    }

    /// Global slot index of this split's i-th scene; eval slots follow the
    /// training slots so the two splits never share RNG streams.
    pub fn slot(self, cfg: &RunConfig, i: usize) -> usize {
        match self {
            Split::Train => i,
            Split::Eval => cfg.scenes.train + i,
        }
    }
}

/// RNG stream allocation. Streams are spaced far apart so per-unit derived
/// streams never collide across stages.
pub mod streams {
    /// Base for per-scene generation; slot i uses GEN_BASE + i.
    pub const GEN_BASE: u64 = 1_000_000;
    pub const WM_INIT: u64 = 2_000_000;
    pub const WM_TRAIN: u64 = 2_000_001;
    pub const RM_INIT: u64 = 3_000_000;
    pub const RM_DATA: u64 = 3_000_001;
    pub const RM_TRAIN: u64 = 3_000_002;
    pub const RM_EVAL: u64 = 3_000_003;
    pub const PI_INIT: u64 = 4_000_000;
    pub const RL_BC: u64 = 4_000_001;
    pub const RL_TRAIN: u64 = 4_000_002;
    pub const EVAL_BASE: u64 = 5_000_000;
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    fn indexed(&self, dir: &str, split: Split, stem: &str, i: usize, ext: &str) -> PathBuf {
        self.root
            .join(dir)
            .join(split.dir())
            .join(format!("{stem}_{i:04}.{ext}"))
    }

    pub fn scene_path(&self, split: Split, i: usize) -> PathBuf {
        self.indexed("scenes", split, "scene", i, "txt")
    }

    pub fn anchor_path(&self, split: Split, i: usize) -> PathBuf {
        self.indexed("anchors", split, "anchor", i, "txt")
    }

    pub fn vocab_traj_path(&self, split: Split, i: usize) -> PathBuf {
        self.indexed("vocabs", split, "vocab", i, "txt")
    }

    pub fn vocab_prov_path(&self, split: Split, i: usize) -> PathBuf {
        self.indexed("vocabs", split, "vocab", i, "prov.json")
    }

    pub fn label_path(&self, split: Split, i: usize) -> PathBuf {
        self.indexed("labels", split, "label", i, "txt")
    }

    pub fn wm_ckpt(&self) -> PathBuf {
        self.root.join("checkpoints").join("wm.ckpt")
    }

    /// Full scoring stack: world-model and reward-model parameters together.
    pub fn rm_ckpt(&self) -> PathBuf {
        self.root.join("checkpoints").join("rm.ckpt")
    }

    pub fn policy_bc_ckpt(&self) -> PathBuf {
        self.root.join("checkpoints").join("policy_bc.ckpt")
    }

    pub fn policy_rl_ckpt(&self) -> PathBuf {
        self.root.join("checkpoints").join("policy_rl.ckpt")
    }

    pub fn metrics_path(&self, name: &str) -> PathBuf {
        self.root.join("metrics").join(format!("{name}.json"))
    }

    pub fn log_path(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{name}.jsonl"))
    }

    pub fn plot_path(&self, name: &str) -> PathBuf {
        self.root.join("plots").join(format!("{name}.csv"))
    }

    pub fn latency_path(&self) -> PathBuf {
        self.root.join("metrics").join("latency.json")
    }

    /// Fails with the producing command when an upstream artifact is absent.
    pub fn require(&self, path: PathBuf, producer: &'static str) -> Result<PathBuf> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact { path, producer })
        }
    }
}

fn create_with_parents(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(File::create(path)?)
}

/// Writes one stage metrics file: versioned schema, stage name, resolved
/// config echo, and the stage-specific body fields at top level.
pub fn write_metrics(ws: &Workspace, name: &str, cfg: &RunConfig, body: Value) -> Result<PathBuf> {
    let mut root = json!({
        "schema_version": METRICS_SCHEMA_VERSION,
        "stage": name,
        "seed": cfg.seed,
        "config": cfg,
    });
    let map = root.as_object_mut().expect("metrics root is an object");
    match body {
        Value::Object(fields) => {
            for (k, v) in fields {
                map.insert(k, v);
            }
        }
        other => {
            map.insert("body".into(), other);
        }
    }
    let path = ws.metrics_path(name);
    let mut f = create_with_parents(&path)?;
    serde_json::to_writer_pretty(&mut f, &root)
        .map_err(|e| CliError::Stage(format!("metrics serialization: {e}")))?;
    writeln!(f)?;
    Ok(path)
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut f = create_with_parents(path)?;
    serde_json::to_writer_pretty(&mut f, value)
        .map_err(|e| CliError::Stage(format!("json serialization: {e}")))?;
    writeln!(f)?;
    Ok(())
}

/// Append-per-step JSONL training log. Carries wall-clock fields, so it is
/// excluded from idempotence comparisons.
pub struct JsonlLog {
    w: BufWriter<File>,
}

impl JsonlLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            w: BufWriter::new(create_with_parents(path)?),
        })
    }

    pub fn append(&mut self, value: &Value) -> Result<()> {
        serde_json::to_writer(&mut self.w, value)
            .map_err(|e| CliError::Stage(format!("log serialization: {e}")))?;
        writeln!(self.w)?;
        Ok(())
    }
}

/// Two-column (step, value) series for plotting.
pub struct CsvSeries {
    w: BufWriter<File>,
}

impl CsvSeries {
    pub fn create(path: &Path, value_name: &str) -> Result<Self> {
        let mut w = BufWriter::new(create_with_parents(path)?);
        writeln!(w, "step,{value_name}")?;
        Ok(Self { w })
    }

    pub fn row(&mut self, step: usize, value: f64) -> Result<()> {
        writeln!(self.w, "{step},{value}")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_split_scoped_and_zero_padded() {
        let ws = Workspace::new(Path::new("/tmp/run"));
        assert_eq!(
            ws.scene_path(Split::Train, 3),
            PathBuf::from("/tmp/run/scenes/train/scene_0003.txt")
        );
        assert_eq!(
            ws.label_path(Split::Eval, 41),
            PathBuf::from("/tmp/run/labels/eval/label_0041.txt")
        );
        assert_eq!(
            ws.vocab_prov_path(Split::Eval, 0),
            PathBuf::from("/tmp/run/vocabs/eval/vocab_0000.prov.json")
        );
    }

    #[test]
    fn eval_slots_follow_train_slots() {
        let cfg = RunConfig::default();
        assert_eq!(Split::Train.slot(&cfg, 5), 5);
        assert_eq!(Split::Eval.slot(&cfg, 0), cfg.scenes.train);
    }

    #[test]
    fn missing_artifact_reports_producer() {
        let ws = Workspace::new(Path::new("/nonexistent"));
        let err = ws
            .require(ws.wm_ckpt(), "train-wm")
            .expect_err("path does not exist");
        assert_eq!(err.kind(), "missing_artifact");
        assert!(err.to_string().contains("train-wm"));
    }
}
