//! Run configuration. Every field has a default so an empty TOML file is a
//! valid config; unknown keys are rejected so typos fail loudly instead of
//! silently running with defaults.

use std::path::{Path, PathBuf};

use dreamlane_core::env::{Difficulty, REWARD_DIMS};
use dreamlane_core::geom::TRAJ_LEN;
use dreamlane_core::rl::{CandidateSampler, SafetyFusion};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Imagination step counts the pipeline exposes on the command line.
pub const ALLOWED_STEPS: [usize; 3] = [1, 4, 16];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Validated but purely advisory: results never depend on it.
    pub workers: usize,
    pub scenes: ScenesConfig,
    pub vocab: VocabConfig,
    pub wm: WmSection,
    pub rm: RmSection,
    pub rl: RlSection,
    pub reward: RewardSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            workers: 1,
            scenes: ScenesConfig::default(),
            vocab: VocabConfig::default(),
            wm: WmSection::default(),
            rm: RmSection::default(),
            rl: RlSection::default(),
            reward: RewardSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenesConfig {
    pub train: usize,
    pub eval: usize,
    /// One of empty, static, dynamic, mixed.
    pub difficulty: String,
}

impl Default for ScenesConfig {
    fn default() -> Self {
        Self {
            train: 200,
            eval: 50,
            difficulty: "mixed".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    /// Control profiles sampled before end-state filtering.
    pub library_size: usize,
    /// Entries kept per scene after stratification.
    pub k: usize,
    pub x_thresh: f64,
    pub y_thresh: f64,
    pub theta_thresh_deg: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            library_size: 8192,
            k: 256,
            x_thresh: 10.0,
            y_thresh: 5.0,
            theta_thresh_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmSection {
    pub latent_width: usize,
    /// Finest shortcut subdivision; sampling steps must divide it.
    pub k_max: usize,
    pub action_emb: usize,
    pub obs_hidden: usize,
    pub velocity_hidden: Vec<usize>,
    /// Extra teacher-forcing trajectories drawn from each scene's vocabulary.
    pub vocab_per_scene: usize,
    pub train_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for WmSection {
    fn default() -> Self {
        Self {
            latent_width: 32,
            k_max: 16,
            action_emb: 16,
            obs_hidden: 32,
            velocity_hidden: vec![64, 64],
            vocab_per_scene: 2,
            train_steps: 400,
            batch: 16,
            lr: 1e-3,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmSection {
    /// Compressed token width; must divide the latent width.
    pub token_width: usize,
    /// Query / history token width.
    pub d: usize,
    pub omega: [f64; REWARD_DIMS],
    pub gamma: [f64; TRAJ_LEN],
    /// Labeled vocabulary entries drawn per training scene.
    pub items_per_scene: usize,
    /// Euler steps for the imagination that produces training latents.
    pub imagine_steps: usize,
    /// Fraction of labeled pairs kept for training.
    pub label_fraction: f64,
    pub train_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Held-out (scene, entry) pairs scored for the metrics report.
    pub eval_pairs: usize,
}

impl Default for RmSection {
    fn default() -> Self {
        Self {
            token_width: 8,
            d: 32,
            omega: [1.0; REWARD_DIMS],
            gamma: [1.0; TRAJ_LEN],
            items_per_scene: 8,
            imagine_steps: 1,
            label_fraction: 1.0,
            train_steps: 600,
            batch: 16,
            lr: 3e-3,
            weight_decay: 0.0,
            eval_pairs: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    pub policy_hidden: Vec<usize>,
    /// Softmax-drawn candidates per scene.
    pub g1: usize,
    /// Nearest-neighbor candidates per scene.
    pub g2: usize,
    pub temperature: f64,
    pub epsilon: f64,
    pub lambda_bc: f64,
    pub lambda_kl: f64,
    /// Euler steps for imagination while scoring candidates.
    pub steps: usize,
    /// "vocab" or "random".
    pub sampler: String,
    pub sigma_pos_base: f64,
    pub sigma_pos_slope: f64,
    pub sigma_theta_base: f64,
    pub sigma_theta_slope: f64,
    /// Behavior-cloning warmup before GRPO.
    pub bc_steps: usize,
    pub bc_batch: usize,
    pub bc_lr: f64,
    pub train_steps: usize,
    pub scenes_per_step: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for RlSection {
    fn default() -> Self {
        Self {
            policy_hidden: vec![64, 64],
            g1: 8,
            g2: 8,
            temperature: 1.0,
            epsilon: 0.2,
            lambda_bc: 1.0,
            lambda_kl: 0.1,
            steps: 1,
            sampler: "vocab".into(),
            sigma_pos_base: 0.2,
            sigma_pos_slope: 0.05,
            sigma_theta_base: 0.05,
            sigma_theta_slope: 0.01,
            bc_steps: 300,
            bc_batch: 8,
            bc_lr: 1e-3,
            train_steps: 200,
            scenes_per_step: 4,
            lr: 3e-4,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub w_safe: [f64; 4],
    pub w_task: [f64; 4],
    pub w_t: [f64; TRAJ_LEN],
    /// "log_floor" or "log_sigmoid".
    pub fusion: String,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            w_safe: [1.0; 4],
            w_task: [0.25; 4],
            w_t: [1.0 / TRAJ_LEN as f64; TRAJ_LEN],
            fusion: "log_floor".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Euler steps for the reward-model scoring pass.
    pub steps: usize,
    /// Scenes timed per step count in the latency report.
    pub latency_scenes: usize,
    pub latency_reps: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            steps: 1,
            latency_scenes: 8,
            latency_reps: 4,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn fusion(&self) -> Result<SafetyFusion> {
        match self.reward.fusion.as_str() {
            "log_floor" => Ok(SafetyFusion::LogFloor),
            "log_sigmoid" => Ok(SafetyFusion::LogSigmoid),
            other => Err(CliError::Config(format!(
                "reward.fusion must be \"log_floor\" or \"log_sigmoid\", got \"{other}\""
            ))),
        }
    }

    pub fn sampler(&self) -> Result<CandidateSampler> {
        match self.rl.sampler.as_str() {
            "vocab" => Ok(CandidateSampler::Vocabulary),
            "random" => Ok(CandidateSampler::RandomBaseline),
            other => Err(CliError::Config(format!(
                "rl.sampler must be \"vocab\" or \"random\", got \"{other}\""
            ))),
        }
    }

    pub fn difficulty(&self) -> Result<Difficulty> {
        Difficulty::parse(&self.scenes.difficulty)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(msg.into()))
            }
        }
        fn check_steps(v: usize, field: &str) -> Result<()> {
            check(
                ALLOWED_STEPS.contains(&v),
                &format!("{field} must be one of {ALLOWED_STEPS:?}, got {v}"),
            )
        }

        check(self.workers >= 1, "workers must be at least 1")?;
        check(self.scenes.train >= 1, "scenes.train must be at least 1")?;
        check(self.scenes.eval >= 1, "scenes.eval must be at least 1")?;
        self.difficulty()?;

        check(self.vocab.library_size >= 1, "vocab.library_size must be at least 1")?;
        check(self.vocab.k >= 2, "vocab.k must be at least 2")?;
        check(
            self.vocab.x_thresh > 0.0 && self.vocab.y_thresh > 0.0
                && self.vocab.theta_thresh_deg > 0.0,
            "vocab thresholds must be positive",
        )?;

        check(self.wm.latent_width >= 1, "wm.latent_width must be at least 1")?;
        check(self.wm.k_max >= 1, "wm.k_max must be at least 1")?;
        check(self.wm.train_steps >= 1, "wm.train_steps must be at least 1")?;
        check(self.wm.batch >= 1, "wm.batch must be at least 1")?;
        check(self.wm.lr > 0.0, "wm.lr must be positive")?;

        check(
            self.rm.token_width >= 1 && self.wm.latent_width % self.rm.token_width == 0,
            "rm.token_width must divide wm.latent_width",
        )?;
        check(self.rm.d >= 1, "rm.d must be at least 1")?;
        check(self.rm.items_per_scene >= 1, "rm.items_per_scene must be at least 1")?;
        check_steps(self.rm.imagine_steps, "rm.imagine_steps")?;
        check(
            self.rm.label_fraction > 0.0 && self.rm.label_fraction <= 1.0,
            "rm.label_fraction must lie in (0, 1]",
        )?;
        check(self.rm.train_steps >= 1, "rm.train_steps must be at least 1")?;
        check(self.rm.batch >= 1, "rm.batch must be at least 1")?;
        check(self.rm.lr > 0.0, "rm.lr must be positive")?;
        check(self.rm.eval_pairs >= 1, "rm.eval_pairs must be at least 1")?;

        check(self.rl.g1 + self.rl.g2 >= 2, "rl.g1 + rl.g2 must be at least 2")?;
        check(
            self.rl.g1 + self.rl.g2 <= self.vocab.k,
            "rl.g1 + rl.g2 must not exceed vocab.k",
        )?;
        check(self.rl.temperature > 0.0, "rl.temperature must be positive")?;
        check(
            self.rl.epsilon > 0.0 && self.rl.epsilon < 1.0,
            "rl.epsilon must lie in (0, 1)",
        )?;
        check_steps(self.rl.steps, "rl.steps")?;
        self.sampler()?;
        check(
            self.rl.sigma_pos_base > 0.0 && self.rl.sigma_theta_base > 0.0,
            "rl sigma bases must be positive",
        )?;
        check(
            self.rl.sigma_pos_slope >= 0.0 && self.rl.sigma_theta_slope >= 0.0,
            "rl sigma slopes must be nonnegative",
        )?;
        check(self.rl.bc_steps >= 1, "rl.bc_steps must be at least 1")?;
        check(self.rl.bc_batch >= 1, "rl.bc_batch must be at least 1")?;
        check(self.rl.bc_lr > 0.0, "rl.bc_lr must be positive")?;
        check(self.rl.train_steps >= 1, "rl.train_steps must be at least 1")?;
        check(self.rl.scenes_per_step >= 1, "rl.scenes_per_step must be at least 1")?;
        check(self.rl.lr > 0.0, "rl.lr must be positive")?;

        self.fusion()?;
        self.probe_reward_weights()?;

        check_steps(self.eval.steps, "eval.steps")?;
        check(self.eval.latency_scenes >= 1, "eval.latency_scenes must be at least 1")?;
        check(self.eval.latency_reps >= 1, "eval.latency_reps must be at least 1")?;
        Ok(())
    }

    /// Runs the fusion formula once on an all-ones table so weight-vector
    /// violations surface as config errors, not mid-stage failures.
    fn probe_reward_weights(&self) -> Result<()> {
        use dreamlane_core::env::{HorizonRewardTable, RewardVector};
        let table = HorizonRewardTable {
            rows: [RewardVector::from_array([1.0; REWARD_DIMS]); TRAJ_LEN],
        };
        dreamlane_core::rl::dense_final_reward(
            &table,
            &self.reward.w_t,
            &self.reward.w_safe,
            &self.reward.w_task,
            self.fusion()?,
        )
        .map_err(|e| CliError::Config(format!("reward weights: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_all_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.scenes.train, 200);
        assert_eq!(cfg.vocab.k, 256);
        assert_eq!(cfg.rl.g1 + cfg.rl.g2, 16);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        assert!(toml::from_str::<RunConfig>("sede = 7").is_err());
        assert!(toml::from_str::<RunConfig>("[scenes]\ntrian = 10").is_err());
        assert!(toml::from_str::<RunConfig>("[rl]\nepsilonn = 0.3").is_err());
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let cfg: RunConfig = toml::from_str("[scenes]\ntrain = 12").unwrap();
        assert_eq!(cfg.scenes.train, 12);
        assert_eq!(cfg.scenes.eval, 50);
        assert_eq!(cfg.wm.latent_width, 32);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.rl.epsilon = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.rm.token_width = 7;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.reward.w_task = [0.5, 0.5, 0.5, 0.5];
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.rl.steps = 3;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.rl.sampler = "greedy".into();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.workers = 0;
        assert!(cfg.validate().is_err());
    }
}
