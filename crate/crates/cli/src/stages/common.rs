//! Shared loading and model-assembly helpers for the pipeline stages.

use dreamlane_core::env::{read_scene, HorizonRewardTable, Scene};
use dreamlane_core::geom::{read_trajectories, Pose, Trajectory, DEFAULT_V_MAX, DT};
use dreamlane_core::nn::{load_checkpoint, ParamStore};
use dreamlane_core::rewardmodel::{RewardModel, RmConfig};
use dreamlane_core::rl::{dense_final_reward, PolicyHead, RlConfig};
use dreamlane_core::rng::SeededRng;
use dreamlane_core::vocab::{read_vocabulary, TrajectoryVocabulary};
use dreamlane_core::worldmodel::{WmConfig, WorldModelNet};

use crate::artifacts::{streams, Split, Workspace};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub struct SceneSet {
    pub scenes: Vec<Scene>,
    pub anchors: Vec<Trajectory>,
}

pub fn load_scene_set(ws: &Workspace, cfg: &RunConfig, split: Split) -> Result<SceneSet> {
    let n = split.count(cfg);
    let mut scenes = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    for i in 0..n {
        let scene_path = ws.require(ws.scene_path(split, i), "gen-data")?;
        scenes.push(read_scene(&scene_path)?);
        let anchor_path = ws.require(ws.anchor_path(split, i), "gen-data")?;
        let mut trajs = read_trajectories(&anchor_path, DEFAULT_V_MAX)?;
        if trajs.len() != 1 {
            return Err(CliError::Stage(format!(
                "{}: expected exactly one anchor, found {}",
                anchor_path.display(),
                trajs.len()
            )));
        }
        anchors.push(trajs.pop().expect("length checked above"));
    }
    Ok(SceneSet { scenes, anchors })
}

pub fn load_vocabs(
    ws: &Workspace,
    cfg: &RunConfig,
    split: Split,
) -> Result<Vec<TrajectoryVocabulary>> {
    (0..split.count(cfg))
        .map(|i| {
            let traj = ws.require(ws.vocab_traj_path(split, i), "gen-data")?;
            let prov = ws.require(ws.vocab_prov_path(split, i), "gen-data")?;
            Ok(read_vocabulary(&traj, &prov)?)
        })
        .collect()
}

pub fn load_labels(
    ws: &Workspace,
    cfg: &RunConfig,
    split: Split,
) -> Result<Vec<Vec<HorizonRewardTable>>> {
    (0..split.count(cfg))
        .map(|i| {
            let path = ws.require(ws.label_path(split, i), "label")?;
            Ok(dreamlane_core::env::read_label_file(&path)?)
        })
        .collect()
}

/// Chord speed into the anchor's first pose; the scene's context speed.
pub fn anchor_start_speed(anchor: &Trajectory) -> f64 {
    anchor.pose(0).distance(&Pose::ORIGIN) / DT
}

pub fn wm_config(cfg: &RunConfig) -> WmConfig {
    WmConfig {
        latent_width: cfg.wm.latent_width,
        k_max: cfg.wm.k_max,
        action_emb: cfg.wm.action_emb,
        obs_hidden: cfg.wm.obs_hidden,
        velocity_hidden: cfg.wm.velocity_hidden.clone(),
    }
}

pub fn rm_config(cfg: &RunConfig) -> RmConfig {
    RmConfig {
        latent_width: cfg.wm.latent_width,
        token_width: cfg.rm.token_width,
        d: cfg.rm.d,
        omega: cfg.rm.omega,
        gamma: cfg.rm.gamma,
    }
}

pub fn rl_config(cfg: &RunConfig) -> Result<RlConfig> {
    Ok(RlConfig {
        epsilon: cfg.rl.epsilon,
        lambda_bc: cfg.rl.lambda_bc,
        lambda_kl: cfg.rl.lambda_kl,
        g1: cfg.rl.g1,
        g2: cfg.rl.g2,
        temperature: cfg.rl.temperature,
        rollout_steps: cfg.rl.steps,
        sigma_pos_base: cfg.rl.sigma_pos_base,
        sigma_pos_slope: cfg.rl.sigma_pos_slope,
        sigma_theta_base: cfg.rl.sigma_theta_base,
        sigma_theta_slope: cfg.rl.sigma_theta_slope,
        w_safe: cfg.reward.w_safe,
        w_task: cfg.reward.w_task,
        w_t: cfg.reward.w_t,
        fusion: cfg.fusion()?,
        sampler: cfg.sampler()?,
    })
}

/// Fresh world model at deterministic init; parameter names and shapes match
/// any checkpoint written from the same config.
pub fn build_world_model(cfg: &RunConfig) -> Result<(ParamStore, WorldModelNet)> {
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(cfg.seed, streams::WM_INIT);
    let wm = WorldModelNet::new(&mut store, &mut rng, wm_config(cfg))?;
    Ok((store, wm))
}

/// World model with trained weights, frozen for downstream stages.
pub fn load_world_model(ws: &Workspace, cfg: &RunConfig) -> Result<(ParamStore, WorldModelNet)> {
    let (mut store, wm) = build_world_model(cfg)?;
    let path = ws.require(ws.wm_ckpt(), "train-wm")?;
    load_checkpoint(&path, &mut store)?;
    store.set_trainable_prefix("wm.", false);
    Ok((store, wm))
}

/// Full frozen scoring stack (world model + reward model) from rm.ckpt.
pub fn load_scoring_stack(
    ws: &Workspace,
    cfg: &RunConfig,
) -> Result<(ParamStore, WorldModelNet, RewardModel)> {
    let (mut store, wm) = build_world_model(cfg)?;
    let mut rng = SeededRng::new(cfg.seed, streams::RM_INIT);
    let rm = RewardModel::new(&mut store, &mut rng, rm_config(cfg))?;
    let path = ws.require(ws.rm_ckpt(), "train-rm")?;
    load_checkpoint(&path, &mut store)?;
    store.set_trainable_prefix("wm.", false);
    store.set_trainable_prefix("rm.", false);
    Ok((store, wm, rm))
}

pub fn build_policy(cfg: &RunConfig) -> (ParamStore, PolicyHead) {
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(cfg.seed, streams::PI_INIT);
    let policy = PolicyHead::new(&mut store, &mut rng, cfg.wm.latent_width, &cfg.rl.policy_hidden);
    (store, policy)
}

pub fn load_policy(ws: &Workspace, cfg: &RunConfig, ckpt: std::path::PathBuf) -> Result<(ParamStore, PolicyHead)> {
    let (mut store, policy) = build_policy(cfg);
    let path = ws.require(ckpt, "train-rl")?;
    load_checkpoint(&path, &mut store)?;
    Ok((store, policy))
}

/// Oracle-or-predicted table fused down to one scalar with the config's
/// weight vectors.
pub fn fused_reward(cfg: &RunConfig, table: &HorizonRewardTable) -> Result<f64> {
    Ok(dense_final_reward(
        table,
        &cfg.reward.w_t,
        &cfg.reward.w_safe,
        &cfg.reward.w_task,
        cfg.fusion()?,
    )?)
}
