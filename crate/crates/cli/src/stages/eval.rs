//! Closed-loop evaluation on held-out scenes plus the imagination latency
//! report. Each available policy checkpoint (BC warmup, post-GRPO) gets its
//! own report over the identical scene set, with per-scene rng streams so
//! predicted scores are paired across policies.

use std::time::Instant;

use dreamlane_core::env::{simulate_rewards, DIM_NAMES, REWARD_DIMS};
use dreamlane_core::geom::TRAJ_LEN;
use dreamlane_core::nn::ParamStore;
use dreamlane_core::rewardmodel::{score_trajectory, RewardModel};
use dreamlane_core::rl::policy_input;
use dreamlane_core::rng::SeededRng;
use dreamlane_core::worldmodel::WorldModelNet;
use serde_json::json;

use crate::artifacts::{streams, write_json, write_metrics, Split, Workspace};
use crate::config::RunConfig;
use crate::error::Result;
use crate::stages::common::{
    anchor_start_speed, fused_reward, load_policy, load_scene_set, load_scoring_stack,
};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(&cfg.out_dir);
    let (model_store, wm, rm) = load_scoring_stack(&ws, cfg)?;
    let set = load_scene_set(&ws, cfg, Split::Eval)?;

    // The BC checkpoint is the contract minimum; the RL report is added
    // when train-rl has produced one.
    let mut reports = Vec::new();
    let (bc_store, bc_policy) = load_policy(&ws, cfg, ws.policy_bc_ckpt())?;
    reports.push(("bc", bc_store, bc_policy));
    if ws.policy_rl_ckpt().exists() {
        let (rl_store, rl_policy) = load_policy(&ws, cfg, ws.policy_rl_ckpt())?;
        reports.push(("rl", rl_store, rl_policy));
    }

    for (tag, pi_store, policy) in &reports {
        let body = eval_policy(cfg, &set, &model_store, &wm, &rm, pi_store, policy)?;
        let path = write_metrics(&ws, &format!("eval_{tag}"), cfg, body)?;
        println!("eval: {tag} report {}", path.display());
    }

    let latency = latency_report(cfg, &set, &model_store, &wm)?;
    let path = ws.latency_path();
    write_json(&path, &latency)?;
    println!("eval: latency report {}", path.display());
    Ok(())
}

fn eval_policy(
    cfg: &RunConfig,
    set: &crate::stages::common::SceneSet,
    model_store: &ParamStore,
    wm: &WorldModelNet,
    rm: &RewardModel,
    pi_store: &ParamStore,
    policy: &dreamlane_core::rl::PolicyHead,
) -> Result<serde_json::Value> {
    let n = set.scenes.len();
    let mut dim_sums = [0.0; REWARD_DIMS];
    let mut fused_oracle = Vec::with_capacity(n);
    let mut fused_predicted = Vec::with_capacity(n);
    let mut collisions = 0usize;

    for i in 0..n {
        let scene = &set.scenes[i];
        let speed = anchor_start_speed(&set.anchors[i]);
        let history = wm.observation_history(model_store, scene, speed);
        let input = policy_input(scene, speed, &history);
        let traj = policy.mean_trajectory(pi_store, &input)?;

        let oracle = simulate_rewards(scene, &traj);
        let last = oracle.rows[TRAJ_LEN - 1].as_array();
        for (sum, v) in dim_sums.iter_mut().zip(last) {
            *sum += v;
        }
        if last[0] == 0.0 {
            collisions += 1;
        }
        fused_oracle.push(fused_reward(cfg, &oracle)?);

        // Same stream for scene i regardless of policy, so the imagination
        // noise is paired across the bc and rl reports.
        let mut rng = SeededRng::new(cfg.seed, streams::EVAL_BASE + i as u64);
        let predicted = score_trajectory(
            wm,
            rm,
            model_store,
            &history,
            &traj,
            cfg.eval.steps,
            &mut rng,
        )?;
        fused_predicted.push(fused_reward(cfg, &predicted)?);
    }

    let mut oracle_means = serde_json::Map::new();
    for (name, sum) in DIM_NAMES.iter().zip(dim_sums) {
        oracle_means.insert((*name).into(), json!(sum / n as f64));
    }
    Ok(json!({
        "scenes": n,
        "steps": cfg.eval.steps,
        "oracle": {
            "horizon8_means": oracle_means,
            "fused_mean": mean(&fused_oracle),
            "collision_rate": collisions as f64 / n as f64,
        },
        "predicted": {
            "fused_mean": mean(&fused_predicted),
        },
    }))
}

/// Wall-clock per imagined frame at 1, 4, and 16 Euler steps, measured on
/// anchor rollouts. This file carries timing and is exempt from the
/// byte-identical rerun guarantee.
fn latency_report(
    cfg: &RunConfig,
    set: &crate::stages::common::SceneSet,
    model_store: &ParamStore,
    wm: &WorldModelNet,
) -> Result<serde_json::Value> {
    let scenes = cfg.eval.latency_scenes.min(set.scenes.len());
    let reps = cfg.eval.latency_reps.max(1);
    let mut per_frame_ms = serde_json::Map::new();
    let mut per_frame = [0.0f64; 3];
    for (slot, &steps) in [1usize, 4, 16].iter().enumerate() {
        let mut rng = SeededRng::new(cfg.seed, streams::EVAL_BASE.wrapping_sub(1));
        // One untimed pass warms caches so the 1-step column is not billed
        // for first-touch effects.
        for i in 0..scenes {
            let speed = anchor_start_speed(&set.anchors[i]);
            let history = wm.observation_history(model_store, &set.scenes[i], speed);
            wm.imagine_rollout(model_store, &history, &set.anchors[i], steps, &mut rng)?;
        }
        let t0 = Instant::now();
        for _ in 0..reps {
            for i in 0..scenes {
                let speed = anchor_start_speed(&set.anchors[i]);
                let history = wm.observation_history(model_store, &set.scenes[i], speed);
                wm.imagine_rollout(model_store, &history, &set.anchors[i], steps, &mut rng)?;
            }
        }
        let frames = (reps * scenes * TRAJ_LEN) as f64;
        let ms = t0.elapsed().as_secs_f64() * 1e3 / frames;
        per_frame[slot] = ms;
        per_frame_ms.insert(format!("steps_{steps}"), json!(ms));
    }
    Ok(json!({
        "scenes": scenes,
        "reps": reps,
        "per_frame_ms": per_frame_ms,
        "ratio_16_over_1": per_frame[2] / per_frame[0],
    }))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
