//! Policy training: behavior-cloning warmup toward the anchors, then GRPO
//! against the frozen scoring stack, each phase checkpointed separately so
//! eval can compare the pre- and post-RL policies.

use std::time::Instant;

use dreamlane_core::env::simulate_rewards;
use dreamlane_core::geom::TRAJ_LEN;
use dreamlane_core::nn::{save_checkpoint, AdamW, ParamStore, Tape};
use dreamlane_core::rl::{
    flatten_trajectory, prepare_scene, rl_train_step_prepared, PolicyHead, PreparedScene,
    SceneSample,
};
use dreamlane_core::rng::SeededRng;
use serde_json::json;

use crate::artifacts::{streams, CsvSeries, JsonlLog, Split, Workspace};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::stages::common::{
    anchor_start_speed, build_policy, load_scene_set, load_scoring_stack, load_vocabs, rl_config,
};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(&cfg.out_dir);
    let (model_store, wm, rm) = load_scoring_stack(&ws, cfg)?;
    let set = load_scene_set(&ws, cfg, Split::Train)?;
    let vocabs = load_vocabs(&ws, cfg, Split::Train)?;
    let rl_cfg = rl_config(cfg)?;
    let (mut pi_store, policy) = build_policy(cfg);

    // Precomputed per-scene policy inputs and BC targets; the frozen world
    // model makes these fixed data for both phases.
    let samples: Vec<SceneSample> = (0..set.scenes.len())
        .map(|i| SceneSample {
            scene: set.scenes[i].clone(),
            start_speed: anchor_start_speed(&set.anchors[i]),
            anchor: set.anchors[i].clone(),
        })
        .collect();
    let inputs: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let history = wm.observation_history(&model_store, &s.scene, s.start_speed);
            dreamlane_core::rl::policy_input(&s.scene, s.start_speed, &history)
        })
        .collect();

    let mut log = JsonlLog::create(&ws.log_path("train_rl"))?;

    // Phase 1: pull the policy mean onto the anchors so GRPO starts from
    // plausible trajectories and pi_ref is meaningful.
    let mut bc_rng = SeededRng::new(cfg.seed, streams::RL_BC);
    let mut bc_opt = AdamW::new(&pi_store, cfg.rl.bc_lr, 0.0);
    let mut bc_series = CsvSeries::create(&ws.plot_path("bc_loss"), "loss")?;
    let mut bc_recent = Vec::new();
    let bc_report = (cfg.rl.bc_steps / 10).max(1);
    for step in 0..cfg.rl.bc_steps {
        let idx: Vec<usize> = (0..cfg.rl.bc_batch)
            .map(|_| bc_rng.index(samples.len()))
            .collect();
        let t0 = Instant::now();
        let loss = bc_step(&policy, &mut pi_store, &samples, &inputs, &idx, &mut bc_opt)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        log.append(&json!({"phase": "bc", "step": step, "loss": loss, "ms": ms}))?;
        bc_series.row(step, loss)?;
        bc_recent.push(loss);
        if bc_recent.len() > 20 {
            bc_recent.remove(0);
        }
        if step % bc_report == 0 || step + 1 == cfg.rl.bc_steps {
            println!("train-rl: bc step {step}/{} loss {loss:.5}", cfg.rl.bc_steps);
        }
    }
    let bc_final = mean(&bc_recent);

    let bc_ckpt = ws.policy_bc_ckpt();
    if let Some(parent) = bc_ckpt.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(&bc_ckpt, &pi_store)?;

    // Phase 2: GRPO. The reference policy is the BC result, cloned so the
    // KL term pulls toward a fixed mean while pi_store moves.
    let ref_store = pi_store.clone();
    let mut rl_rng = SeededRng::new(cfg.seed, streams::RL_TRAIN);
    let mut rl_opt = AdamW::new(&pi_store, cfg.rl.lr, cfg.rl.weight_decay);
    let mut reward_series = CsvSeries::create(&ws.plot_path("rl_reward"), "mean_reward")?;
    let mut first_rewards = Vec::new();
    let mut recent_rewards = Vec::new();
    let rl_report = (cfg.rl.train_steps / 10).max(1);
    for step in 0..cfg.rl.train_steps {
        let idx: Vec<usize> = (0..cfg.rl.scenes_per_step)
            .map(|_| rl_rng.index(samples.len()))
            .collect();
        let t0 = Instant::now();
        let mut prepared: Vec<PreparedScene> = Vec::with_capacity(idx.len());
        for &i in &idx {
            prepared.push(prepare_scene(
                &policy,
                &pi_store,
                &ref_store,
                &wm,
                &rm,
                &model_store,
                &vocabs[i],
                &samples[i],
                &rl_cfg,
                &mut rl_rng,
            )?);
        }
        let losses = rl_train_step_prepared(&policy, &mut pi_store, &prepared, &rl_cfg, &mut rl_opt)?;
        let collision_freq = oracle_collision_freq(&policy, &pi_store, &samples, &inputs, &idx)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        log.append(&json!({
            "phase": "rl",
            "step": step,
            "actor": losses.actor,
            "bc": losses.bc,
            "kl": losses.kl,
            "total": losses.total,
            "mean_reward": losses.mean_reward,
            "collision_freq": collision_freq,
            "ms": ms,
        }))?;
        reward_series.row(step, losses.mean_reward)?;
        if first_rewards.len() < 20 {
            first_rewards.push(losses.mean_reward);
        }
        recent_rewards.push(losses.mean_reward);
        if recent_rewards.len() > 20 {
            recent_rewards.remove(0);
        }
        if step % rl_report == 0 || step + 1 == cfg.rl.train_steps {
            println!(
                "train-rl: rl step {step}/{} total {:.4} reward {:.4}",
                cfg.rl.train_steps, losses.total, losses.mean_reward
            );
        }
    }

    let rl_ckpt = ws.policy_rl_ckpt();
    save_checkpoint(&rl_ckpt, &pi_store)?;

    let path = crate::artifacts::write_metrics(
        &ws,
        "train_rl",
        cfg,
        json!({
            "scenes": samples.len(),
            "bc": {
                "steps": cfg.rl.bc_steps,
                "final_loss_mean_last_20": bc_final,
                "checkpoint": bc_ckpt,
            },
            "rl": {
                "steps": cfg.rl.train_steps,
                "mean_reward_first_20": mean(&first_rewards),
                "mean_reward_last_20": mean(&recent_rewards),
                "checkpoint": rl_ckpt,
            },
        }),
    )?;
    println!(
        "train-rl: bc loss {bc_final:.4}, reward {:.4} -> {:.4}, metrics {}",
        mean(&first_rewards),
        mean(&recent_rewards),
        path.display()
    );
    Ok(())
}

/// Supervised warmup step: mean absolute deviation of the policy mean from
/// the anchor, averaged over the batch. Matches the GRPO bc term so the two
/// phases optimize the same imitation objective.
fn bc_step(
    policy: &PolicyHead,
    pi_store: &mut ParamStore,
    samples: &[SceneSample],
    inputs: &[Vec<f64>],
    idx: &[usize],
    opt: &mut AdamW,
) -> Result<f64> {
    let mut tape = Tape::new(pi_store);
    let mut terms = Vec::with_capacity(idx.len());
    for &i in idx {
        let mean = policy.mean_on_tape(&mut tape, &inputs[i])?;
        let anchor = tape.constant(flatten_trajectory(&samples[i].anchor).to_vec());
        let diff = tape.sub(mean, anchor);
        let abs = tape.abs(diff);
        terms.push(tape.mean(abs));
    }
    let stacked = tape.concat(&terms);
    let loss_id = tape.mean(stacked);
    let loss = tape.scalar(loss_id);
    if !loss.is_finite() {
        return Err(CliError::Stage("non-finite bc loss".into()));
    }
    let grads = tape.backward(loss_id);
    drop(tape);
    opt.step(pi_store, &grads)?;
    Ok(loss)
}

/// Oracle check of the current policy means on the step's scenes: fraction
/// whose horizon-8 no-collision flag is 0. Logged as a closed-loop signal;
/// never trained on.
fn oracle_collision_freq(
    policy: &PolicyHead,
    pi_store: &ParamStore,
    samples: &[SceneSample],
    inputs: &[Vec<f64>],
    idx: &[usize],
) -> Result<f64> {
    let mut collisions = 0usize;
    for &i in idx {
        let traj = policy.mean_trajectory(pi_store, &inputs[i])?;
        let table = simulate_rewards(&samples[i].scene, &traj);
        if table.rows[TRAJ_LEN - 1].nc == 0.0 {
            collisions += 1;
        }
    }
    Ok(collisions as f64 / idx.len().max(1) as f64)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
