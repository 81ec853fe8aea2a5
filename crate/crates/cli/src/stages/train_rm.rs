//! Reward-model training on imagined latents against oracle labels.
//!
//! The world model is loaded frozen into the same store the reward model
//! trains in; the optimizer only moves trainable parameters, so the rm.ckpt
//! artifact carries the full scoring stack with the world model bit-intact.

use std::time::Instant;

use dreamlane_core::env::HorizonRewardTable;
use dreamlane_core::geom::{Trajectory, TRAJ_LEN};
use dreamlane_core::nn::{save_checkpoint, AdamW, ParamStore};
use dreamlane_core::rewardmodel::{RewardModel, RmTrainItem};
use dreamlane_core::rng::SeededRng;
use dreamlane_core::worldmodel::WorldModelNet;
use serde_json::json;

use crate::artifacts::{streams, CsvSeries, JsonlLog, Split, Workspace};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::stages::common::{
    anchor_start_speed, load_labels, load_scene_set, load_vocabs, load_world_model, rm_config,
};
use crate::stats::auc;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(&cfg.out_dir);
    let (mut store, wm) = load_world_model(&ws, cfg)?;
    let mut init_rng = SeededRng::new(cfg.seed, streams::RM_INIT);
    let rm = RewardModel::new(&mut store, &mut init_rng, rm_config(cfg))?;

    let set = load_scene_set(&ws, cfg, Split::Train)?;
    let vocabs = load_vocabs(&ws, cfg, Split::Train)?;
    let labels = load_labels(&ws, cfg, Split::Train)?;

    // Labeled (scene, entry) pairs: a per-scene draw, then an optional
    // global subsample for data-scale runs.
    let mut data_rng = SeededRng::new(cfg.seed, streams::RM_DATA);
    let mut pairs = Vec::new();
    for (i, vocab) in vocabs.iter().enumerate() {
        for e in draw_distinct(&mut data_rng, vocab.entries.len(), cfg.rm.items_per_scene) {
            pairs.push((i, e));
        }
    }
    if cfg.rm.label_fraction < 1.0 {
        shuffle(&mut data_rng, &mut pairs);
        let keep = ((pairs.len() as f64) * cfg.rm.label_fraction).ceil() as usize;
        pairs.truncate(keep.max(1));
    }

    let mut items = Vec::with_capacity(pairs.len() * TRAJ_LEN);
    let mut histories: Vec<Option<Vec<Vec<f64>>>> = vec![None; set.scenes.len()];
    for &(i, e) in &pairs {
        let history = histories[i]
            .get_or_insert_with(|| {
                wm.observation_history(&store, &set.scenes[i], anchor_start_speed(&set.anchors[i]))
            })
            .clone();
        items.extend(build_items(
            &wm,
            &store,
            history,
            &vocabs[i].entries[e],
            &labels[i][e],
            cfg.rm.imagine_steps,
            &mut data_rng,
        )?);
    }
    if items.is_empty() {
        return Err(CliError::Stage("no reward-model training items".into()));
    }

    let mut opt = AdamW::new(&store, cfg.rm.lr, cfg.rm.weight_decay);
    let mut train_rng = SeededRng::new(cfg.seed, streams::RM_TRAIN);
    let mut log = JsonlLog::create(&ws.log_path("train_rm"))?;
    let mut series = CsvSeries::create(&ws.plot_path("rm_loss"), "loss")?;
    let mut recent = Vec::new();
    let report_every = (cfg.rm.train_steps / 10).max(1);

    for step in 0..cfg.rm.train_steps {
        let batch: Vec<RmTrainItem> = (0..cfg.rm.batch)
            .map(|_| items[train_rng.index(items.len())].clone())
            .collect();
        let t0 = Instant::now();
        let loss = rm.train_step(&mut store, &mut opt, &batch)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        log.append(&json!({"step": step, "loss": loss, "ms": ms}))?;
        series.row(step, loss)?;
        recent.push(loss);
        if recent.len() > 20 {
            recent.remove(0);
        }
        if step % report_every == 0 || step + 1 == cfg.rm.train_steps {
            println!("train-rm: step {step}/{} loss {loss:.5}", cfg.rm.train_steps);
        }
    }

    let ckpt = ws.rm_ckpt();
    if let Some(parent) = ckpt.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(&ckpt, &store)?;

    let heldout = heldout_report(&ws, cfg, &store, &wm, &rm)?;
    let final_loss = recent.iter().sum::<f64>() / recent.len() as f64;
    let path = crate::artifacts::write_metrics(
        &ws,
        "train_rm",
        cfg,
        json!({
            "pairs": pairs.len(),
            "items": items.len(),
            "label_fraction": cfg.rm.label_fraction,
            "steps": cfg.rm.train_steps,
            "final_loss_mean_last_20": final_loss,
            "heldout": heldout,
            "checkpoint": ckpt,
        }),
    )?;
    println!(
        "train-rm: {} items, final loss {final_loss:.5}, metrics {}",
        items.len(),
        path.display()
    );
    Ok(())
}

/// One imagination rollout expanded into an item per horizon prefix.
fn build_items(
    wm: &WorldModelNet,
    store: &ParamStore,
    history: Vec<Vec<f64>>,
    traj: &Trajectory,
    label: &HorizonRewardTable,
    steps: usize,
    rng: &mut SeededRng,
) -> Result<Vec<RmTrainItem>> {
    let imagined = wm.imagine_rollout(store, &history, traj, steps, rng)?;
    Ok((1..=TRAJ_LEN)
        .map(|h| RmTrainItem {
            history: history.clone(),
            imagined: imagined[..h].to_vec(),
            traj: traj.clone(),
            horizon: h,
            label: label.rows[h - 1],
        })
        .collect())
}

/// Safety-dim AUC and ep MAE over held-out (scene, entry) pairs, pooled
/// across horizons.
fn heldout_report(
    ws: &Workspace,
    cfg: &RunConfig,
    store: &ParamStore,
    wm: &WorldModelNet,
    rm: &RewardModel,
) -> Result<serde_json::Value> {
    let set = load_scene_set(ws, cfg, Split::Eval)?;
    let vocabs = load_vocabs(ws, cfg, Split::Eval)?;
    let labels = load_labels(ws, cfg, Split::Eval)?;

    let mut rng = SeededRng::new(cfg.seed, streams::RM_EVAL);
    let mut all_pairs = Vec::new();
    for (i, vocab) in vocabs.iter().enumerate() {
        for e in 0..vocab.entries.len() {
            all_pairs.push((i, e));
        }
    }
    shuffle(&mut rng, &mut all_pairs);
    all_pairs.truncate(cfg.rm.eval_pairs.min(all_pairs.len()));

    let mut scores: [Vec<f64>; 4] = Default::default();
    let mut flags: [Vec<bool>; 4] = Default::default();
    let mut ep_abs_err = Vec::new();
    let mut histories: Vec<Option<Vec<Vec<f64>>>> = vec![None; set.scenes.len()];
    for &(i, e) in &all_pairs {
        let history = histories[i]
            .get_or_insert_with(|| {
                wm.observation_history(store, &set.scenes[i], anchor_start_speed(&set.anchors[i]))
            })
            .clone();
        let traj = &vocabs[i].entries[e];
        let imagined = wm.imagine_rollout(store, &history, traj, cfg.rm.imagine_steps, &mut rng)?;
        for h in 1..=TRAJ_LEN {
            let pred = rm.predict_rewards(store, &history, &imagined[..h], traj, h)?;
            let predicted = pred.scores.as_array();
            let truth = labels[i][e].rows[h - 1].as_array();
            for d in 0..4 {
                scores[d].push(predicted[d]);
                flags[d].push(truth[d] == 1.0);
            }
            ep_abs_err.push((predicted[4] - truth[4]).abs());
        }
    }

    let mae_ep = ep_abs_err.iter().sum::<f64>() / ep_abs_err.len().max(1) as f64;
    Ok(json!({
        "pairs": all_pairs.len(),
        "auc_nc": auc(&scores[0], &flags[0]),
        "auc_dac": auc(&scores[1], &flags[1]),
        "auc_ddc": auc(&scores[2], &flags[2]),
        "auc_tlc": auc(&scores[3], &flags[3]),
        "mae_ep": mae_ep,
    }))
}

/// First `k` entries of a partial Fisher-Yates pass: distinct, order-stable
/// under a fixed rng.
pub(crate) fn draw_distinct(rng: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = i + rng.index(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

pub(crate) fn shuffle<T>(rng: &mut SeededRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.index(i + 1);
        items.swap(i, j);
    }
}
