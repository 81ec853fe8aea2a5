//! World-model training on teacher-forced latents from anchors plus a few
//! vocabulary trajectories per scene.

use std::time::Instant;

use dreamlane_core::nn::{save_checkpoint, AdamW};
use dreamlane_core::rng::SeededRng;
use dreamlane_core::worldmodel::WmTrainItem;
use serde_json::json;

use crate::artifacts::{streams, CsvSeries, JsonlLog, Split, Workspace};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::stages::common::{build_world_model, load_scene_set, load_vocabs};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(&cfg.out_dir);
    let set = load_scene_set(&ws, cfg, Split::Train)?;
    let (mut store, wm) = build_world_model(cfg)?;

    // Teacher-forcing corpus. Encoding uses the frozen observation encoder,
    // so item construction is deterministic given the init stream.
    let mut rng = SeededRng::new(cfg.seed, streams::WM_TRAIN);
    let mut items: Vec<WmTrainItem> = Vec::new();
    let vocabs = if cfg.wm.vocab_per_scene > 0 {
        Some(load_vocabs(&ws, cfg, Split::Train)?)
    } else {
        None
    };
    for (i, scene) in set.scenes.iter().enumerate() {
        items.extend(wm.teacher_forcing_items(&store, scene, &set.anchors[i]));
        if let Some(vocabs) = &vocabs {
            let entries = &vocabs[i].entries;
            for _ in 0..cfg.wm.vocab_per_scene.min(entries.len()) {
                let entry = &entries[rng.index(entries.len())];
                items.extend(wm.teacher_forcing_items(&store, scene, entry));
            }
        }
    }
    if items.is_empty() {
        return Err(CliError::Stage("no world-model training items".into()));
    }

    let mut opt = AdamW::new(&store, cfg.wm.lr, cfg.wm.weight_decay);
    let mut log = JsonlLog::create(&ws.log_path("train_wm"))?;
    let mut series = CsvSeries::create(&ws.plot_path("wm_loss"), "loss")?;
    let mut recent = Vec::new();
    let report_every = (cfg.wm.train_steps / 10).max(1);

    for step in 0..cfg.wm.train_steps {
        let batch: Vec<WmTrainItem> = (0..cfg.wm.batch)
            .map(|_| items[rng.index(items.len())].clone())
            .collect();
        let t0 = Instant::now();
        let loss = wm.train_step(&mut store, &mut opt, &batch, &mut rng)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        log.append(&json!({"step": step, "loss": loss, "ms": ms}))?;
        series.row(step, loss)?;
        recent.push(loss);
        if recent.len() > 20 {
            recent.remove(0);
        }
        if step % report_every == 0 || step + 1 == cfg.wm.train_steps {
            println!("train-wm: step {step}/{} loss {loss:.5}", cfg.wm.train_steps);
        }
    }

    let ckpt = ws.wm_ckpt();
    if let Some(parent) = ckpt.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(&ckpt, &store)?;

    let final_loss = recent.iter().sum::<f64>() / recent.len() as f64;
    let path = crate::artifacts::write_metrics(
        &ws,
        "train_wm",
        cfg,
        json!({
            "items": items.len(),
            "steps": cfg.wm.train_steps,
            "batch": cfg.wm.batch,
            "final_loss_mean_last_20": final_loss,
            "checkpoint": ckpt,
        }),
    )?;
    println!(
        "train-wm: {} items, final loss {final_loss:.5}, checkpoint {}, metrics {}",
        items.len(),
        ckpt.display(),
        path.display()
    );
    Ok(())
}
