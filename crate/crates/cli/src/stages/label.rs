//! Oracle labeling of every vocabulary entry, both splits. One label file
//! per scene; line order matches vocabulary index order.

use dreamlane_core::env::{simulate_rewards, write_label_file, SAFETY_DIMS};
use dreamlane_core::geom::TRAJ_LEN;
use serde_json::json;

use crate::artifacts::{write_metrics, Split, Workspace};
use crate::config::RunConfig;
use crate::error::Result;
use crate::stages::common::{load_scene_set, load_vocabs};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(&cfg.out_dir);
    let mut lines_total = 0usize;
    // Fraction of entries with all safety dims intact at the full horizon;
    // a sanity signal that the vocabulary actually spans safe and unsafe.
    let mut safe_total = 0usize;

    for split in [Split::Train, Split::Eval] {
        let set = load_scene_set(&ws, cfg, split)?;
        let vocabs = load_vocabs(&ws, cfg, split)?;
        for (i, scene) in set.scenes.iter().enumerate() {
            let tables: Vec<_> = vocabs[i]
                .entries
                .iter()
                .map(|traj| simulate_rewards(scene, traj))
                .collect();
            safe_total += tables
                .iter()
                .filter(|t| {
                    let last = t.rows[TRAJ_LEN - 1].as_array();
                    SAFETY_DIMS.iter().all(|&d| last[d] == 1.0)
                })
                .count();
            lines_total += tables.len();
            let path = ws.label_path(split, i);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            write_label_file(&path, &tables)?;
        }
    }

    let safe_fraction = safe_total as f64 / lines_total as f64;
    let path = write_metrics(
        &ws,
        "label",
        cfg,
        json!({
            "scenes": cfg.scenes.train + cfg.scenes.eval,
            "lines_total": lines_total,
            "safe_fraction_h8": safe_fraction,
        }),
    )?;
    println!(
        "label: {lines_total} labeled trajectories, {:.1}% fully safe at h8, metrics {}",
        100.0 * safe_fraction,
        path.display()
    );
    Ok(())
}
