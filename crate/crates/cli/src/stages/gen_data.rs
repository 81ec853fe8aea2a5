//! Scene, anchor, and vocabulary generation.
//!
//! Each scene slot owns one RNG stream, so slots are reproducible in
//! isolation and independent of each other. An anchor is accepted only if
//! the oracle reports nc = dac = ddc = tlc = 1 at every horizon; among the
//! safe candidates found, the one with the best fused reward is kept, so
//! anchors are expert-like rather than merely first-safe.

use dreamlane_core::env::{
    generate_scene, rollout_dynamics, simulate_rewards, write_scene, Controls, Scene,
    MAX_YAW_RATE, SAFETY_DIMS,
};
use dreamlane_core::geom::{write_trajectories, Pose, Trajectory, DEFAULT_V_MAX, DT, TRAJ_LEN};
use dreamlane_core::rng::SeededRng;
use dreamlane_core::vocab::{
    filter_by_end_state, generate_library, stratified_select, TrajectoryVocabulary,
    VocabProvenance,
};
use serde_json::json;

use crate::artifacts::{streams, write_metrics, Split, Workspace};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::stages::common::fused_reward;

/// Control-sample budget per scene before it is regenerated.
const ANCHOR_ATTEMPTS: usize = 10_000;
/// Scenes tried per slot before the stage gives up.
const MAX_REGENERATIONS: usize = 32;
/// Safe anchors collected before picking the best-fused one.
const POOL_TARGET: usize = 6;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::new(&cfg.out_dir);
    let difficulty = cfg.difficulty()?;

    let mut attempts_total = 0usize;
    let mut regenerations_total = 0usize;
    let mut vocab_shortfalls = 0usize;
    let mut fused_values = Vec::new();

    for split in [Split::Train, Split::Eval] {
        for i in 0..split.count(cfg) {
            let slot = split.slot(cfg, i);
            let mut rng = SeededRng::new(cfg.seed, streams::GEN_BASE + slot as u64);
            let anchor_id = format!("{}/{i:04}", split.dir());

            let mut accepted = None;
            for regen in 0..MAX_REGENERATIONS {
                let scene = generate_scene(&mut rng, difficulty);
                let search = search_anchor(cfg, &scene, &mut rng)?;
                attempts_total += search.attempts;
                let Some((anchor, fused)) = search.best else {
                    regenerations_total += 1;
                    continue;
                };
                // A vocabulary that cannot be built around this anchor makes
                // the scene useless downstream; regenerate it too.
                match build_vocab(cfg, &anchor, &anchor_id, &mut rng) {
                    Ok(vocab) => {
                        accepted = Some((scene, anchor, fused, vocab, regen));
                        break;
                    }
                    Err(_) => {
                        regenerations_total += 1;
                        continue;
                    }
                }
            }
            let Some((scene, anchor, fused, vocab, _)) = accepted else {
                return Err(CliError::Stage(format!(
                    "scene slot {anchor_id}: no safe anchor after {MAX_REGENERATIONS} scenes x \
                     {ANCHOR_ATTEMPTS} control samples"
                )));
            };

            if vocab.is_short() {
                vocab_shortfalls += 1;
            }
            fused_values.push(fused);
            write_scene(&ensure_parent(ws.scene_path(split, i))?, &scene)?;
            write_trajectories(
                &ensure_parent(ws.anchor_path(split, i))?,
                std::slice::from_ref(&anchor),
            )?;
            dreamlane_core::vocab::write_vocabulary(
                &ensure_parent(ws.vocab_traj_path(split, i))?,
                &ensure_parent(ws.vocab_prov_path(split, i))?,
                &vocab,
            )?;
        }
    }

    let n = fused_values.len() as f64;
    let mean_fused = fused_values.iter().sum::<f64>() / n;
    let min_fused = fused_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let path = write_metrics(
        &ws,
        "gen_data",
        cfg,
        json!({
            "n_train": cfg.scenes.train,
            "n_eval": cfg.scenes.eval,
            "difficulty": cfg.scenes.difficulty,
            "anchor_attempts_total": attempts_total,
            "scene_regenerations": regenerations_total,
            "vocab_shortfalls": vocab_shortfalls,
            "anchor_fused_mean": mean_fused,
            "anchor_fused_min": min_fused,
        }),
    )?;
    println!(
        "gen-data: {} scenes ({} regenerated), anchor fused mean {:.3}, metrics {}",
        cfg.scenes.train + cfg.scenes.eval,
        regenerations_total,
        mean_fused,
        path.display()
    );
    Ok(())
}

fn ensure_parent(path: std::path::PathBuf) -> Result<std::path::PathBuf> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(path)
}

fn build_vocab(
    cfg: &RunConfig,
    anchor: &Trajectory,
    anchor_id: &str,
    rng: &mut SeededRng,
) -> Result<TrajectoryVocabulary> {
    let theta_thresh = cfg.vocab.theta_thresh_deg.to_radians();
    let provenance = VocabProvenance {
        source_size: cfg.vocab.library_size,
        x_thresh: cfg.vocab.x_thresh,
        y_thresh: cfg.vocab.y_thresh,
        theta_thresh,
        anchor_id: anchor_id.to_string(),
        requested_k: cfg.vocab.k,
        seed: rng.seed(),
    };
    let library = generate_library(rng, cfg.vocab.library_size);
    let filtered = filter_by_end_state(
        &library,
        anchor,
        cfg.vocab.x_thresh,
        cfg.vocab.y_thresh,
        theta_thresh,
    );
    Ok(stratified_select(&filtered, anchor, cfg.vocab.k, provenance)?)
}

struct AnchorSearch {
    best: Option<(Trajectory, f64)>,
    attempts: usize,
}

/// Samples tracking plans until enough oracle-safe trajectories are found.
fn search_anchor(cfg: &RunConfig, scene: &Scene, rng: &mut SeededRng) -> Result<AnchorSearch> {
    // Arc position of the nearest corridor-blocking obstacle, if any; plans
    // may choose to stop short of it instead of dodging.
    let blocking_arc = scene
        .static_obstacles
        .iter()
        .filter(|r| scene.rect_intersects_corridor(r))
        .map(|r| scene.project(r.cx, r.cy).s)
        .fold(f64::INFINITY, f64::min);
    let stop_line_arc = scene
        .stop_line
        .filter(|sl| sl.active)
        .map(|sl| sl.arc_pos);

    let mut best: Option<(Trajectory, f64)> = None;
    let mut found = 0usize;
    let mut attempts = 0usize;
    for attempt in 0..ANCHOR_ATTEMPTS {
        attempts = attempt + 1;
        let plan = sample_plan(cfg, scene, rng, attempt, blocking_arc, stop_line_arc);
        let controls = track_plan(scene, &plan, rng);
        let traj = rollout_dynamics(&Pose::ORIGIN, &controls)
            .expect("tracker clamps controls into range");
        let table = simulate_rewards(scene, &traj);
        // Safety flags are running ORs, so the last row covers all horizons.
        let last = table.rows[TRAJ_LEN - 1].as_array();
        if SAFETY_DIMS.iter().any(|&d| last[d] != 1.0) {
            continue;
        }
        let fused = fused_reward(cfg, &table)?;
        if best.as_ref().is_none_or(|(_, b)| fused > *b) {
            best = Some((traj, fused));
        }
        found += 1;
        if found >= POOL_TARGET {
            break;
        }
    }
    Ok(AnchorSearch { best, attempts })
}

struct Plan {
    target_v: f64,
    /// Signed lateral offset from the centerline the tracker holds.
    lateral: f64,
    /// Arc position to stop short of, margins already subtracted.
    stop_at: Option<f64>,
    steer_noise: f64,
    speed_noise: f64,
}

fn sample_plan(
    cfg: &RunConfig,
    scene: &Scene,
    rng: &mut SeededRng,
    attempt: usize,
    blocking_arc: f64,
    stop_line_arc: Option<f64>,
) -> Plan {
    let _ = cfg;
    let limit = scene.speed_limit.min(DEFAULT_V_MAX);
    // First attempts are deterministic: a clean centerline follow, then a
    // full stop (always safe when the spawn area is clear).
    let (target_v, lateral, dodge, noise) = match attempt {
        0 => (0.8 * limit, 0.0, false, false),
        1 => (0.0, 0.0, false, false),
        _ => (
            rng.uniform_range(0.2, 1.0) * limit,
            rng.uniform_range(-1.0, 1.0),
            rng.bernoulli(0.5),
            true,
        ),
    };

    // An active stop line is a hard constraint; a blocking obstacle is only
    // a stop target when the plan does not try to dodge it.
    let mut stop_at = stop_line_arc.map(|s| s - 3.0);
    if blocking_arc.is_finite() && !dodge {
        let obstacle_stop = blocking_arc - 4.5;
        stop_at = Some(stop_at.map_or(obstacle_stop, |s| s.min(obstacle_stop)));
    }

    Plan {
        target_v,
        lateral,
        stop_at,
        steer_noise: if noise { rng.uniform_range(0.0, 0.08) } else { 0.0 },
        speed_noise: if noise { rng.uniform_range(0.0, 0.08) } else { 0.0 },
    }
}

/// Pure-pursuit follower with a braking envelope. Mirrors the unicycle
/// update exactly (heading before position), so the returned controls
/// reproduce the tracked path under `rollout_dynamics`.
fn track_plan(scene: &Scene, plan: &Plan, rng: &mut SeededRng) -> Controls {
    let mut controls = [(0.0, 0.0); TRAJ_LEN];
    let (mut x, mut y, mut theta) = (0.0, 0.0, 0.0);
    let mut v_prev = plan.target_v.min(initial_speed_cap(plan, 0.0));

    for c in controls.iter_mut() {
        let proj = scene.project(x, y);
        let lookahead = (v_prev * 0.9).max(2.0);
        let target = scene.point_at(proj.s + lookahead);
        let (sh, ch) = target.heading.sin_cos();
        let (tx, ty) = (target.x - sh * plan.lateral, target.y + ch * plan.lateral);

        let desired = (ty - y).atan2(tx - x);
        let err = {
            let d = desired - theta;
            d.sin().atan2(d.cos())
        };
        let mut w = (1.2 * err / DT).clamp(-0.95 * MAX_YAW_RATE, 0.95 * MAX_YAW_RATE);
        w = (w + plan.steer_noise * rng.normal() * MAX_YAW_RATE)
            .clamp(-MAX_YAW_RATE, MAX_YAW_RATE);

        let mut v = plan.target_v * (1.0 + plan.speed_noise * rng.normal());
        // Comfort-rate envelope first, braking envelope last: stopping in
        // time outranks smoothness.
        v = v.clamp(v_prev - 1.9, v_prev + 1.9);
        v = v.min(stop_cap(plan, proj.s)).clamp(0.0, DEFAULT_V_MAX);

        *c = (v, w);
        theta += w * DT;
        x += v * theta.cos() * DT;
        y += v * theta.sin() * DT;
        v_prev = v;
    }
    controls
}

/// Speed that can still stop before the plan's stop target from arc `s`
/// under a 3 m/s^2 braking envelope.
fn stop_cap(plan: &Plan, s: f64) -> f64 {
    match plan.stop_at {
        Some(stop) => (2.0 * 3.0 * (stop - s).max(0.0)).sqrt(),
        None => f64::INFINITY,
    }
}

fn initial_speed_cap(plan: &Plan, s: f64) -> f64 {
    stop_cap(plan, s).min(DEFAULT_V_MAX)
}
