//! Trajectory vocabulary: a large kinematically feasible candidate library,
//! end-state filtering against an anchor, and lateral stratification down to
//! K representatives.

use crate::env::{rollout_dynamics, Controls, MAX_YAW_RATE};
use crate::error::{Error, Result};
use crate::geom::{
    read_trajectories, wrap_angle_diff, write_trajectories, Pose, Trajectory, DEFAULT_V_MAX,
    TRAJ_LEN,
};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_LIBRARY_SIZE: usize = 8192;
pub const DEFAULT_K: usize = 256;
pub const DEFAULT_X_THRESH: f64 = 10.0;
pub const DEFAULT_Y_THRESH: f64 = 5.0;
/// 20 degrees.
pub const DEFAULT_THETA_THRESH: f64 = 20.0 * std::f64::consts::PI / 180.0;

/// End-state dedup resolution for library generation.
const DEDUP_POS: f64 = 0.5;
const DEDUP_ANGLE: f64 = 5.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabProvenance {
    pub source_size: usize,
    pub x_thresh: f64,
    pub y_thresh: f64,
    pub theta_thresh: f64,
    pub anchor_id: String,
    pub requested_k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryVocabulary {
    pub entries: Vec<Trajectory>,
    pub provenance: VocabProvenance,
}

impl TrajectoryVocabulary {
    /// True when filtering left fewer than the requested K survivors.
    pub fn is_short(&self) -> bool {
        self.entries.len() < self.provenance.requested_k
    }
}

/// Samples (piecewise-constant speed, low-pass-filtered yaw-rate) control
/// profiles, integrates them, and deduplicates end states on a
/// 0.5 m / 5 degree grid. Output length is at most `size`.
pub fn generate_library(rng: &mut SeededRng, size: usize) -> Vec<Trajectory> {
    assert!(size >= 1, "library size must be positive");
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let controls = sample_profile(rng);
        let traj = rollout_dynamics(&Pose::ORIGIN, &controls)
            .expect("sampled controls are in range by construction");
        let end = traj.end_state();
        let key = (
            (end.x / DEDUP_POS).round() as i64,
            (end.y / DEDUP_POS).round() as i64,
            (end.theta / DEDUP_ANGLE).round() as i64,
        );
        if seen.insert(key) {
            out.push(traj);
        }
    }
    out
}

fn sample_profile(rng: &mut SeededRng) -> Controls {
    // Speed: 1 to 3 constant segments with random change points.
    let n_seg = 1 + rng.index(3);
    let mut cuts = vec![0, TRAJ_LEN];
    for _ in 1..n_seg {
        cuts.push(rng.index(TRAJ_LEN));
    }
    cuts.sort_unstable();
    let mut speeds = [0.0; TRAJ_LEN];
    for w in cuts.windows(2) {
        let v = rng.uniform_range(0.0, DEFAULT_V_MAX);
        for s in speeds[w[0]..w[1]].iter_mut() {
            *s = v;
        }
    }
    // Yaw rate: white noise through a one-pole low-pass, clamped to range.
    let mut yaw = [0.0; TRAJ_LEN];
    let mut state = 0.0;
    for y in yaw.iter_mut() {
        state = 0.7 * state + 0.3 * (rng.normal() * 0.9);
        *y = state.clamp(-MAX_YAW_RATE, MAX_YAW_RATE);
    }
    let mut controls = [(0.0, 0.0); TRAJ_LEN];
    for k in 0..TRAJ_LEN {
        controls[k] = (speeds[k], yaw[k]);
    }
    controls
}

/// Retains candidates whose end state stays within the box thresholds of the
/// anchor's end state; the angle comparison wraps.
pub fn filter_by_end_state(
    library: &[Trajectory],
    anchor: &Trajectory,
    x_thresh: f64,
    y_thresh: f64,
    theta_thresh: f64,
) -> Vec<Trajectory> {
    assert!(
        x_thresh > 0.0 && y_thresh > 0.0 && theta_thresh > 0.0,
        "thresholds must be positive"
    );
    let a = anchor.end_state();
    library
        .iter()
        .filter(|t| {
            let e = t.end_state();
            (e.x - a.x).abs() <= x_thresh
                && (e.y - a.y).abs() <= y_thresh
                && wrap_angle_diff(e.theta, a.theta) <= theta_thresh
        })
        .cloned()
        .collect()
}

/// Sorts by |dy| to the anchor (ties on |dx|, then input index) and picks
/// K equally spaced entries of the sorted list. Keeps everything when
/// N <= K; recorded provenance carries the requested K so shortfalls are
/// visible downstream.
pub fn stratified_select(
    filtered: &[Trajectory],
    anchor: &Trajectory,
    k: usize,
    provenance: VocabProvenance,
) -> Result<TrajectoryVocabulary> {
    if filtered.is_empty() {
        return Err(Error::EmptyInput("stratified_select"));
    }
    assert!(k >= 1, "K must be positive");
    let a = anchor.end_state();
    let mut order: Vec<usize> = (0..filtered.len()).collect();
    let key = |i: usize| {
        let e = filtered[i].end_state();
        ((e.y - a.y).abs(), (e.x - a.x).abs())
    };
    order.sort_by(|&i, &j| {
        let (dyi, dxi) = key(i);
        let (dyj, dxj) = key(j);
        dyi.total_cmp(&dyj).then(dxi.total_cmp(&dxj)).then(i.cmp(&j))
    });
    let n = order.len();
    let picks: Vec<usize> = if n <= k {
        (0..n).collect()
    } else if k == 1 {
        vec![0]
    } else {
        (0..k)
            .map(|i| ((i * (n - 1)) as f64 / (k - 1) as f64).round() as usize)
            .collect()
    };
    let entries = picks.iter().map(|&p| filtered[order[p]].clone()).collect();
    Ok(TrajectoryVocabulary {
        entries,
        provenance,
    })
}

/// Full pipeline for one anchor: generate, filter with default paper
/// thresholds, stratify to K.
pub fn build_vocabulary(
    rng: &mut SeededRng,
    size: usize,
    anchor: &Trajectory,
    anchor_id: &str,
    k: usize,
) -> Result<TrajectoryVocabulary> {
    let provenance = VocabProvenance {
        source_size: size,
        x_thresh: DEFAULT_X_THRESH,
        y_thresh: DEFAULT_Y_THRESH,
        theta_thresh: DEFAULT_THETA_THRESH,
        anchor_id: anchor_id.to_string(),
        requested_k: k,
        seed: rng.seed(),
    };
    let library = generate_library(rng, size);
    let filtered = filter_by_end_state(
        &library,
        anchor,
        DEFAULT_X_THRESH,
        DEFAULT_Y_THRESH,
        DEFAULT_THETA_THRESH,
    );
    stratified_select(&filtered, anchor, k, provenance)
}

/// Entries go to `traj_path` in the shared trajectory format; provenance is
/// a JSON sidecar.
pub fn write_vocabulary(
    traj_path: &Path,
    prov_path: &Path,
    vocab: &TrajectoryVocabulary,
) -> Result<()> {
    write_trajectories(traj_path, &vocab.entries)?;
    let json = serde_json::to_string_pretty(&vocab.provenance)
        .map_err(|e| Error::InvalidArgument(format!("provenance serialization: {e}")))?;
    std::fs::write(prov_path, json)?;
    Ok(())
}

pub fn read_vocabulary(traj_path: &Path, prov_path: &Path) -> Result<TrajectoryVocabulary> {
    let entries = read_trajectories(traj_path, DEFAULT_V_MAX)?;
    let text = std::fs::read_to_string(prov_path)?;
    let provenance: VocabProvenance = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: 0,
        reason: format!("provenance: {e}"),
    })?;
    Ok(TrajectoryVocabulary {
        entries,
        provenance,
    })
}
