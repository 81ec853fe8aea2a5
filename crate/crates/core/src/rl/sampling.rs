//! Candidate trajectory selection around the policy mean: Mahalanobis-ranked
//! vocabulary sampling (softmax draws plus nearest neighbors) and the
//! unconstrained random-Gaussian baseline.

use crate::error::{Error, Result};
use crate::geom::{Pose, Trajectory, TRAJ_LEN};
use crate::rng::SeededRng;
use crate::vocab::TrajectoryVocabulary;

/// A trajectory flattened to (x, y, theta) per frame.
pub const FLAT_LEN: usize = TRAJ_LEN * 3;

pub fn flatten_trajectory(traj: &Trajectory) -> [f64; FLAT_LEN] {
    let mut out = [0.0; FLAT_LEN];
    for (t, pose) in traj.poses().iter().enumerate() {
        out[t * 3] = pose.x;
        out[t * 3 + 1] = pose.y;
        out[t * 3 + 2] = pose.theta;
    }
    out
}

/// Flat coordinates back to a trajectory. Skips the speed-feasibility check:
/// raw policy means and Gaussian draws may violate it, and downstream
/// consumers score rather than execute them.
pub fn trajectory_from_flat(flat: &[f64; FLAT_LEN]) -> Trajectory {
    let poses: [Pose; TRAJ_LEN] =
        std::array::from_fn(|t| Pose::new(flat[t * 3], flat[t * 3 + 1], flat[t * 3 + 2]));
    Trajectory::from_poses_unchecked(poses)
}

/// Sum of squared standardized deviations over all 24 coordinates.
pub fn mahalanobis(x: &[f64; FLAT_LEN], mean: &[f64; FLAT_LEN], sigma: &[f64; FLAT_LEN]) -> f64 {
    assert!(
        sigma.iter().all(|&s| s > 0.0),
        "sigma must be positive elementwise"
    );
    x.iter()
        .zip(mean.iter())
        .zip(sigma.iter())
        .map(|((&xi, &mi), &si)| {
            let z = (xi - mi) / si;
            z * z
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    /// Drawn without replacement with probability proportional to
    /// softmax(-distance / temperature).
    Softmax,
    /// One of the nearest remaining vocabulary entries by distance.
    Neighborhood,
    /// Coordinate-wise Gaussian draw with no vocabulary constraint.
    RandomGaussian,
}

/// Which candidate generator a training step uses: the mixed
/// softmax/nearest vocabulary draw, or the unconstrained Gaussian baseline
/// with the same total budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateSampler {
    #[default]
    Vocabulary,
    RandomBaseline,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub traj: Trajectory,
    pub flat: [f64; FLAT_LEN],
    pub source: CandidateSource,
    /// Mahalanobis distance to the policy mean under the sampling sigma.
    pub distance: f64,
    /// Index into the vocabulary; `None` for baseline draws.
    pub vocab_index: Option<usize>,
}

/// Mixed vocabulary sampling: `g1` softmax draws without replacement over
/// exp(-d/temperature), then the `g2` nearest entries not already taken.
pub fn sample_candidates(
    vocab: &TrajectoryVocabulary,
    tau_act: &[f64; FLAT_LEN],
    sigma: &[f64; FLAT_LEN],
    g1: usize,
    g2: usize,
    temperature: f64,
    rng: &mut SeededRng,
) -> Result<Vec<Candidate>> {
    let k = vocab.entries.len();
    if g1 + g2 == 0 {
        return Err(Error::InvalidArgument("requested zero candidates".into()));
    }
    if g1 + g2 > k {
        return Err(Error::InvalidArgument(format!(
            "g1 + g2 = {} exceeds vocabulary size {k}",
            g1 + g2
        )));
    }
    if temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }

    let flats: Vec<[f64; FLAT_LEN]> = vocab.entries.iter().map(flatten_trajectory).collect();
    let dists: Vec<f64> = flats.iter().map(|f| mahalanobis(f, tau_act, sigma)).collect();
    let logits: Vec<f64> = dists.iter().map(|d| -d / temperature).collect();

    let mut taken = vec![false; k];
    let mut out = Vec::with_capacity(g1 + g2);
    let mut push = |idx: usize, source: CandidateSource, taken: &mut Vec<bool>| {
        taken[idx] = true;
        out.push(Candidate {
            traj: vocab.entries[idx].clone(),
            flat: flats[idx],
            source,
            distance: dists[idx],
            vocab_index: Some(idx),
        });
    };

    for _ in 0..g1 {
        // Stabilize against the max logit of the REMAINING entries each
        // draw: a global shift would underflow every weight to zero once
        // the near entries are taken at low temperatures.
        let max_logit = logits
            .iter()
            .zip(taken.iter())
            .filter(|(_, &t)| !t)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let weight =
            |idx: usize| -> f64 { if taken[idx] { 0.0 } else { (logits[idx] - max_logit).exp() } };
        let total: f64 = (0..k).map(weight).sum();
        let mut u = rng.uniform() * total;
        let mut pick = None;
        for idx in 0..k {
            let w = weight(idx);
            if w == 0.0 {
                continue;
            }
            u -= w;
            if u <= 0.0 {
                pick = Some(idx);
                break;
            }
        }
        // Rounding can leave u marginally positive after the last entry.
        let idx = pick
            .or_else(|| (0..k).rev().find(|&i| !taken[i]))
            .expect("g1 + g2 <= K leaves entries available");
        push(idx, CandidateSource::Softmax, &mut taken);
    }

    let mut rest: Vec<usize> = (0..k).filter(|&i| !taken[i]).collect();
    rest.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));
    for &idx in rest.iter().take(g2) {
        push(idx, CandidateSource::Neighborhood, &mut taken);
    }
    Ok(out)
}

/// Baseline sampler: `g` coordinate-wise draws from N(tau_act, sigma^2),
/// no vocabulary, no smoothing.
pub fn sample_candidates_random_baseline(
    tau_act: &[f64; FLAT_LEN],
    sigma: &[f64; FLAT_LEN],
    g: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Candidate>> {
    if g == 0 {
        return Err(Error::InvalidArgument("requested zero candidates".into()));
    }
    Ok((0..g)
        .map(|_| {
            let mut flat = [0.0; FLAT_LEN];
            for (f, (m, s)) in flat.iter_mut().zip(tau_act.iter().zip(sigma.iter())) {
                *f = m + s * rng.normal();
            }
            Candidate {
                traj: trajectory_from_flat(&flat),
                distance: mahalanobis(&flat, tau_act, sigma),
                flat,
                source: CandidateSource::RandomGaussian,
                vocab_index: None,
            }
        })
        .collect())
}

/// Jerkiness proxy: mean squared second difference of the x and y columns,
/// with the implicit origin start prepended. A constant-velocity straight
/// line scores exactly 0.
pub fn mean_squared_second_difference(flat: &[f64; FLAT_LEN]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0;
    for col in 0..2 {
        let series: Vec<f64> = std::iter::once(0.0)
            .chain((0..TRAJ_LEN).map(|t| flat[t * 3 + col]))
            .collect();
        for w in series.windows(3) {
            let dd = w[2] - 2.0 * w[1] + w[0];
            acc += dd * dd;
            n += 1;
        }
    }
    acc / n as f64
}
