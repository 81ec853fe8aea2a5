//! Gaussian trajectory policy: a dense head maps scene features plus the
//! latent history to a mean trajectory; the per-coordinate std is a fixed
//! schedule that widens with horizon, so log-densities are closed form.

use super::sampling::{trajectory_from_flat, FLAT_LEN};
use crate::error::Result;
use crate::geom::{Pose, Trajectory, TRAJ_LEN};
use crate::nn::{Activation, DenseNet, ParamStore, Tape, ValueId};
use crate::rng::SeededRng;
use crate::worldmodel::{scaled_features, HISTORY_LEN, OBS_FEATURES};
use crate::env::Scene;

const LN_2PI: f64 = 1.8378770664093453;

/// Per-coordinate std for frame t (1-based): pos_base + pos_slope * t meters
/// on x and y, theta_base + theta_slope * t radians on heading.
pub fn sigma_schedule(
    pos_base: f64,
    pos_slope: f64,
    theta_base: f64,
    theta_slope: f64,
) -> [f64; FLAT_LEN] {
    let mut out = [0.0; FLAT_LEN];
    for t in 0..TRAJ_LEN {
        let step = (t + 1) as f64;
        out[t * 3] = pos_base + pos_slope * step;
        out[t * 3 + 1] = pos_base + pos_slope * step;
        out[t * 3 + 2] = theta_base + theta_slope * step;
    }
    out
}

pub fn default_sigma() -> [f64; FLAT_LEN] {
    sigma_schedule(0.2, 0.05, 0.05, 0.01)
}

/// Fixed output gains per coordinate: unit network outputs map to plausible
/// per-frame displacements (forward reach grows fastest, heading is tight).
fn output_scales() -> [f64; FLAT_LEN] {
    let mut out = [0.0; FLAT_LEN];
    for t in 0..TRAJ_LEN {
        let step = (t + 1) as f64;
        out[t * 3] = 4.0 * step;
        out[t * 3 + 1] = step;
        out[t * 3 + 2] = 0.5;
    }
    out
}

/// Policy input: current-frame scaled observation features followed by the
/// four history latents, oldest first.
pub fn policy_input(scene: &Scene, speed: f64, history: &[Vec<f64>]) -> Vec<f64> {
    let mut out = scaled_features(scene, &Pose::ORIGIN, speed).to_vec();
    for z in history {
        out.extend_from_slice(z);
    }
    out
}

/// Dense head emitting the 8x3 mean trajectory. Parameters live under the
/// "pi." prefix, typically in a store separate from the frozen world and
/// reward models so the optimizer only ever sees policy weights.
#[derive(Debug, Clone)]
pub struct PolicyHead {
    net: DenseNet,
    latent_width: usize,
}

impl PolicyHead {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut SeededRng,
        latent_width: usize,
        hidden: &[usize],
    ) -> Self {
        let mut widths = vec![OBS_FEATURES + HISTORY_LEN * latent_width];
        widths.extend_from_slice(hidden);
        widths.push(FLAT_LEN);
        let mut acts = vec![Activation::Tanh; hidden.len()];
        acts.push(Activation::Identity);
        let net = DenseNet::new(store, rng, "pi", &widths, &acts);
        Self { net, latent_width }
    }

    pub fn input_width(&self) -> usize {
        OBS_FEATURES + HISTORY_LEN * self.latent_width
    }

    /// Mean trajectory as a tape value (24 coordinates).
    pub fn mean_on_tape(&self, tape: &mut Tape, input: &[f64]) -> Result<ValueId> {
        let x = tape.constant(input.to_vec());
        let raw = self.net.forward(tape, x)?;
        let scales = tape.constant(output_scales().to_vec());
        Ok(tape.mul(raw, scales))
    }

    /// Mean trajectory without gradient tracking.
    pub fn mean_flat(&self, store: &ParamStore, input: &[f64]) -> Result<[f64; FLAT_LEN]> {
        let mut tape = Tape::new(store);
        let id = self.mean_on_tape(&mut tape, input)?;
        let v = tape.value(id);
        let mut out = [0.0; FLAT_LEN];
        out.copy_from_slice(v);
        Ok(out)
    }

    pub fn mean_trajectory(&self, store: &ParamStore, input: &[f64]) -> Result<Trajectory> {
        Ok(trajectory_from_flat(&self.mean_flat(store, input)?))
    }
}

/// Closed-form diagonal-Gaussian log-density of `x` under (mean, sigma).
pub fn log_density(x: &[f64; FLAT_LEN], mean: &[f64], sigma: &[f64; FLAT_LEN]) -> f64 {
    assert_eq!(mean.len(), FLAT_LEN);
    x.iter()
        .zip(mean.iter())
        .zip(sigma.iter())
        .map(|((&xi, &mi), &si)| {
            let z = (xi - mi) / si;
            -0.5 * z * z - si.ln() - 0.5 * LN_2PI
        })
        .sum()
}

/// Same log-density with the mean on the tape, so gradients flow to the
/// policy parameters; `x` and `sigma` enter as constants.
pub fn log_density_on_tape(
    tape: &mut Tape,
    x: &[f64; FLAT_LEN],
    mean: ValueId,
    sigma: &[f64; FLAT_LEN],
) -> ValueId {
    let xc = tape.constant(x.to_vec());
    let diff = tape.sub(xc, mean);
    let inv_sigma = tape.constant(sigma.iter().map(|s| 1.0 / s).collect());
    let z = tape.mul(diff, inv_sigma);
    let sq = tape.mul(z, z);
    let total = tape.sum(sq);
    let quad = tape.scale(total, -0.5);
    let norm_const: f64 = sigma.iter().map(|s| -s.ln() - 0.5 * LN_2PI).sum();
    tape.offset(quad, norm_const)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_policy(seed: u64, latent: usize) -> (ParamStore, PolicyHead, SeededRng) {
        let mut rng = SeededRng::new(seed, 0);
        let mut store = ParamStore::new();
        let head = PolicyHead::new(&mut store, &mut rng, latent, &[32]);
        (store, head, rng)
    }

    fn dummy_input(rng: &mut SeededRng, width: usize) -> Vec<f64> {
        (0..width).map(|_| rng.normal() * 0.5).collect()
    }

    #[test]
    fn sigma_schedule_is_positive_and_grows() {
        let s = default_sigma();
        assert!(s.iter().all(|&v| v > 0.0));
        assert!((s[0] - 0.25).abs() < 1e-12);
        assert!((s[2] - 0.06).abs() < 1e-12);
        assert!((s[21] - 0.6).abs() < 1e-12);
        assert!((s[23] - 0.13).abs() < 1e-12);
        for t in 1..TRAJ_LEN {
            for i in 0..3 {
                assert!(s[t * 3 + i] > s[(t - 1) * 3 + i]);
            }
        }
    }

    #[test]
    fn mean_is_deterministic_and_correctly_shaped() {
        let (store, head, mut rng) = small_policy(3, 16);
        let input = dummy_input(&mut rng, head.input_width());
        let a = head.mean_flat(&store, &input).unwrap();
        let b = head.mean_flat(&store, &input).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        let traj = head.mean_trajectory(&store, &input).unwrap();
        for (t, pose) in traj.poses().iter().enumerate() {
            assert_eq!(pose.x, a[t * 3]);
            assert_eq!(pose.y, a[t * 3 + 1]);
            // Pose construction normalizes the heading, which moves the bits
            // of negative angles by an ulp; compare post-normalization.
            assert_eq!(pose.theta, crate::geom::normalize_angle(a[t * 3 + 2]));
        }
    }

    #[test]
    fn policy_input_prepends_scaled_features() {
        let scene = Scene::straight(15.0);
        let latent = 4;
        let history: Vec<Vec<f64>> = (0..HISTORY_LEN).map(|i| vec![i as f64; latent]).collect();
        let input = policy_input(&scene, 5.0, &history);
        assert_eq!(input.len(), OBS_FEATURES + HISTORY_LEN * latent);
        let feats = scaled_features(&scene, &Pose::ORIGIN, 5.0);
        assert_eq!(&input[..OBS_FEATURES], &feats[..]);
        assert_eq!(input[OBS_FEATURES], 0.0);
        assert_eq!(input[OBS_FEATURES + latent], 1.0);
    }

    #[test]
    fn log_density_matches_naive_sum_and_is_finite() {
        let mut rng = SeededRng::new(5, 0);
        let sigma = default_sigma();
        let x: [f64; FLAT_LEN] = std::array::from_fn(|_| rng.normal() * 2.0);
        let mean: Vec<f64> = (0..FLAT_LEN).map(|_| rng.normal() * 2.0).collect();
        let got = log_density(&x, &mean, &sigma);
        let mut expect = 0.0;
        for i in 0..FLAT_LEN {
            let si = sigma[i];
            expect += -((x[i] - mean[i]).powi(2)) / (2.0 * si * si)
                - (si * (2.0 * std::f64::consts::PI).sqrt()).ln();
        }
        assert!(got.is_finite());
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn tape_log_density_matches_closed_form() {
        let (store, head, mut rng) = small_policy(7, 8);
        let input = dummy_input(&mut rng, head.input_width());
        let sigma = default_sigma();
        let x: [f64; FLAT_LEN] = std::array::from_fn(|_| rng.normal());

        let mean = head.mean_flat(&store, &input).unwrap();
        let expect = log_density(&x, &mean, &sigma);

        let mut tape = Tape::new(&store);
        let mean_id = head.mean_on_tape(&mut tape, &input).unwrap();
        let lp = log_density_on_tape(&mut tape, &x, mean_id, &sigma);
        assert!((tape.scalar(lp) - expect).abs() < 1e-10);
    }

    #[test]
    fn tape_log_density_gradient_wrt_mean_is_standardized_error() {
        // d logp / d mean_i = (x_i - mean_i) / sigma_i^2; check through
        // backward_seeded with the mean as a raw constant.
        let sigma = default_sigma();
        let mut rng = SeededRng::new(11, 0);
        let x: [f64; FLAT_LEN] = std::array::from_fn(|_| rng.normal());
        let mean: Vec<f64> = (0..FLAT_LEN).map(|_| rng.normal()).collect();

        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let mean_id = tape.constant(mean.clone());
        let lp = log_density_on_tape(&mut tape, &x, mean_id, &sigma);
        let grads = tape.backward(lp);
        let g = grads.wrt(mean_id).expect("mean participates in the loss");
        for i in 0..FLAT_LEN {
            let expect = (x[i] - mean[i]) / (sigma[i] * sigma[i]);
            assert!(
                (g[i] - expect).abs() < 1e-10,
                "coord {i}: {} vs {expect}",
                g[i]
            );
        }
    }
}
