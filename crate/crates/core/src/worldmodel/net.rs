//! Shortcut-forcing world model: a frozen observation encoder producing
//! latents, a trainable action encoder, and a velocity network conditioned on
//! the last four latents, the action embedding, and sinusoidal (t, d)
//! embeddings.
//!
//! Teacher targets for d > d_min are computed off-tape (two half-step
//! evaluations of the live weights), so the student gradient never flows
//! through the teacher.

use super::grid::{sample_training_pair, FlowSample, StepGrid};
use crate::env::{Rect, Scene};
use crate::error::{Error, Result};
use crate::geom::{normalize_angle, Pose, Trajectory, DT, TRAJ_LEN};
use crate::nn::{Activation, AdamW, DenseNet, ParamStore, Tape, ValueId};
use crate::rng::SeededRng;

/// Raw observation feature count: lateral, heading error, speed, 8 sector
/// ranges, stop-line distance.
pub const OBS_FEATURES: usize = 12;
/// Latent frames of context for the velocity network.
pub const HISTORY_LEN: usize = 4;
/// Sector and stop-line ranges saturate here.
pub const RANGE_CLAMP: f64 = 30.0;
const EMB_WIDTH: usize = 8;

/// Per-feature divisors between raw features and the encoder input, sized so
/// typical values land in tanh's responsive range.
const FEATURE_SCALES: [f64; OBS_FEATURES] = [
    2.0, 1.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0,
];
/// Divisors for the (dx, dy, dtheta) action before the action encoder.
const ACTION_SCALES: [f64; 3] = [5.0, 2.0, 1.0];

/// Raw observation features in scene frame. Sector k of 8 covers relative
/// bearings [-pi + k*pi/4, -pi + (k+1)*pi/4); straight ahead falls in
/// sector 4. Ranges are nearest-surface distances, clamped.
pub fn observation_features(scene: &Scene, pose: &Pose, speed: f64) -> [f64; OBS_FEATURES] {
    let proj = scene.project(pose.x, pose.y);
    let mut f = [0.0; OBS_FEATURES];
    f[0] = proj.lateral;
    f[1] = normalize_angle(pose.theta - proj.heading);
    f[2] = speed;
    for s in f[3..11].iter_mut() {
        *s = RANGE_CLAMP;
    }
    let mut rects: Vec<Rect> = scene.static_obstacles.clone();
    rects.extend(scene.moving_agents.iter().map(|a| a.rect));
    for rect in rects {
        let nx = pose.x.clamp(rect.cx - rect.hx, rect.cx + rect.hx);
        let ny = pose.y.clamp(rect.cy - rect.hy, rect.cy + rect.hy);
        let dist = ((nx - pose.x).powi(2) + (ny - pose.y).powi(2))
            .sqrt()
            .min(RANGE_CLAMP);
        let bearing =
            normalize_angle((rect.cy - pose.y).atan2(rect.cx - pose.x) - pose.theta);
        let sector = (((bearing + std::f64::consts::PI) / (std::f64::consts::PI / 4.0))
            as usize)
            .min(7);
        f[3 + sector] = f[3 + sector].min(dist);
    }
    f[11] = match scene.stop_line {
        Some(sl) if sl.active => (sl.arc_pos - proj.s).clamp(-RANGE_CLAMP, RANGE_CLAMP),
        _ => RANGE_CLAMP,
    };
    f
}

/// Observation features after the per-feature normalization the encoder (and
/// the policy head) consume.
pub fn scaled_features(scene: &Scene, pose: &Pose, speed: f64) -> [f64; OBS_FEATURES] {
    let mut out = observation_features(scene, pose, speed);
    for (v, s) in out.iter_mut().zip(FEATURE_SCALES.iter()) {
        *v /= s;
    }
    out
}

/// Loss weight over signal level: late (high-t) interpolants carry most of
/// the fine structure.
pub fn loss_weight(t: f64) -> f64 {
    0.9 * t + 0.1
}

fn sinusoidal(x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(EMB_WIDTH);
    for i in 0..EMB_WIDTH / 2 {
        let w = std::f64::consts::PI * (1 << i) as f64;
        out.push((w * x).sin());
        out.push((w * x).cos());
    }
    out
}

#[derive(Debug, Clone)]
pub struct WmConfig {
    pub latent_width: usize,
    pub k_max: usize,
    pub action_emb: usize,
    pub obs_hidden: usize,
    pub velocity_hidden: Vec<usize>,
}

impl Default for WmConfig {
    fn default() -> Self {
        Self {
            latent_width: 32,
            k_max: 16,
            action_emb: 16,
            obs_hidden: 32,
            velocity_hidden: vec![96, 96],
        }
    }
}

/// One teacher-forcing element: context plus the clean next-frame latent.
#[derive(Debug, Clone)]
pub struct WmTrainItem {
    pub history: Vec<Vec<f64>>,
    pub action: [f64; 3],
    pub x1: Vec<f64>,
}

pub struct WorldModelNet {
    pub cfg: WmConfig,
    grid: StepGrid,
    obs_encoder: DenseNet,
    action_encoder: DenseNet,
    velocity: DenseNet,
}

impl WorldModelNet {
    /// Registers parameters under `wm.*`. The observation encoder is frozen
    /// at initialization: latent targets must stay fixed while the velocity
    /// network learns, otherwise the regression chases a moving encoder.
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, cfg: WmConfig) -> Result<Self> {
        let grid = StepGrid::new(cfg.k_max)?;
        let l = cfg.latent_width;
        let obs_encoder = DenseNet::new(
            store,
            rng,
            "wm.obs",
            &[OBS_FEATURES, cfg.obs_hidden, l],
            &[Activation::Tanh, Activation::Tanh],
        );
        store.set_trainable_prefix("wm.obs.", false);
        let action_encoder = DenseNet::new(
            store,
            rng,
            "wm.act",
            &[3, cfg.action_emb, cfg.action_emb],
            &[Activation::Tanh, Activation::Tanh],
        );
        let vel_in = l + HISTORY_LEN * l + cfg.action_emb + 2 * EMB_WIDTH;
        let mut widths = vec![vel_in];
        widths.extend_from_slice(&cfg.velocity_hidden);
        widths.push(l);
        let mut acts = vec![Activation::Tanh; cfg.velocity_hidden.len()];
        acts.push(Activation::Identity);
        let velocity = DenseNet::new(store, rng, "wm.vel", &widths, &acts);
        Ok(Self {
            cfg,
            grid,
            obs_encoder,
            action_encoder,
            velocity,
        })
    }

    pub fn grid(&self) -> &StepGrid {
        &self.grid
    }

    pub fn latent_width(&self) -> usize {
        self.cfg.latent_width
    }

    pub fn velocity_net(&self) -> &DenseNet {
        &self.velocity
    }

    fn eval_net(store: &ParamStore, net: &DenseNet, input: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new(store);
        let x = tape.constant(input);
        let y = net.forward(&mut tape, x).expect("width fixed at construction");
        tape.value(y).to_vec()
    }

    /// Deterministic latent for one frame.
    pub fn encode_observation(
        &self,
        store: &ParamStore,
        scene: &Scene,
        pose: &Pose,
        speed: f64,
    ) -> Vec<f64> {
        let scaled = scaled_features(scene, pose, speed);
        Self::eval_net(store, &self.obs_encoder, scaled.to_vec())
    }

    fn action_input(action: &[f64; 3]) -> Vec<f64> {
        action
            .iter()
            .zip(ACTION_SCALES.iter())
            .map(|(a, s)| a / s)
            .collect()
    }

    pub fn action_embedding(&self, store: &ParamStore, action: &[f64; 3]) -> Vec<f64> {
        Self::eval_net(store, &self.action_encoder, Self::action_input(action))
    }

    fn velocity_input(
        &self,
        xt: &[f64],
        hist_flat: &[f64],
        act_emb: &[f64],
        t: f64,
        d: f64,
    ) -> Vec<f64> {
        let mut input =
            Vec::with_capacity(xt.len() + hist_flat.len() + act_emb.len() + 2 * EMB_WIDTH);
        input.extend_from_slice(xt);
        input.extend_from_slice(hist_flat);
        input.extend_from_slice(act_emb);
        input.extend(sinusoidal(t));
        input.extend(sinusoidal(d));
        input
    }

    /// No-grad velocity evaluation.
    pub fn velocity_eval(
        &self,
        store: &ParamStore,
        xt: &[f64],
        hist_flat: &[f64],
        act_emb: &[f64],
        t: f64,
        d: f64,
    ) -> Vec<f64> {
        Self::eval_net(
            store,
            &self.velocity,
            self.velocity_input(xt, hist_flat, act_emb, t, d),
        )
    }

    /// On-tape velocity forward; gradients flow into the velocity network and
    /// the action encoder, while history latents enter as constants.
    pub fn velocity_on_tape(
        &self,
        tape: &mut Tape,
        xt: &[f64],
        history: &[Vec<f64>],
        action: &[f64; 3],
        t: f64,
        d: f64,
    ) -> ValueId {
        let act_in = tape.constant(Self::action_input(action));
        let act_emb = self
            .action_encoder
            .forward(tape, act_in)
            .expect("width fixed at construction");
        let xt_id = tape.constant(xt.to_vec());
        let hist_id = tape.constant(flatten(history));
        let t_emb = tape.constant(sinusoidal(t));
        let d_emb = tape.constant(sinusoidal(d));
        let input = tape.concat(&[xt_id, hist_id, act_emb, t_emb, d_emb]);
        self.velocity
            .forward(tape, input)
            .expect("width fixed at construction")
    }

    /// Regression target for one flow sample: the true velocity at the finest
    /// step, otherwise the composition of two frozen half-steps.
    pub fn shortcut_target(
        &self,
        store: &ParamStore,
        sample: &FlowSample,
        history: &[Vec<f64>],
        action: &[f64; 3],
    ) -> Result<Vec<f64>> {
        self.grid.validate_d(sample.d)?;
        if sample.d == self.grid.d_min() {
            return Ok(sample.v.clone());
        }
        let hist_flat = flatten(history);
        let act_emb = self.action_embedding(store, action);
        let half = sample.d / 2.0;
        let v1 = self.velocity_eval(store, &sample.xt, &hist_flat, &act_emb, sample.t, half);
        let x_mid: Vec<f64> = sample
            .xt
            .iter()
            .zip(v1.iter())
            .map(|(x, v)| x + v * half)
            .collect();
        let v2 = self.velocity_eval(store, &x_mid, &hist_flat, &act_emb, sample.t + half, half);
        Ok(v1
            .iter()
            .zip(v2.iter())
            .map(|(a, b)| 0.5 * (a + b))
            .collect())
    }

    /// Weighted flow-matching loss over prepared (item, sample) pairs.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        batch: &[(WmTrainItem, FlowSample)],
    ) -> Result<ValueId> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("world model batch"));
        }
        let mut per_item = Vec::with_capacity(batch.len());
        for (item, sample) in batch {
            let target = self.shortcut_target(tape.store(), sample, &item.history, &item.action)?;
            let pred =
                self.velocity_on_tape(tape, &sample.xt, &item.history, &item.action, sample.t, sample.d);
            let tgt = tape.constant(target);
            let diff = tape.sub(pred, tgt);
            let sq = tape.mul(diff, diff);
            let ssq = tape.sum(sq);
            per_item.push(tape.scale(ssq, loss_weight(sample.t)));
        }
        let stacked = tape.concat(&per_item);
        let total = tape.sum(stacked);
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    }

    /// Draw (t, d, x0) per element and take one optimizer step. `force_d`
    /// restricts sampling to a single step size (t still uniform on its grid).
    pub fn train_step_with(
        &self,
        store: &mut ParamStore,
        opt: &mut AdamW,
        batch: &[WmTrainItem],
        rng: &mut SeededRng,
        force_d: Option<f64>,
    ) -> Result<f64> {
        let prepared: Vec<(WmTrainItem, FlowSample)> = batch
            .iter()
            .map(|item| {
                let (t, d) = match force_d {
                    Some(d) => {
                        self.grid.validate_d(d)?;
                        let slots = (1.0 / d).round() as usize;
                        (d * rng.index(slots) as f64, d)
                    }
                    None => sample_training_pair(rng, &self.grid),
                };
                let x0 = rng.normal_vec(self.cfg.latent_width);
                let sample = FlowSample::new(x0, item.x1.clone(), t, d, &self.grid)?;
                Ok((item.clone(), sample))
            })
            .collect::<Result<_>>()?;
        let mut tape = Tape::new(store);
        let loss_id = self.loss_on_tape(&mut tape, &prepared)?;
        let loss = tape.scalar(loss_id);
        if !loss.is_finite() {
            return Err(Error::NonFinite("world model loss"));
        }
        let grads = tape.backward(loss_id);
        drop(tape);
        opt.step(store, &grads)?;
        Ok(loss)
    }

    pub fn train_step(
        &self,
        store: &mut ParamStore,
        opt: &mut AdamW,
        batch: &[WmTrainItem],
        rng: &mut SeededRng,
    ) -> Result<f64> {
        self.train_step_with(store, opt, batch, rng, None)
    }

    /// Euler sampling from fresh noise: `steps` updates of size 1/steps.
    pub fn sample_next_latent(
        &self,
        store: &ParamStore,
        history: &[Vec<f64>],
        action: &[f64; 3],
        steps: usize,
        rng: &mut SeededRng,
    ) -> Result<Vec<f64>> {
        self.grid.validate_steps(steps)?;
        let hist_flat = flatten(history);
        let act_emb = self.action_embedding(store, action);
        let d = 1.0 / steps as f64;
        let mut x = rng.normal_vec(self.cfg.latent_width);
        let mut t = 0.0;
        for _ in 0..steps {
            let v = self.velocity_eval(store, &x, &hist_flat, &act_emb, t, d);
            for (xi, vi) in x.iter_mut().zip(v.iter()) {
                *xi += vi * d;
            }
            t += d;
        }
        Ok(x)
    }

    /// Autoregressive 8-step latent rollout along a trajectory's actions.
    /// Each step conditions on the last [`HISTORY_LEN`] latents.
    pub fn imagine_rollout(
        &self,
        store: &ParamStore,
        history: &[Vec<f64>],
        traj: &Trajectory,
        steps: usize,
        rng: &mut SeededRng,
    ) -> Result<Vec<Vec<f64>>> {
        if history.len() != HISTORY_LEN {
            return Err(Error::DimMismatch {
                expected: HISTORY_LEN,
                got: history.len(),
                context: "rollout history".into(),
            });
        }
        let mut window = history.to_vec();
        let mut prev = Pose::ORIGIN;
        let mut out = Vec::with_capacity(TRAJ_LEN);
        for pose in traj.poses() {
            let (dx, dy, dth) = pose.delta_in_frame_of(&prev);
            let z = self.sample_next_latent(
                store,
                &window[window.len() - HISTORY_LEN..],
                &[dx, dy, dth],
                steps,
                rng,
            )?;
            out.push(z.clone());
            window.push(z);
            prev = *pose;
        }
        Ok(out)
    }

    /// History latents for the pre-trajectory frames, from straight-line
    /// back-extrapolation at the given speed.
    pub fn observation_history(
        &self,
        store: &ParamStore,
        scene: &Scene,
        start_speed: f64,
    ) -> Vec<Vec<f64>> {
        (0..HISTORY_LEN)
            .map(|i| {
                let back = (HISTORY_LEN - 1 - i) as f64 * DT;
                let pose = Pose::new(-start_speed * back, 0.0, 0.0);
                self.encode_observation(store, &scene.at_time(-back), &pose, start_speed)
            })
            .collect()
    }

    /// Teacher-forcing elements for one (scene, trajectory): the context
    /// window slides over true encoded latents, never model predictions.
    pub fn teacher_forcing_items(
        &self,
        store: &ParamStore,
        scene: &Scene,
        traj: &Trajectory,
    ) -> Vec<WmTrainItem> {
        let mut speeds = [0.0; TRAJ_LEN];
        let mut prev = Pose::ORIGIN;
        for (k, p) in traj.poses().iter().enumerate() {
            speeds[k] = p.distance(&prev) / DT;
            prev = *p;
        }
        let mut window = self.observation_history(store, scene, speeds[0]);
        let mut prev = Pose::ORIGIN;
        let mut items = Vec::with_capacity(TRAJ_LEN);
        for (k, pose) in traj.poses().iter().enumerate() {
            let (dx, dy, dth) = pose.delta_in_frame_of(&prev);
            let x1 = self.encode_observation(
                store,
                &scene.at_time((k + 1) as f64 * DT),
                pose,
                speeds[k],
            );
            items.push(WmTrainItem {
                history: window[window.len() - HISTORY_LEN..].to_vec(),
                action: [dx, dy, dth],
                x1: x1.clone(),
            });
            window.push(x1);
            prev = *pose;
        }
        items
    }
}

fn flatten(history: &[Vec<f64>]) -> Vec<f64> {
    history.iter().flatten().copied().collect()
}
