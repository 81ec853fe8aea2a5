//! Autoregressive dense reward model: compresses latents with a learnable
//! query, encodes them as history tokens, and decodes eight per-dimension
//! reward logits through query-bank cross-attention, one call per horizon.

use crate::env::{HorizonRewardTable, RewardVector, REWARD_DIMS};
use crate::error::{Error, Result};
use crate::geom::{Trajectory, TRAJ_LEN};
use crate::nn::{
    Activation, AdamW, CrossAttentionBlock, DenseNet, ParamId, ParamStore, Tape, ValueId,
};
use crate::rng::SeededRng;
use crate::worldmodel::{WorldModelNet, HISTORY_LEN};

/// Normalizers for the flattened (x, y, theta) trajectory prefix.
const TRAJ_SCALES: [f64; 3] = [30.0, 10.0, 1.0];

#[derive(Debug, Clone)]
pub struct RmConfig {
    pub latent_width: usize,
    /// Compressed token width l; must divide the latent width.
    pub token_width: usize,
    /// Query / history token width D.
    pub d: usize,
    /// Per-dimension BCE weights, order (nc, dac, ddc, tlc, ep, ttc, lk, hc).
    pub omega: [f64; REWARD_DIMS],
    /// Per-horizon BCE weights, index t-1.
    pub gamma: [f64; TRAJ_LEN],
}

impl Default for RmConfig {
    fn default() -> Self {
        Self {
            latent_width: 32,
            token_width: 8,
            d: 32,
            omega: [1.0; REWARD_DIMS],
            gamma: [1.0; TRAJ_LEN],
        }
    }
}

/// One supervised element: context latents, imagined latents for the first
/// `horizon` steps, the candidate trajectory, and the oracle label row.
#[derive(Debug, Clone)]
pub struct RmTrainItem {
    pub history: Vec<Vec<f64>>,
    pub imagined: Vec<Vec<f64>>,
    pub traj: Trajectory,
    pub horizon: usize,
    pub label: RewardVector,
}

#[derive(Debug, Clone)]
pub struct RewardPrediction {
    pub logits: [f64; REWARD_DIMS],
    pub scores: RewardVector,
}

pub struct RewardModel {
    pub cfg: RmConfig,
    compress_query: ParamId,
    compress_value: ParamId,
    token_encoder: DenseNet,
    traj_encoder: DenseNet,
    step_embedding: ParamId,
    query_bank: ParamId,
    attention: CrossAttentionBlock,
    decoder: DenseNet,
}

impl RewardModel {
    /// Registers parameters under `rm.*`.
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, cfg: RmConfig) -> Result<Self> {
        if cfg.latent_width % cfg.token_width != 0 {
            return Err(Error::InvalidArgument(format!(
                "token width {} must divide latent width {}",
                cfg.token_width, cfg.latent_width
            )));
        }
        let l = cfg.token_width;
        let d = cfg.d;
        Ok(Self {
            compress_query: store.add_matrix("rm.cmp.q", l, 1, rng),
            compress_value: store.add_matrix("rm.cmp.wv", l, l, rng),
            token_encoder: DenseNet::new(
                store,
                rng,
                "rm.his",
                &[l, d, d],
                &[Activation::Tanh, Activation::Tanh],
            ),
            traj_encoder: DenseNet::new(
                store,
                rng,
                "rm.traj",
                &[3 * TRAJ_LEN, d, d],
                &[Activation::Tanh, Activation::Identity],
            ),
            step_embedding: store.add_matrix("rm.step", TRAJ_LEN, d, rng),
            query_bank: store.add_matrix("rm.qbase", REWARD_DIMS, d, rng),
            attention: CrossAttentionBlock::new(store, rng, "rm.attn", d),
            decoder: DenseNet::new(
                store,
                rng,
                "rm.dec",
                &[d, d, 1],
                &[Activation::Tanh, Activation::Identity],
            ),
            cfg,
        })
    }

    /// Single learnable query over the l-wide chunks of z: softmax-weighted
    /// sum of value-projected chunks.
    fn compress_on_tape(&self, tape: &mut Tape, z: &[f64]) -> Result<(ValueId, ValueId)> {
        if z.len() != self.cfg.latent_width {
            return Err(Error::DimMismatch {
                expected: self.cfg.latent_width,
                got: z.len(),
                context: "compress_latent input",
            });
        }
        let l = self.cfg.token_width;
        let n_chunks = z.len() / l;
        let z_id = tape.constant(z.to_vec());
        let q = tape.param_vec(self.compress_query);
        let inv_sqrt = 1.0 / (l as f64).sqrt();
        let mut scores = Vec::with_capacity(n_chunks);
        let mut chunks = Vec::with_capacity(n_chunks);
        for c in 0..n_chunks {
            let chunk = tape.slice(z_id, c * l, l);
            let s = tape.dot(q, chunk);
            scores.push(tape.scale(s, inv_sqrt));
            chunks.push(chunk);
        }
        let stacked = tape.concat(&scores);
        let weights = tape.softmax(stacked);
        let mut token: Option<ValueId> = None;
        for (c, chunk) in chunks.into_iter().enumerate() {
            let v = tape.matvec(self.compress_value, chunk);
            let weighted = tape.scale_by_elem(v, weights, c);
            token = Some(match token {
                Some(acc) => tape.add(acc, weighted),
                None => weighted,
            });
        }
        Ok((token.expect("latent has at least one chunk"), weights))
    }

    /// Compressed token for one latent; deterministic for frozen weights.
    pub fn compress_latent(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(store);
        let (token, _) = self.compress_on_tape(&mut tape, z)?;
        Ok(tape.value(token).to_vec())
    }

    /// Chunk attention weights for one latent (diagnostics; they sum to 1).
    pub fn compress_weights(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(store);
        let (_, weights) = self.compress_on_tape(&mut tape, z)?;
        Ok(tape.value(weights).to_vec())
    }

    /// Flattened (x, y, theta) prefix of the first `horizon` poses,
    /// normalized and zero-padded to the full length.
    fn traj_prefix(traj: &Trajectory, horizon: usize) -> Vec<f64> {
        let mut out = vec![0.0; 3 * TRAJ_LEN];
        for (k, p) in traj.poses().iter().take(horizon).enumerate() {
            out[3 * k] = p.x / TRAJ_SCALES[0];
            out[3 * k + 1] = p.y / TRAJ_SCALES[1];
            out[3 * k + 2] = p.theta / TRAJ_SCALES[2];
        }
        out
    }

    fn logits_on_tape(
        &self,
        tape: &mut Tape,
        history: &[Vec<f64>],
        imagined: &[Vec<f64>],
        traj: &Trajectory,
        horizon: usize,
    ) -> Result<Vec<ValueId>> {
        if !(1..=TRAJ_LEN).contains(&horizon) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} outside 1..={TRAJ_LEN}"
            )));
        }
        if history.len() != HISTORY_LEN {
            return Err(Error::DimMismatch {
                expected: HISTORY_LEN,
                got: history.len(),
                context: "reward model history",
            });
        }
        if imagined.len() != horizon {
            return Err(Error::DimMismatch {
                expected: horizon,
                got: imagined.len(),
                context: "imagined latents for horizon",
            });
        }
        let mut tokens = Vec::with_capacity(HISTORY_LEN + horizon);
        for z in history.iter().chain(imagined.iter()) {
            let (compressed, _) = self.compress_on_tape(tape, z)?;
            tokens.push(self.token_encoder.forward(tape, compressed)?);
        }
        let prefix = tape.constant(Self::traj_prefix(traj, horizon));
        let traj_code = self.traj_encoder.forward(tape, prefix)?;
        let step = tape.param_row(self.step_embedding, horizon - 1);
        let c_dyn = tape.add(traj_code, step);
        let queries: Vec<ValueId> = (0..REWARD_DIMS)
            .map(|k| {
                let base = tape.param_row(self.query_bank, k);
                tape.add(base, c_dyn)
            })
            .collect();
        let attended = self.attention.forward(tape, &queries, &tokens);
        attended
            .into_iter()
            .map(|a| self.decoder.forward(tape, a))
            .collect()
    }

    /// Eight reward logits and sigmoided scores for one horizon.
    pub fn predict_rewards(
        &self,
        store: &ParamStore,
        history: &[Vec<f64>],
        imagined: &[Vec<f64>],
        traj: &Trajectory,
        horizon: usize,
    ) -> Result<RewardPrediction> {
        let mut tape = Tape::new(store);
        let ids = self.logits_on_tape(&mut tape, history, imagined, traj, horizon)?;
        let mut logits = [0.0; REWARD_DIMS];
        let mut scores = [0.0; REWARD_DIMS];
        for (k, id) in ids.into_iter().enumerate() {
            let x = tape.scalar(id);
            logits[k] = x;
            scores[k] = 1.0 / (1.0 + (-x).exp());
        }
        Ok(RewardPrediction {
            logits,
            scores: RewardVector::from_array(scores),
        })
    }

    /// Weighted BCE-with-logits loss over a batch, on tape.
    pub fn loss_on_tape(&self, tape: &mut Tape, batch: &[RmTrainItem]) -> Result<ValueId> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("reward model batch"));
        }
        for item in batch {
            for (k, &y) in item.label.as_array().iter().enumerate() {
                if !(0.0..=1.0).contains(&y) {
                    return Err(Error::InvalidArgument(format!(
                        "label dim {k} = {y} outside [0, 1]"
                    )));
                }
            }
        }
        let mut per_item = Vec::with_capacity(batch.len());
        for item in batch {
            let logits = self.logits_on_tape(
                tape,
                &item.history,
                &item.imagined,
                &item.traj,
                item.horizon,
            )?;
            let stacked = tape.concat(&logits);
            // BCE(x, y) = -y*log sigmoid(x) - (1-y)*log sigmoid(-x).
            let y = item.label.as_array();
            let y_id = tape.constant(y.to_vec());
            let one_minus_y = tape.constant(y.iter().map(|v| 1.0 - v).collect());
            let log_p = tape.log_sigmoid(stacked);
            let neg = tape.scale(stacked, -1.0);
            let log_q = tape.log_sigmoid(neg);
            let pos_term = tape.mul(y_id, log_p);
            let neg_term = tape.mul(one_minus_y, log_q);
            let bce_neg = tape.add(pos_term, neg_term);
            let gamma = self.cfg.gamma[item.horizon - 1];
            let weights = tape.constant(self.cfg.omega.iter().map(|w| -w * gamma).collect());
            let weighted = tape.mul(bce_neg, weights);
            per_item.push(tape.sum(weighted));
        }
        let stacked = tape.concat(&per_item);
        let total = tape.sum(stacked);
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    }

    /// One optimizer step on the weighted BCE loss; returns the loss.
    pub fn train_step(
        &self,
        store: &mut ParamStore,
        opt: &mut AdamW,
        batch: &[RmTrainItem],
    ) -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss_id = self.loss_on_tape(&mut tape, batch)?;
        let loss = tape.scalar(loss_id);
        if !loss.is_finite() {
            return Err(Error::NonFinite("reward model loss"));
        }
        let grads = tape.backward(loss_id);
        drop(tape);
        opt.step(store, &grads)?;
        Ok(loss)
    }
}

/// Imagines one latent rollout and scores every horizon prefix; the returned
/// table holds sigmoided scores, horizon-major.
pub fn score_trajectory(
    wm: &WorldModelNet,
    rm: &RewardModel,
    store: &ParamStore,
    history: &[Vec<f64>],
    traj: &Trajectory,
    steps: usize,
    rng: &mut SeededRng,
) -> Result<HorizonRewardTable> {
    let imagined = wm.imagine_rollout(store, history, traj, steps, rng)?;
    let mut rows = [RewardVector::from_array([0.0; REWARD_DIMS]); TRAJ_LEN];
    for t in 1..=TRAJ_LEN {
        let pred = rm.predict_rewards(store, history, &imagined[..t], traj, t)?;
        rows[t - 1] = pred.scores;
    }
    Ok(HorizonRewardTable { rows })
}
