//! Group-relative policy optimization over the trajectory vocabulary:
//! candidates are scored in imagination with frozen world and reward models,
//! advantages are normalized within each scene's group, and the clipped
//! surrogate plus behavioral-cloning and KL terms update the policy head.

use super::policy::{log_density, log_density_on_tape, policy_input, PolicyHead};
use super::reward::{dense_final_reward, SafetyFusion, UNIFORM_W_SAFE, UNIFORM_W_TASK, UNIFORM_W_T};
use super::sampling::{
    flatten_trajectory, sample_candidates, sample_candidates_random_baseline, Candidate,
    CandidateSampler, CandidateSource, FLAT_LEN,
};
use crate::env::Scene;
use crate::error::{Error, Result};
use crate::geom::{Trajectory, TRAJ_LEN};
use crate::nn::{AdamW, ParamStore, Tape, ValueId};
use crate::rewardmodel::{score_trajectory, RewardModel};
use crate::rng::SeededRng;
use crate::vocab::TrajectoryVocabulary;
use crate::worldmodel::WorldModelNet;

/// Knobs of the RL stage. Weights and the sigma schedule are the defaults
/// used when nothing overrides them; all are plain data for serialization
/// at the CLI layer.
#[derive(Debug, Clone)]
pub struct RlConfig {
    /// PPO clip width.
    pub epsilon: f64,
    pub lambda_bc: f64,
    pub lambda_kl: f64,
    /// Softmax-drawn candidates per scene.
    pub g1: usize,
    /// Nearest-neighbor candidates per scene.
    pub g2: usize,
    pub temperature: f64,
    /// Euler steps for imagination rollouts while scoring.
    pub rollout_steps: usize,
    pub sigma_pos_base: f64,
    pub sigma_pos_slope: f64,
    pub sigma_theta_base: f64,
    pub sigma_theta_slope: f64,
    pub w_safe: [f64; 4],
    pub w_task: [f64; 4],
    pub w_t: [f64; TRAJ_LEN],
    pub fusion: SafetyFusion,
    /// Candidate generator used by scene preparation.
    pub sampler: CandidateSampler,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            lambda_bc: 1.0,
            lambda_kl: 0.1,
            g1: 8,
            g2: 8,
            temperature: 1.0,
            rollout_steps: 1,
            sigma_pos_base: 0.2,
            sigma_pos_slope: 0.05,
            sigma_theta_base: 0.05,
            sigma_theta_slope: 0.01,
            w_safe: UNIFORM_W_SAFE,
            w_task: UNIFORM_W_TASK,
            w_t: UNIFORM_W_T,
            fusion: SafetyFusion::LogFloor,
            sampler: CandidateSampler::Vocabulary,
        }
    }
}

impl RlConfig {
    pub fn sigma(&self) -> [f64; FLAT_LEN] {
        super::policy::sigma_schedule(
            self.sigma_pos_base,
            self.sigma_pos_slope,
            self.sigma_theta_base,
            self.sigma_theta_slope,
        )
    }
}

/// One training scene: world context, start speed, and the anchor the
/// behavioral-cloning term pulls toward.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub scene: Scene,
    pub start_speed: f64,
    pub anchor: Trajectory,
}

#[derive(Debug, Clone, Copy)]
pub struct RlLosses {
    pub actor: f64,
    pub bc: f64,
    pub kl: f64,
    pub total: f64,
    /// Mean fused candidate reward across the batch, for logging.
    pub mean_reward: f64,
}

/// Population-normalized advantages; variance is floored at 1e-8 before the
/// square root, so degenerate groups yield all-zero advantages.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::InvalidArgument(format!(
            "group of {g} cannot be normalized; need at least 2"
        )));
    }
    // Summing deviations from the first element instead of raw values keeps
    // identical inputs at numerator exactly 0, so degenerate groups come out
    // as true zeros rather than rounding noise amplified by the floor.
    let shift = rewards[0];
    let mean = shift + rewards.iter().map(|r| r - shift).sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = var.max(1e-8).sqrt();
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Clipped surrogate for one candidate:
/// max(-A*rho, -A*clip(rho, 1-eps, 1+eps)), rho = exp(logp_new - logp_old).
pub fn actor_loss(advantage: f64, logp_new: f64, logp_old: f64, epsilon: f64) -> Result<f64> {
    if !logp_new.is_finite() || !logp_old.is_finite() {
        return Err(Error::NonFinite("log-probability"));
    }
    if !(0.0..1.0).contains(&epsilon) || epsilon == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let rho = (logp_new - logp_old).exp();
    Ok((-advantage * rho).max(-advantage * rho.clamp(1.0 - epsilon, 1.0 + epsilon)))
}

/// One candidate with everything the surrogate loss needs, frozen at
/// preparation time.
#[derive(Debug, Clone)]
pub struct PreparedCandidate {
    pub flat: [f64; FLAT_LEN],
    pub reward: f64,
    pub advantage: f64,
    /// Log-density under the policy snapshot that drew the candidates.
    pub logp_old: f64,
    pub source: CandidateSource,
}

/// One scene's inputs to the differentiable loss. Candidates, advantages,
/// old log-densities, and the reference mean are all fixed data here, so the
/// loss is a pure function of the policy parameters.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub input: Vec<f64>,
    pub anchor_flat: [f64; FLAT_LEN],
    pub ref_mean: [f64; FLAT_LEN],
    pub candidates: Vec<PreparedCandidate>,
}

/// Scores one scene with the frozen models and snapshots everything the
/// gradient step needs. `pi_store` doubles as the pi_old snapshot: with a
/// single inner epoch per batch the two coincide.
#[allow(clippy::too_many_arguments)]
pub fn prepare_scene(
    policy: &PolicyHead,
    pi_store: &ParamStore,
    ref_store: &ParamStore,
    wm: &WorldModelNet,
    rm: &RewardModel,
    model_store: &ParamStore,
    vocab: &TrajectoryVocabulary,
    sample: &SceneSample,
    cfg: &RlConfig,
    rng: &mut SeededRng,
) -> Result<PreparedScene> {
    let history = wm.observation_history(model_store, &sample.scene, sample.start_speed);
    let input = policy_input(&sample.scene, sample.start_speed, &history);
    let tau_act = policy.mean_flat(pi_store, &input)?;
    let ref_mean = policy.mean_flat(ref_store, &input)?;
    let sigma = cfg.sigma();

    let candidates = match cfg.sampler {
        CandidateSampler::Vocabulary => sample_candidates(
            vocab,
            &tau_act,
            &sigma,
            cfg.g1,
            cfg.g2,
            cfg.temperature,
            rng,
        )?,
        CandidateSampler::RandomBaseline => {
            sample_candidates_random_baseline(&tau_act, &sigma, cfg.g1 + cfg.g2, rng)?
        }
    };
    let candidates = score_candidates(
        wm, rm, model_store, &history, &tau_act, &sigma, cfg, candidates, rng,
    )?;
    Ok(PreparedScene {
        input,
        anchor_flat: flatten_trajectory(&sample.anchor),
        ref_mean,
        candidates,
    })
}

/// Rolls out and fuses rewards for a fixed candidate list, then attaches
/// advantages and old log-densities.
#[allow(clippy::too_many_arguments)]
fn score_candidates(
    wm: &WorldModelNet,
    rm: &RewardModel,
    model_store: &ParamStore,
    history: &[Vec<f64>],
    tau_act: &[f64; FLAT_LEN],
    sigma: &[f64; FLAT_LEN],
    cfg: &RlConfig,
    candidates: Vec<Candidate>,
    rng: &mut SeededRng,
) -> Result<Vec<PreparedCandidate>> {
    let mut rewards = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let table = score_trajectory(
            wm,
            rm,
            model_store,
            history,
            &cand.traj,
            cfg.rollout_steps,
            rng,
        )?;
        rewards.push(dense_final_reward(
            &table, &cfg.w_t, &cfg.w_safe, &cfg.w_task, cfg.fusion,
        )?);
    }
    let advantages = group_advantages(&rewards)?;
    Ok(candidates
        .into_iter()
        .zip(rewards.into_iter().zip(advantages))
        .map(|(cand, (reward, advantage))| PreparedCandidate {
            logp_old: log_density(&cand.flat, tau_act, sigma),
            flat: cand.flat,
            reward,
            advantage,
            source: cand.source,
        })
        .collect())
}

/// Loss components as tape values, before reduction to scalars.
pub struct RlLossIds {
    pub actor: ValueId,
    pub bc: ValueId,
    pub kl: ValueId,
    pub total: ValueId,
}

/// Builds L_total = L_actor + lambda_bc * L_bc + lambda_kl * L_kl on the
/// tape from prepared scenes. Everything except the policy mean is constant,
/// so gradients reach exactly the policy parameters.
pub fn rl_loss_on_tape(
    policy: &PolicyHead,
    tape: &mut Tape,
    prepared: &[PreparedScene],
    cfg: &RlConfig,
) -> Result<RlLossIds> {
    if prepared.is_empty() {
        return Err(Error::EmptyInput("rl loss batch"));
    }
    let sigma = cfg.sigma();
    let inv_two_var: Vec<f64> = sigma.iter().map(|s| 1.0 / (2.0 * s * s)).collect();

    let mut actor_terms = Vec::with_capacity(prepared.len());
    let mut bc_terms = Vec::with_capacity(prepared.len());
    let mut kl_terms = Vec::with_capacity(prepared.len());
    for scene in prepared {
        let mean = policy.mean_on_tape(tape, &scene.input)?;

        let mut cand_terms = Vec::with_capacity(scene.candidates.len());
        for cand in &scene.candidates {
            if !cand.logp_old.is_finite() {
                return Err(Error::NonFinite("old log-probability"));
            }
            let logp_new = log_density_on_tape(tape, &cand.flat, mean, &sigma);
            let shifted = tape.offset(logp_new, -cand.logp_old);
            let rho = tape.exp(shifted);
            let clipped = tape.clamp(rho, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
            let unclipped_term = tape.scale(rho, -cand.advantage);
            let clipped_term = tape.scale(clipped, -cand.advantage);
            cand_terms.push(tape.max_pair(unclipped_term, clipped_term));
        }
        let stacked = tape.concat(&cand_terms);
        actor_terms.push(tape.mean(stacked));

        let anchor = tape.constant(scene.anchor_flat.to_vec());
        let bc_diff = tape.sub(mean, anchor);
        let bc_abs = tape.abs(bc_diff);
        bc_terms.push(tape.mean(bc_abs));

        let ref_mean = tape.constant(scene.ref_mean.to_vec());
        let kl_diff = tape.sub(mean, ref_mean);
        let kl_sq = tape.mul(kl_diff, kl_diff);
        let kl_w = tape.constant(inv_two_var.clone());
        let kl_weighted = tape.mul(kl_sq, kl_w);
        kl_terms.push(tape.sum(kl_weighted));
    }

    let actor_stack = tape.concat(&actor_terms);
    let actor = tape.mean(actor_stack);
    let bc_stack = tape.concat(&bc_terms);
    let bc = tape.mean(bc_stack);
    let kl_stack = tape.concat(&kl_terms);
    let kl = tape.mean(kl_stack);

    let bc_scaled = tape.scale(bc, cfg.lambda_bc);
    let kl_scaled = tape.scale(kl, cfg.lambda_kl);
    let reg = tape.add(bc_scaled, kl_scaled);
    let total = tape.add(actor, reg);
    Ok(RlLossIds {
        actor,
        bc,
        kl,
        total,
    })
}

/// One GRPO update: prepare every scene with the frozen world and reward
/// models, build the surrogate loss, and step the policy optimizer. Only
/// `pi_store` is mutated.
#[allow(clippy::too_many_arguments)]
pub fn rl_train_step(
    policy: &PolicyHead,
    pi_store: &mut ParamStore,
    ref_store: &ParamStore,
    wm: &WorldModelNet,
    rm: &RewardModel,
    model_store: &ParamStore,
    vocab: &TrajectoryVocabulary,
    scenes: &[SceneSample],
    cfg: &RlConfig,
    opt: &mut AdamW,
    rng: &mut SeededRng,
) -> Result<RlLosses> {
    if scenes.is_empty() {
        return Err(Error::EmptyInput("rl scene batch"));
    }
    let prepared: Vec<PreparedScene> = scenes
        .iter()
        .map(|s| {
            prepare_scene(
                policy,
                pi_store,
                ref_store,
                wm,
                rm,
                model_store,
                vocab,
                s,
                cfg,
                rng,
            )
        })
        .collect::<Result<_>>()?;
    rl_train_step_prepared(policy, pi_store, &prepared, cfg, opt)
}

/// Loss, backward pass, and optimizer step over scenes that are already
/// prepared (possibly each against its own vocabulary). Only `pi_store` is
/// mutated.
pub fn rl_train_step_prepared(
    policy: &PolicyHead,
    pi_store: &mut ParamStore,
    prepared: &[PreparedScene],
    cfg: &RlConfig,
    opt: &mut AdamW,
) -> Result<RlLosses> {
    if prepared.is_empty() {
        return Err(Error::EmptyInput("rl prepared batch"));
    }
    let total_candidates: usize = prepared.iter().map(|p| p.candidates.len()).sum();
    let mean_reward = prepared
        .iter()
        .flat_map(|p| p.candidates.iter().map(|c| c.reward))
        .sum::<f64>()
        / total_candidates as f64;

    let mut tape = Tape::new(pi_store);
    let ids = rl_loss_on_tape(policy, &mut tape, prepared, cfg)?;
    let losses = RlLosses {
        actor: tape.scalar(ids.actor),
        bc: tape.scalar(ids.bc),
        kl: tape.scalar(ids.kl),
        total: tape.scalar(ids.total),
        mean_reward,
    };
    if !losses.total.is_finite() {
        return Err(Error::NonFinite("rl total loss"));
    }
    let grads = tape.backward(ids.total);
    drop(tape);
    opt.step(pi_store, &grads)?;
    Ok(losses)
}
