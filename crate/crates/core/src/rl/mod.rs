//! Imagination RL: log-fused dense rewards, vocabulary candidate sampling,
//! a Gaussian trajectory policy, and the GRPO training loop.

mod grpo;
mod policy;
mod reward;
mod sampling;

pub use grpo::{
    actor_loss, group_advantages, prepare_scene, rl_loss_on_tape, rl_train_step,
    rl_train_step_prepared, PreparedCandidate, PreparedScene, RlConfig, RlLossIds, RlLosses,
    SceneSample,
};
pub use policy::{
    default_sigma, log_density, log_density_on_tape, policy_input, sigma_schedule, PolicyHead,
};
pub use reward::{
    dense_final_reward, fuse_reward, SafetyFusion, EPS_FLOOR, UNIFORM_W_SAFE, UNIFORM_W_TASK,
    UNIFORM_W_T,
};
pub use sampling::{
    flatten_trajectory, mahalanobis, mean_squared_second_difference, sample_candidates,
    sample_candidates_random_baseline, trajectory_from_flat, Candidate, CandidateSampler,
    CandidateSource, FLAT_LEN,
};
