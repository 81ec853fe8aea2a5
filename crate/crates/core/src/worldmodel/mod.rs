//! Latent world model: shortcut-grid flow samples, the velocity network, and
//! imagination rollouts.

mod grid;
mod net;

pub use grid::{sample_training_pair, FlowSample, StepGrid};
pub use net::{
    loss_weight, observation_features, scaled_features, WmConfig, WmTrainItem, WorldModelNet,
    HISTORY_LEN, OBS_FEATURES, RANGE_CLAMP,
};
