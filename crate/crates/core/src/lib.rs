//! Latent-imagination trajectory planning on a 2D driving environment.
//!
//! The crate is organized around a data pipeline: the [`env`] module defines
//! scenes, unicycle dynamics, and the ground-truth reward oracle; [`vocab`]
//! builds the fixed trajectory vocabulary; [`worldmodel`] learns a
//! shortcut-forcing flow model over latent rollouts; [`rewardmodel`] predicts
//! per-step rewards from imagined latents; [`rl`] scores candidates and
//! trains the Gaussian policy with group-relative advantages. [`nn`] holds
//! the tape autodiff, layers, and optimizer shared by the learned parts.

pub mod env;
pub mod error;
pub mod geom;
pub mod nn;
pub mod rewardmodel;
pub mod rl;
pub mod rng;
pub mod vocab;
pub mod worldmodel;

pub use error::{Error, Result};
pub use geom::{wrap_angle_diff, Pose, Trajectory, DEFAULT_V_MAX, DT, TRAJ_LEN};
pub use rng::SeededRng;
