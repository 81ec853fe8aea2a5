//! 2D driving environment: scene generation, kinematic rollout, and the
//! ground-truth reward oracle that labels trajectories on eight dimensions
//! at eight horizons.

mod dynamics;
mod oracle;
mod scene;
mod shape;

pub use dynamics::{rollout_dynamics, Controls, MAX_YAW_RATE};
pub use oracle::{
    read_label_file, simulate_rewards, simulate_rewards_with, write_label_file,
    HorizonRewardTable, OracleConfig, RewardVector, DIM_NAMES, REWARD_DIMS, SAFETY_DIMS,
    TASK_DIMS,
};
pub use scene::{
    arc_centerline, ego_obb, generate_scene, read_scene, write_scene, CenterPoint, Difficulty,
    MovingAgent, Projection, Scene, StopLine, CENTERLINE_POINTS, CENTERLINE_SPACING,
    DEFAULT_LANE_HALF_WIDTH, EGO_LENGTH, EGO_WIDTH,
};
pub use shape::{Obb, Rect};
