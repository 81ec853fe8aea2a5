//! Unicycle rollout: turn (speed, yaw rate) control sequences into pose
//! trajectories. Heading updates before position, so each step moves along
//! the post-turn heading.

use crate::error::{Error, Result};
use crate::geom::{Pose, Trajectory, DEFAULT_V_MAX, DT, TRAJ_LEN};

/// Yaw-rate magnitude cap in rad/s.
pub const MAX_YAW_RATE: f64 = 1.0;

/// One control per step: speed in [0, v_max], |yaw_rate| <= MAX_YAW_RATE.
pub type Controls = [(f64, f64); TRAJ_LEN];

pub fn rollout_dynamics(start: &Pose, controls: &Controls) -> Result<Trajectory> {
    for (k, &(v, w)) in controls.iter().enumerate() {
        if !(0.0..=DEFAULT_V_MAX).contains(&v) {
            return Err(Error::InvalidControl {
                step: k,
                reason: format!("speed {v} outside [0, {DEFAULT_V_MAX}]"),
            });
        }
        if w.abs() > MAX_YAW_RATE {
            return Err(Error::InvalidControl {
                step: k,
                reason: format!("yaw rate {w} outside [-{MAX_YAW_RATE}, {MAX_YAW_RATE}]"),
            });
        }
    }
    let mut poses = [Pose::ORIGIN; TRAJ_LEN];
    let mut x = start.x;
    let mut y = start.y;
    let mut theta = start.theta;
    for (k, &(v, w)) in controls.iter().enumerate() {
        theta += w * DT;
        x += v * theta.cos() * DT;
        y += v * theta.sin() * DT;
        poses[k] = Pose::new(x, y, theta);
    }
    Trajectory::new(poses, DEFAULT_V_MAX)
}
