//! Poses, trajectories, and angle arithmetic.
//!
//! A trajectory is the planning unit everywhere in this crate: exactly 8
//! poses at 0.5 s spacing (a 4 s horizon at 2 Hz), expressed in the ego frame
//! at t=0 (x forward, y left, theta counterclockwise from +x).

use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

/// Number of poses per trajectory.
pub const TRAJ_LEN: usize = 8;
/// Seconds between consecutive poses.
pub const DT: f64 = 0.5;
/// Default speed cap used by the construction check.
pub const DEFAULT_V_MAX: f64 = 15.0;

/// Normalize an angle into [-pi, pi).
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = theta.rem_euclid(two_pi);
    if a >= std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Smallest absolute difference between two angles, in [0, pi].
///
/// Symmetric in its arguments and invariant to adding 2*pi*k to either.
pub fn wrap_angle_diff(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (a - b).abs().rem_euclid(two_pi);
    d.min(two_pi - d)
}

/// A planar pose. `theta` is kept normalized in [-pi, pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const ORIGIN: Pose = Pose {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn distance(&self, other: &Pose) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// Displacement of `self` expressed in the local frame of `from`:
    /// translation rotated by -from.theta, heading change wrapped.
    pub fn delta_in_frame_of(&self, from: &Pose) -> (f64, f64, f64) {
        let dx = self.x - from.x;
        let dy = self.y - from.y;
        let (s, c) = from.theta.sin_cos();
        (
            c * dx + s * dy,
            -s * dx + c * dy,
            normalize_angle(self.theta - from.theta),
        )
    }
}

/// Exactly [`TRAJ_LEN`] poses at [`DT`] spacing.
///
/// `new` rejects pose lists whose consecutive displacement exceeds
/// `v_max * DT`; `from_poses_unchecked` skips that check and exists for
/// samplers that intentionally produce kinematically raw pose lists
/// (the random-Gaussian baseline, policy mean outputs under evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: [Pose; TRAJ_LEN],
}

impl Trajectory {
    pub fn new(poses: [Pose; TRAJ_LEN], v_max: f64) -> Result<Self> {
        let max_step = v_max * DT;
        for k in 1..TRAJ_LEN {
            let d = poses[k].distance(&poses[k - 1]);
            if d > max_step + 1e-9 {
                return Err(Error::InvalidTrajectory(format!(
                    "displacement {d:.3} m between poses {} and {k} exceeds v_max*dt = {max_step:.3} m",
                    k - 1
                )));
            }
        }
        Ok(Self { poses })
    }

    pub fn from_poses_unchecked(poses: [Pose; TRAJ_LEN]) -> Self {
        Self { poses }
    }

    pub fn poses(&self) -> &[Pose; TRAJ_LEN] {
        &self.poses
    }

    pub fn pose(&self, k: usize) -> &Pose {
        &self.poses[k]
    }

    /// Final pose of the 4 s horizon.
    pub fn end_state(&self) -> Pose {
        self.poses[TRAJ_LEN - 1]
    }

    pub fn dt(&self) -> f64 {
        DT
    }

    /// Flatten to 24 coordinates in (x, y, theta) step order.
    pub fn flatten(&self) -> [f64; TRAJ_LEN * 3] {
        let mut out = [0.0; TRAJ_LEN * 3];
        for (k, p) in self.poses.iter().enumerate() {
            out[3 * k] = p.x;
            out[3 * k + 1] = p.y;
            out[3 * k + 2] = p.theta;
        }
        out
    }

    pub fn from_flat(flat: &[f64; TRAJ_LEN * 3]) -> Self {
        let mut poses = [Pose::ORIGIN; TRAJ_LEN];
        for (k, pose) in poses.iter_mut().enumerate() {
            *pose = Pose::new(flat[3 * k], flat[3 * k + 1], flat[3 * k + 2]);
        }
        Self { poses }
    }

    /// Mean squared second difference of the waypoint sequence, a
    /// discontinuity proxy: smooth rollouts score low, jittered ones high.
    pub fn mean_squared_second_difference(&self) -> f64 {
        let mut acc = 0.0;
        let mut n = 0;
        for k in 2..TRAJ_LEN {
            let ddx = self.poses[k].x - 2.0 * self.poses[k - 1].x + self.poses[k - 2].x;
            let ddy = self.poses[k].y - 2.0 * self.poses[k - 1].y + self.poses[k - 2].y;
            acc += ddx * ddx + ddy * ddy;
            n += 2;
        }
        acc / n as f64
    }
}

fn format_line(traj: &Trajectory) -> String {
    let flat = traj.flatten();
    let fields: Vec<String> = flat.iter().map(|v| format!("{v}")).collect();
    fields.join(",")
}

fn parse_line(line: &str, line_no: usize, v_max: f64) -> Result<Trajectory> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != TRAJ_LEN * 3 {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("expected 24 fields, got {}", fields.len()),
        });
    }
    let mut flat = [0.0; TRAJ_LEN * 3];
    for (i, f) in fields.iter().enumerate() {
        flat[i] = f.trim().parse::<f64>().map_err(|e| Error::Parse {
            line: line_no,
            reason: format!("field {i}: {e}"),
        })?;
    }
    let mut poses = [Pose::ORIGIN; TRAJ_LEN];
    for (k, pose) in poses.iter_mut().enumerate() {
        *pose = Pose {
            x: flat[3 * k],
            y: flat[3 * k + 1],
            theta: flat[3 * k + 2],
        };
        if pose.theta < -std::f64::consts::PI || pose.theta >= std::f64::consts::PI {
            pose.theta = normalize_angle(pose.theta);
        }
    }
    Trajectory::new(poses, v_max).map_err(|e| Error::Parse {
        line: line_no,
        reason: e.to_string(),
    })
}

/// Write trajectories one record per line, 24 comma-separated fields.
/// Values use the shortest decimal form that parses back bit-exactly.
pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trajs {
        writeln!(f, "{}", format_line(t))?;
    }
    Ok(())
}

/// Read a trajectory file. Lines starting with '#' and blank lines are skipped;
/// line order defines the index.
pub fn read_trajectories(path: &Path, v_max: f64) -> Result<Vec<Trajectory>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_line(trimmed, i + 1, v_max)?);
    }
    Ok(out)
}
