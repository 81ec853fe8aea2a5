//! Ground-truth reward oracle: scores a trajectory against a scene on eight
//! dimensions at eight horizons.
//!
//! Horizon t covers the trajectory prefix through pose t (time t * 0.5 s).
//! Six dimensions are binary violation flags accumulated over the prefix, so
//! once they drop to 0 they stay 0 at later horizons; ep (progress) and lk
//! (lane keeping) are continuous in [0, 1].

use super::scene::{ego_obb, Scene};
use crate::error::{Error, Result};
use crate::geom::{wrap_angle_diff, Pose, Trajectory, DT, TRAJ_LEN};
use std::io::{BufRead, Write};
use std::path::Path;

/// Number of reward dimensions.
pub const REWARD_DIMS: usize = 8;
/// Dimension order used everywhere rewards are flattened.
pub const DIM_NAMES: [&str; REWARD_DIMS] = ["nc", "dac", "ddc", "tlc", "ep", "ttc", "lk", "hc"];
/// Indices of the multiplicative safety dimensions.
pub const SAFETY_DIMS: [usize; 4] = [0, 1, 2, 3];
/// Indices of the weighted-sum task dimensions.
pub const TASK_DIMS: [usize; 4] = [4, 5, 6, 7];

/// Scores for one horizon. Every component lies in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardVector {
    pub nc: f64,
    pub dac: f64,
    pub ddc: f64,
    pub tlc: f64,
    pub ep: f64,
    pub ttc: f64,
    pub lk: f64,
    pub hc: f64,
}

impl RewardVector {
    pub fn as_array(&self) -> [f64; REWARD_DIMS] {
        [
            self.nc, self.dac, self.ddc, self.tlc, self.ep, self.ttc, self.lk, self.hc,
        ]
    }

    pub fn from_array(a: [f64; REWARD_DIMS]) -> Self {
        Self {
            nc: a[0],
            dac: a[1],
            ddc: a[2],
            tlc: a[3],
            ep: a[4],
            ttc: a[5],
            lk: a[6],
            hc: a[7],
        }
    }
}

/// Eight [`RewardVector`]s, one per horizon; row t (0-indexed) covers the
/// prefix through pose t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonRewardTable {
    pub rows: [RewardVector; TRAJ_LEN],
}

impl HorizonRewardTable {
    /// Row-major (horizon-major) 64-value layout.
    pub fn flatten(&self) -> [f64; TRAJ_LEN * REWARD_DIMS] {
        let mut out = [0.0; TRAJ_LEN * REWARD_DIMS];
        for (t, row) in self.rows.iter().enumerate() {
            out[t * REWARD_DIMS..(t + 1) * REWARD_DIMS].copy_from_slice(&row.as_array());
        }
        out
    }

    pub fn from_flat(flat: &[f64; TRAJ_LEN * REWARD_DIMS]) -> Self {
        let mut rows = [RewardVector::default(); TRAJ_LEN];
        for (t, row) in rows.iter_mut().enumerate() {
            let mut a = [0.0; REWARD_DIMS];
            a.copy_from_slice(&flat[t * REWARD_DIMS..(t + 1) * REWARD_DIMS]);
            *row = RewardVector::from_array(a);
        }
        Self { rows }
    }
}

/// Thresholds for the ttc and comfort checks.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Minimum acceptable forward time-to-collision, seconds.
    pub ttc_threshold: f64,
    /// Comfort bound on |acceleration|, m/s^2.
    pub max_accel: f64,
    /// Comfort bound on |jerk|, m/s^3.
    pub max_jerk: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            ttc_threshold: 1.0,
            max_accel: 4.0,
            max_jerk: 8.0,
        }
    }
}

pub fn simulate_rewards(scene: &Scene, traj: &Trajectory) -> HorizonRewardTable {
    simulate_rewards_with(scene, traj, &OracleConfig::default())
}

pub fn simulate_rewards_with(
    scene: &Scene,
    traj: &Trajectory,
    cfg: &OracleConfig,
) -> HorizonRewardTable {
    // Chord speeds v_1..v_8 relative to the implicit start pose at the origin.
    let mut speeds = [0.0; TRAJ_LEN];
    let mut prev = Pose::ORIGIN;
    for (k, p) in traj.poses().iter().enumerate() {
        speeds[k] = p.distance(&prev) / DT;
        prev = *p;
    }

    // Per-step violation flags; horizon values are their running OR.
    let mut collide = [false; TRAJ_LEN];
    let mut off_corridor = [false; TRAJ_LEN];
    let mut wrong_way = [false; TRAJ_LEN];
    let mut crossed_stop = [false; TRAJ_LEN];
    let mut ttc_short = [false; TRAJ_LEN];
    let mut arc_pos = [0.0; TRAJ_LEN];
    let mut center_lat = [0.0; TRAJ_LEN];

    let ttc_samples = (cfg.ttc_threshold / 0.1).round() as usize;
    for (i, p) in traj.poses().iter().enumerate() {
        let t_now = (i + 1) as f64 * DT;
        let ego = ego_obb(p);
        let proj = scene.project(p.x, p.y);
        arc_pos[i] = proj.s;
        center_lat[i] = proj.lateral;

        for r in &scene.static_obstacles {
            if ego.overlaps(&r.to_obb()) {
                collide[i] = true;
            }
        }
        for a in &scene.moving_agents {
            if ego.overlaps(&a.at_time(t_now).to_obb()) {
                collide[i] = true;
            }
            // Forward sweep: ego advances along its heading at the chord
            // speed, the agent at its constant velocity.
            for j in 0..=ttc_samples {
                let tau = j as f64 * 0.1;
                let adv = speeds[i] * tau;
                let swept = super::shape::Obb {
                    cx: ego.cx + adv * p.theta.cos(),
                    cy: ego.cy + adv * p.theta.sin(),
                    ..ego
                };
                if swept.overlaps(&a.at_time(t_now + tau).to_obb()) {
                    ttc_short[i] = true;
                    break;
                }
            }
        }
        for (cx, cy) in ego.corners() {
            if scene.project(cx, cy).lateral.abs() > scene.lane_half_width {
                off_corridor[i] = true;
            }
        }
        if wrap_angle_diff(p.theta, proj.heading) > std::f64::consts::FRAC_PI_2 {
            wrong_way[i] = true;
        }
        if let Some(sl) = scene.stop_line {
            if sl.active && proj.s > sl.arc_pos {
                crossed_stop[i] = true;
            }
        }
    }

    let mut rows = [RewardVector::default(); TRAJ_LEN];
    let mut any_collide = false;
    let mut any_off = false;
    let mut any_wrong = false;
    let mut any_cross = false;
    let mut any_ttc = false;
    let mut max_lat: f64 = 0.0;
    let mut comfort_broken = false;

    for t in 0..TRAJ_LEN {
        any_collide |= collide[t];
        any_off |= off_corridor[t];
        any_wrong |= wrong_way[t];
        any_cross |= crossed_stop[t];
        any_ttc |= ttc_short[t];
        max_lat = max_lat.max(center_lat[t].abs());

        // Finite differences over the speed prefix v_1..v_{t+1}.
        if t >= 1 {
            let a = (speeds[t] - speeds[t - 1]) / DT;
            if a.abs() > cfg.max_accel {
                comfort_broken = true;
            }
        }
        if t >= 2 {
            let a1 = (speeds[t - 1] - speeds[t - 2]) / DT;
            let a2 = (speeds[t] - speeds[t - 1]) / DT;
            if ((a2 - a1) / DT).abs() > cfg.max_jerk {
                comfort_broken = true;
            }
        }

        let horizon_secs = (t + 1) as f64 * DT;
        let half = scene.lane_half_width;
        let excess = max_lat - 0.5 * half;
        rows[t] = RewardVector {
            nc: (!any_collide) as u8 as f64,
            dac: (!any_off) as u8 as f64,
            ddc: (!any_wrong) as u8 as f64,
            tlc: (!any_cross) as u8 as f64,
            ep: (arc_pos[t] / (scene.speed_limit * horizon_secs)).clamp(0.0, 1.0),
            ttc: (!any_ttc) as u8 as f64,
            lk: if excess <= 0.0 {
                1.0
            } else {
                (1.0 - excess / half).max(0.0)
            },
            hc: (!comfort_broken) as u8 as f64,
        };
    }
    HorizonRewardTable { rows }
}

/// Write one 64-value line (8 horizons x 8 dims) per trajectory.
pub fn write_label_file(path: &Path, tables: &[HorizonRewardTable]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for table in tables {
        let flat = table.flatten();
        let fields: Vec<String> = flat.iter().map(|v| format!("{v}")).collect();
        writeln!(f, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Read a label file; line order defines the trajectory index.
pub fn read_label_file(path: &Path) -> Result<Vec<HorizonRewardTable>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = trimmed
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    reason: format!("bad value: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != TRAJ_LEN * REWARD_DIMS {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected 64 values, got {}", vals.len()),
            });
        }
        for &v in &vals {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("reward {v} outside [0, 1]"),
                });
            }
        }
        let mut flat = [0.0; TRAJ_LEN * REWARD_DIMS];
        flat.copy_from_slice(&vals);
        out.push(HorizonRewardTable::from_flat(&flat));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::dynamics::rollout_dynamics;
    use crate::env::scene::{
        arc_centerline, generate_scene, Difficulty, MovingAgent, StopLine,
        DEFAULT_LANE_HALF_WIDTH,
    };
    use crate::env::shape::Rect;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn straight_traj(speed: f64) -> Trajectory {
        rollout_dynamics(&Pose::ORIGIN, &[(speed, 0.0); TRAJ_LEN]).unwrap()
    }

    #[test]
    fn nominal_drive_scores_clean() {
        let scene = Scene::straight(10.0);
        let table = simulate_rewards(&scene, &straight_traj(10.0));
        for row in &table.rows {
            assert_eq!(
                row.as_array(),
                [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
                "row {row:?}"
            );
        }
    }

    #[test]
    fn zero_motion_scores_no_progress_no_violation() {
        let scene = Scene::straight(10.0);
        let traj = Trajectory::new([Pose::ORIGIN; TRAJ_LEN], 15.0).unwrap();
        let table = simulate_rewards(&scene, &traj);
        for row in &table.rows {
            assert_eq!(row.ep, 0.0);
            assert_eq!(row.nc, 1.0);
            assert_eq!(row.dac, 1.0);
            assert_eq!(row.hc, 1.0);
            assert_eq!(row.lk, 1.0);
        }
    }

    // Independent overlap check for the collision case: sample the obstacle
    // on a fine grid and test point containment in the ego footprint.
    fn rect_touches_ego(p: &Pose, r: &Rect) -> bool {
        let (s, c) = p.theta.sin_cos();
        let n = 60;
        for i in 0..=n {
            for j in 0..=n {
                let x = r.cx - r.hx + 2.0 * r.hx * i as f64 / n as f64;
                let y = r.cy - r.hy + 2.0 * r.hy * j as f64 / n as f64;
                let u = c * (x - p.x) + s * (y - p.y);
                let v = -s * (x - p.x) + c * (y - p.y);
                if u.abs() <= 2.0 && v.abs() <= 0.9 {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn collision_at_step_three_zeroes_nc_from_horizon_three() {
        let mut scene = Scene::straight(10.0);
        let rect = Rect::new(6.9, 0.0, 0.2, 0.2);
        scene.static_obstacles.push(rect);
        let traj = straight_traj(4.0);
        // Brute-force confirmation that step 3 is the first contact.
        let first_contact = traj
            .poses()
            .iter()
            .position(|p| rect_touches_ego(p, &rect))
            .unwrap();
        assert_eq!(first_contact, 2);
        let table = simulate_rewards(&scene, &traj);
        for (t, row) in table.rows.iter().enumerate() {
            let expected = if t < 2 { 1.0 } else { 0.0 };
            assert_eq!(row.nc, expected, "horizon {}", t + 1);
        }
    }

    #[test]
    fn stop_line_only_matters_when_active() {
        let mut scene = Scene::straight(10.0);
        scene.stop_line = Some(StopLine {
            arc_pos: 10.0,
            active: true,
        });
        // Arc positions 5, 10, 15, ...: crossing is strict, so horizon 2
        // (exactly at the line) still passes.
        let table = simulate_rewards(&scene, &straight_traj(10.0));
        for (t, row) in table.rows.iter().enumerate() {
            let expected = if t < 2 { 1.0 } else { 0.0 };
            assert_eq!(row.tlc, expected, "horizon {}", t + 1);
        }
        scene.stop_line = Some(StopLine {
            arc_pos: 10.0,
            active: false,
        });
        let table = simulate_rewards(&scene, &straight_traj(10.0));
        assert!(table.rows.iter().all(|r| r.tlc == 1.0));
    }

    #[test]
    fn approaching_agent_trips_ttc_before_collision() {
        let mut scene = Scene::straight(10.0);
        scene.moving_agents.push(MovingAgent {
            rect: Rect::new(10.0, 0.0, 1.0, 0.5),
            vx: -5.0,
            vy: 0.0,
        });
        let traj = Trajectory::new([Pose::ORIGIN; TRAJ_LEN], 15.0).unwrap();
        let table = simulate_rewards(&scene, &traj);
        // Gap closes to contact at t = 1.4 s: inside the 1 s lookahead from
        // step 1 (ttc), physically overlapping from step 3 (nc).
        for (t, row) in table.rows.iter().enumerate() {
            assert_eq!(row.ttc, 0.0, "horizon {}", t + 1);
            let expected_nc = if t < 2 { 1.0 } else { 0.0 };
            assert_eq!(row.nc, expected_nc, "horizon {}", t + 1);
        }
    }

    #[test]
    fn heading_reversal_trips_ddc() {
        let scene = Scene::straight(10.0);
        let traj = rollout_dynamics(&Pose::ORIGIN, &[(0.0, 1.0); TRAJ_LEN]).unwrap();
        // Headings 0.5k: beyond pi/2 from step 4 onward.
        let table = simulate_rewards(&scene, &traj);
        for (t, row) in table.rows.iter().enumerate() {
            let expected = if t < 3 { 1.0 } else { 0.0 };
            assert_eq!(row.ddc, expected, "horizon {}", t + 1);
        }
    }

    #[test]
    fn veering_off_lane_trips_dac_and_degrades_lk() {
        let scene = Scene::straight(10.0);
        let traj = rollout_dynamics(&Pose::ORIGIN, &[(5.0, 0.4); TRAJ_LEN]).unwrap();
        let table = simulate_rewards(&scene, &traj);
        assert_eq!(table.rows[0].dac, 1.0);
        assert_eq!(table.rows[7].dac, 0.0);
        assert!(table.rows[7].lk < 1.0);
        for t in 1..TRAJ_LEN {
            assert!(table.rows[t].dac <= table.rows[t - 1].dac);
            assert!(table.rows[t].lk <= table.rows[t - 1].lk);
        }
    }

    #[test]
    fn comfort_flags_hard_accel_and_jerk() {
        let scene = Scene::straight(10.0);
        // Chord speeds 2,2,5,...: accel (5-2)/0.5 = 6 > 4, seen at horizon 3.
        let mut controls = [(5.0, 0.0); TRAJ_LEN];
        controls[0] = (2.0, 0.0);
        controls[1] = (2.0, 0.0);
        let table = simulate_rewards(&scene, &rollout_dynamics(&Pose::ORIGIN, &controls).unwrap());
        for (t, row) in table.rows.iter().enumerate() {
            let expected = if t < 2 { 1.0 } else { 0.0 };
            assert_eq!(row.hc, expected, "horizon {}", t + 1);
        }
        // Speeds 4,2,4: accels -4, +4 both at the bound (pass), jerk 16 > 8.
        let mut controls = [(4.0, 0.0); TRAJ_LEN];
        controls[1] = (2.0, 0.0);
        let table = simulate_rewards(&scene, &rollout_dynamics(&Pose::ORIGIN, &controls).unwrap());
        for (t, row) in table.rows.iter().enumerate() {
            let expected = if t < 2 { 1.0 } else { 0.0 };
            assert_eq!(row.hc, expected, "horizon {}", t + 1);
        }
        // Accels exactly at the bound alone stay comfortable.
        let mut controls = [(2.0, 0.0); TRAJ_LEN];
        for (k, c) in controls.iter_mut().enumerate() {
            c.0 = 2.0 * k as f64; // accel 4, jerk 0
        }
        let table = simulate_rewards(&scene, &rollout_dynamics(&Pose::ORIGIN, &controls).unwrap());
        assert!(table.rows.iter().all(|r| r.hc == 1.0));
    }

    #[test]
    fn ep_on_curved_lane_tracks_speed_inflation() {
        let scene = Scene::new(
            arc_centerline(0.03),
            DEFAULT_LANE_HALF_WIDTH,
            Vec::new(),
            Vec::new(),
            None,
            8.0,
        )
        .unwrap();
        let base = rollout_dynamics(&Pose::ORIGIN, &[(5.0, 0.1); TRAJ_LEN]).unwrap();
        let fast = rollout_dynamics(&Pose::ORIGIN, &[(6.0, 0.1); TRAJ_LEN]).unwrap();
        let tb = simulate_rewards(&scene, &base);
        let tf = simulate_rewards(&scene, &fast);
        // Polyline chord resolution limits exactness off the straight lane.
        for t in 0..TRAJ_LEN {
            assert!(tf.rows[t].ep >= tb.rows[t].ep - 1e-3);
        }
    }

    #[test]
    fn label_file_round_trip() {
        let mut rng = SeededRng::new(3, 7);
        let mut tables = Vec::new();
        for i in 0..12 {
            let mut scene_rng = rng.derive(i);
            let scene = generate_scene(&mut scene_rng, Difficulty::Mixed);
            let mut controls = [(0.0, 0.0); TRAJ_LEN];
            for c in controls.iter_mut() {
                *c = (rng.uniform_range(0.0, 12.0), rng.uniform_range(-1.0, 1.0));
            }
            let traj = rollout_dynamics(&Pose::ORIGIN, &controls).unwrap();
            tables.push(simulate_rewards(&scene, &traj));
        }
        let dir = std::env::temp_dir().join("dreamlane_oracle_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("labels.csv");
        write_label_file(&path, &tables).unwrap();
        let back = read_label_file(&path).unwrap();
        assert_eq!(tables, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rewards_bounded_and_prefix_monotone(
            seed in 0u64..1000,
            diff_idx in 0usize..4,
            speeds in prop::array::uniform8(0.0f64..15.0),
            yaws in prop::array::uniform8(-1.0f64..1.0),
        ) {
            let difficulty = [
                Difficulty::Empty,
                Difficulty::Static,
                Difficulty::Dynamic,
                Difficulty::Mixed,
            ][diff_idx];
            let mut rng = SeededRng::new(seed, 0);
            let scene = generate_scene(&mut rng, difficulty);
            let mut controls = [(0.0, 0.0); TRAJ_LEN];
            for k in 0..TRAJ_LEN {
                controls[k] = (speeds[k], yaws[k]);
            }
            let traj = rollout_dynamics(&Pose::ORIGIN, &controls).unwrap();
            let table = simulate_rewards(&scene, &traj);
            let mut prev: Option<RewardVector> = None;
            for row in &table.rows {
                for (d, v) in row.as_array().into_iter().enumerate() {
                    prop_assert!((0.0..=1.0).contains(&v), "dim {} = {}", DIM_NAMES[d], v);
                    // Binary dims take only the two endpoint values.
                    if d != 4 && d != 6 {
                        prop_assert!(v == 0.0 || v == 1.0);
                    }
                }
                if let Some(pr) = prev {
                    // Once a violation flag drops it stays down; lk's running
                    // max makes it non-increasing too.
                    prop_assert!(row.nc <= pr.nc);
                    prop_assert!(row.dac <= pr.dac);
                    prop_assert!(row.ddc <= pr.ddc);
                    prop_assert!(row.tlc <= pr.tlc);
                    prop_assert!(row.ttc <= pr.ttc);
                    prop_assert!(row.hc <= pr.hc);
                    prop_assert!(row.lk <= pr.lk + 1e-12);
                }
                prev = Some(*row);
            }
        }

        // On a straight lane, arc position is exactly the x coordinate and
        // scaling all speeds scales every waypoint linearly, so ep can only
        // grow (clamped at 1).
        #[test]
        fn ep_never_drops_under_speed_inflation(
            speeds in prop::array::uniform8(0.0f64..10.0),
            yaws in prop::array::uniform8(-1.0f64..1.0),
            factor in 1.0f64..1.5,
        ) {
            let scene = Scene::straight(9.0);
            let mut base = [(0.0, 0.0); TRAJ_LEN];
            let mut scaled = [(0.0, 0.0); TRAJ_LEN];
            for k in 0..TRAJ_LEN {
                base[k] = (speeds[k], yaws[k]);
                scaled[k] = (speeds[k] * factor, yaws[k]);
            }
            let tb = simulate_rewards(&scene, &rollout_dynamics(&Pose::ORIGIN, &base).unwrap());
            let ts = simulate_rewards(&scene, &rollout_dynamics(&Pose::ORIGIN, &scaled).unwrap());
            for t in 0..TRAJ_LEN {
                prop_assert!(ts.rows[t].ep >= tb.rows[t].ep - 1e-12);
            }
        }
    }
}
