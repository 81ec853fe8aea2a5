//! Log-fused scalar rewards: multiplicative (log-sum) safety gating plus a
//! log of the convex task combination, then dense aggregation over horizons.

use crate::env::{HorizonRewardTable, RewardVector, SAFETY_DIMS, TASK_DIMS};
use crate::error::{Error, Result};
use crate::geom::TRAJ_LEN;

/// Rewards are floored here before the log so hard zeros stay finite.
pub const EPS_FLOOR: f64 = 1e-6;

/// How the safety dimensions enter the fused log-reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SafetyFusion {
    /// log(max(r, floor)): violations approach log(floor), dominating any
    /// task-term variation.
    #[default]
    LogFloor,
    /// log(sigmoid(r)): bounded ablation variant; violations cost at most
    /// log sigmoid(0) = -ln 2.
    LogSigmoid,
}

fn validate_weights(w_safe: &[f64; 4], w_task: &[f64; 4]) -> Result<()> {
    if w_safe.iter().chain(w_task.iter()).any(|&w| w < 0.0) {
        return Err(Error::InvalidArgument("negative fusion weight".into()));
    }
    let task_sum: f64 = w_task.iter().sum();
    if (task_sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "task weights sum to {task_sum}, expected 1"
        )));
    }
    Ok(())
}

/// Fuses one reward row into a scalar:
/// sum_i w_i log(max(r_i, floor)) + log(max(sum_j w_j r_j, floor)),
/// safety dims (nc, dac, ddc, tlc), task dims (ep, ttc, lk, hc).
pub fn fuse_reward(
    r: &RewardVector,
    w_safe: &[f64; 4],
    w_task: &[f64; 4],
    fusion: SafetyFusion,
) -> Result<f64> {
    validate_weights(w_safe, w_task)?;
    let vals = r.as_array();
    let safety: f64 = SAFETY_DIMS
        .iter()
        .zip(w_safe.iter())
        .map(|(&dim, &w)| {
            let ri = vals[dim];
            let term = match fusion {
                SafetyFusion::LogFloor => ri.max(EPS_FLOOR).ln(),
                SafetyFusion::LogSigmoid => -(-ri).exp().ln_1p(),
            };
            w * term
        })
        .sum();
    let task_sum: f64 = TASK_DIMS
        .iter()
        .zip(w_task.iter())
        .map(|(&dim, &w)| w * vals[dim])
        .sum();
    Ok(safety + task_sum.max(EPS_FLOOR).ln())
}

/// Weighted sum of per-horizon fused rewards; `w_t` must be a convex
/// combination (default uniform 1/8).
pub fn dense_final_reward(
    table: &HorizonRewardTable,
    w_t: &[f64; TRAJ_LEN],
    w_safe: &[f64; 4],
    w_task: &[f64; 4],
    fusion: SafetyFusion,
) -> Result<f64> {
    if w_t.iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidArgument("negative temporal weight".into()));
    }
    let sum: f64 = w_t.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "temporal weights sum to {sum}, expected 1"
        )));
    }
    let mut out = 0.0;
    for (row, &w) in table.rows.iter().zip(w_t.iter()) {
        out += w * fuse_reward(row, w_safe, w_task, fusion)?;
    }
    Ok(out)
}

pub const UNIFORM_W_T: [f64; TRAJ_LEN] = [1.0 / TRAJ_LEN as f64; TRAJ_LEN];
pub const UNIFORM_W_SAFE: [f64; 4] = [1.0; 4];
pub const UNIFORM_W_TASK: [f64; 4] = [0.25; 4];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::REWARD_DIMS;
    use proptest::prelude::*;

    fn table_of(rows: [[f64; REWARD_DIMS]; TRAJ_LEN]) -> HorizonRewardTable {
        HorizonRewardTable {
            rows: rows.map(RewardVector::from_array),
        }
    }

    #[test]
    fn all_ones_fuse_to_zero() {
        let r = RewardVector::from_array([1.0; REWARD_DIMS]);
        let f = fuse_reward(&r, &UNIFORM_W_SAFE, &UNIFORM_W_TASK, SafetyFusion::LogFloor).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn collision_hits_the_floor_and_dominates_task_spread() {
        let mut vals = [1.0; REWARD_DIMS];
        vals[0] = 0.0;
        let r = RewardVector::from_array(vals);
        let f = fuse_reward(&r, &UNIFORM_W_SAFE, &UNIFORM_W_TASK, SafetyFusion::LogFloor).unwrap();
        assert!((f - EPS_FLOOR.ln()).abs() < 1e-12);

        // Worst task row without violations stays far above the floor.
        let sparse_task = RewardVector::from_array([1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let worst_safe = fuse_reward(
            &sparse_task,
            &UNIFORM_W_SAFE,
            &UNIFORM_W_TASK,
            SafetyFusion::LogFloor,
        )
        .unwrap();
        assert!((worst_safe - 0.25f64.ln()).abs() < 1e-12);
        assert!(f < worst_safe - 10.0);
    }

    #[test]
    fn half_ep_example() {
        let r = RewardVector::from_array([1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 1.0]);
        let f = fuse_reward(&r, &UNIFORM_W_SAFE, &UNIFORM_W_TASK, SafetyFusion::LogFloor).unwrap();
        assert!((f - 0.875f64.ln()).abs() < 1e-12);
        assert!((f - -0.1335).abs() < 1e-4);
    }

    #[test]
    fn log_sigmoid_variant_is_bounded() {
        let mut vals = [1.0; REWARD_DIMS];
        vals[0] = 0.0;
        let r = RewardVector::from_array(vals);
        let f = fuse_reward(&r, &UNIFORM_W_SAFE, &UNIFORM_W_TASK, SafetyFusion::LogSigmoid).unwrap();
        // Violated dim costs ln sigmoid(0), intact dims ln sigmoid(1).
        let expect = (0.5f64).ln() + 3.0 * (1.0 / (1.0 + (-1.0f64).exp())).ln();
        assert!((f - expect).abs() < 1e-12);
        assert!(f > -3.0);
    }

    #[test]
    fn weight_validation() {
        let r = RewardVector::from_array([1.0; REWARD_DIMS]);
        assert!(fuse_reward(&r, &[-1.0, 1.0, 1.0, 1.0], &UNIFORM_W_TASK, SafetyFusion::LogFloor)
            .is_err());
        assert!(fuse_reward(&r, &UNIFORM_W_SAFE, &[0.3; 4], SafetyFusion::LogFloor).is_err());
    }

    #[test]
    fn identical_rows_collapse_to_single_fusion() {
        let row = [1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 1.0];
        let table = table_of([row; TRAJ_LEN]);
        let dense = dense_final_reward(
            &table,
            &UNIFORM_W_T,
            &UNIFORM_W_SAFE,
            &UNIFORM_W_TASK,
            SafetyFusion::LogFloor,
        )
        .unwrap();
        let single = fuse_reward(
            &RewardVector::from_array(row),
            &UNIFORM_W_SAFE,
            &UNIFORM_W_TASK,
            SafetyFusion::LogFloor,
        )
        .unwrap();
        assert!((dense - single).abs() < 1e-12);
    }

    #[test]
    fn one_hot_temporal_weight_selects_a_row() {
        let mut rows = [[1.0; REWARD_DIMS]; TRAJ_LEN];
        rows[TRAJ_LEN - 1] = [1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 1.0];
        let table = table_of(rows);
        let mut w_t = [0.0; TRAJ_LEN];
        w_t[TRAJ_LEN - 1] = 1.0;
        let dense = dense_final_reward(
            &table,
            &w_t,
            &UNIFORM_W_SAFE,
            &UNIFORM_W_TASK,
            SafetyFusion::LogFloor,
        )
        .unwrap();
        assert!((dense - 0.875f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn collision_from_horizon_five_costs_half_the_floor_log() {
        let clean = table_of([[1.0; REWARD_DIMS]; TRAJ_LEN]);
        let mut rows = [[1.0; REWARD_DIMS]; TRAJ_LEN];
        for row in rows.iter_mut().skip(4) {
            row[0] = 0.0;
        }
        let crashed = table_of(rows);
        let args = (&UNIFORM_W_SAFE, &UNIFORM_W_TASK, SafetyFusion::LogFloor);
        let a = dense_final_reward(&clean, &UNIFORM_W_T, args.0, args.1, args.2).unwrap();
        let b = dense_final_reward(&crashed, &UNIFORM_W_T, args.0, args.1, args.2).unwrap();
        let expect_gap = 0.5 * EPS_FLOOR.ln().abs();
        assert!(
            a - b >= expect_gap - 1e-9,
            "gap {} vs expected {expect_gap}",
            a - b
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Fused reward of normalized inputs never exceeds 0: a log of a
        /// convex combination of values <= 1 plus non-positive safety terms.
        #[test]
        fn fused_reward_is_non_positive(vals in prop::array::uniform8(0.0f64..=1.0)) {
            let r = RewardVector::from_array(vals);
            let f = fuse_reward(&r, &UNIFORM_W_SAFE, &UNIFORM_W_TASK, SafetyFusion::LogFloor)
                .unwrap();
            prop_assert!(f <= 1e-12, "fused {f}");
            prop_assert!(f.is_finite());
        }
    }
}
