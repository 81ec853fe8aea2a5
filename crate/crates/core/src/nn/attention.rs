//! Single-head cross-attention with query/key/value and output projections.

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, ValueId};
use crate::rng::SeededRng;

/// One attention head of width `width`: out_q = Wo * sum_j softmax_j(
/// (Wq q . Wk kv_j) / sqrt(width)) * (Wv kv_j). Keys and values come from the
/// same sequence, so the block is equivariant to permuting that sequence.
#[derive(Debug, Clone, Copy)]
pub struct CrossAttentionBlock {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    width: usize,
}

impl CrossAttentionBlock {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, prefix: &str, width: usize) -> Self {
        Self {
            wq: store.add_matrix(&format!("{prefix}.wq"), width, width, rng),
            wk: store.add_matrix(&format!("{prefix}.wk"), width, width, rng),
            wv: store.add_matrix(&format!("{prefix}.wv"), width, width, rng),
            wo: store.add_matrix(&format!("{prefix}.wo"), width, width, rng),
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.wq, self.wk, self.wv, self.wo]
    }

    /// Attend each query over the key/value sequence.
    pub fn forward(&self, tape: &mut Tape, queries: &[ValueId], kv: &[ValueId]) -> Vec<ValueId> {
        assert!(!kv.is_empty(), "attention needs at least one key");
        let keys: Vec<ValueId> = kv.iter().map(|&x| tape.matvec(self.wk, x)).collect();
        let vals: Vec<ValueId> = kv.iter().map(|&x| tape.matvec(self.wv, x)).collect();
        let scale = 1.0 / (self.width as f64).sqrt();
        queries
            .iter()
            .map(|&query| {
                let q = tape.matvec(self.wq, query);
                let scores: Vec<ValueId> = keys
                    .iter()
                    .map(|&k| {
                        let d = tape.dot(q, k);
                        tape.scale(d, scale)
                    })
                    .collect();
                let stacked = tape.concat(&scores);
                let weights = tape.softmax(stacked);
                let mut mixed = tape.scale_by_elem(vals[0], weights, 0);
                for (j, &v) in vals.iter().enumerate().skip(1) {
                    let term = tape.scale_by_elem(v, weights, j);
                    mixed = tape.add(mixed, term);
                }
                tape.matvec(self.wo, mixed)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vecs(rng: &mut SeededRng, n: usize, width: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| rng.normal_vec(width)).collect()
    }

    #[test]
    fn output_is_permutation_equivariant_in_kv() {
        let mut rng = SeededRng::new(31, 0);
        let mut store = ParamStore::new();
        let block = CrossAttentionBlock::new(&mut store, &mut rng, "attn", 8);
        let qs = random_vecs(&mut rng, 3, 8);
        let kvs = random_vecs(&mut rng, 5, 8);
        let perm = [4, 2, 0, 3, 1];

        let mut tape = Tape::new(&store);
        let q_ids: Vec<_> = qs.iter().map(|v| tape.constant(v.clone())).collect();
        let kv_ids: Vec<_> = kvs.iter().map(|v| tape.constant(v.clone())).collect();
        let out = block.forward(&mut tape, &q_ids, &kv_ids);
        let kv_perm: Vec<_> = perm.iter().map(|&i| kv_ids[i]).collect();
        let out_perm = block.forward(&mut tape, &q_ids, &kv_perm);

        for (a, b) in out.iter().zip(out_perm.iter()) {
            for (x, y) in tape.value(*a).iter().zip(tape.value(*b).iter()) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn single_kv_collapses_to_projected_value() {
        // With one key the softmax weight is exactly 1, so the output is
        // Wo * Wv * kv regardless of the query.
        let mut rng = SeededRng::new(32, 0);
        let mut store = ParamStore::new();
        let block = CrossAttentionBlock::new(&mut store, &mut rng, "attn", 6);
        let kv = rng.normal_vec(6);
        let mut tape = Tape::new(&store);
        let q1 = tape.constant(rng.normal_vec(6));
        let q2 = tape.constant(rng.normal_vec(6));
        let kv_id = tape.constant(kv.clone());
        let o1 = block.forward(&mut tape, &[q1], &[kv_id])[0];
        let o2 = block.forward(&mut tape, &[q2], &[kv_id])[0];
        for (x, y) in tape.value(o1).iter().zip(tape.value(o2).iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let v = tape.matvec(block.wv, kv_id);
        let direct = tape.matvec(block.wo, v);
        for (x, y) in tape.value(o1).iter().zip(tape.value(direct).iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
