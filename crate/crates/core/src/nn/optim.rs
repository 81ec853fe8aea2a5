//! Adaptive-moment optimizer with decoupled weight decay.

use super::param::{ParamId, ParamStore};
use super::tape::Grads;
use crate::error::{Error, Result};

/// AdamW. Moments are stored in f32 to match parameter storage; the update
/// arithmetic runs in f64. Frozen parameters are skipped entirely.
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step_count: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let m = store.ids().map(|id| vec![0.0; store.param(id).len()]).collect();
        let v = store.ids().map(|id| vec![0.0; store.param(id).len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step_count: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over every trainable parameter. Non-finite gradients or
    /// parameters abort with an error rather than poisoning the run.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            if !store.param(id).trainable {
                continue;
            }
            let g = grads.param(id);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let data = store.data_mut(id);
            for i in 0..data.len() {
                let gi = g[i];
                let mi = self.beta1 * m[i] as f64 + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v[i] as f64 + (1.0 - self.beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let p = data[i] as f64;
                let next = p - self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * p);
                if !next.is_finite() {
                    return Err(Error::NonFinite("parameter update"));
                }
                data[i] = next as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::Init;
    use crate::nn::tape::Tape;

    #[test]
    fn zero_gradient_zero_decay_leaves_params_untouched() {
        let mut store = ParamStore::new();
        let id = store.add("w", 3, 1, Init::Const(0.7));
        let before = store.param(id).data.clone();
        let mut opt = AdamW::new(&store, 1e-2, 0.0);
        let tape = Tape::new(&store);
        // Zero-seeded backward of an empty tape gives all-zero grads.
        let grads = {
            let mut t2 = Tape::new(&store);
            let c = t2.constant_scalar(0.0);
            t2.backward(c)
        };
        drop(tape);
        for _ in 0..5 {
            opt.step(&mut store, &grads).unwrap();
        }
        assert_eq!(store.param(id).data, before);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", 2, 1, Init::Zero);
        let mut opt = AdamW::new(&store, 1e-2, 0.0);
        for _ in 0..50 {
            let mut tape = Tape::new(&store);
            let w = tape.param_vec(id);
            let dir = tape.constant(vec![1.0, -2.0]);
            let loss = tape.dot(w, dir);
            let grads = tape.backward(loss);
            opt.step(&mut store, &grads).unwrap();
        }
        // Positive gradient component pushes the weight down and vice versa.
        assert!(store.param(id).data[0] < 0.0);
        assert!(store.param(id).data[1] > 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut store = ParamStore::new();
        let id = store.add("w", 2, 1, Init::Const(1.0));
        let mut opt = AdamW::new(&store, 1e-2, 0.0);
        for _ in 0..2000 {
            let mut tape = Tape::new(&store);
            let w = tape.param_vec(id);
            let sq = tape.mul(w, w);
            let loss = tape.sum(sq);
            let grads = tape.backward(loss);
            opt.step(&mut store, &grads).unwrap();
        }
        let norm = store
            .param(id)
            .data
            .iter()
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(norm < 1e-3, "final norm {norm}");
    }

    #[test]
    fn nan_gradient_is_a_hard_error() {
        let mut store = ParamStore::new();
        let id = store.add("w", 2, 1, Init::Const(1.0));
        let mut opt = AdamW::new(&store, 1e-2, 0.0);
        let mut tape = Tape::new(&store);
        let w = tape.param_vec(id);
        let bad = tape.constant(vec![f64::NAN, 1.0]);
        let loss = tape.dot(w, bad);
        let grads = tape.backward(loss);
        assert!(matches!(
            opt.step(&mut store, &grads),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn frozen_params_do_not_move() {
        let mut store = ParamStore::new();
        let id = store.add("w", 2, 1, Init::Const(0.5));
        store.set_trainable(id, false);
        let before = store.param(id).data.clone();
        let mut opt = AdamW::new(&store, 1e-1, 0.1);
        let mut tape = Tape::new(&store);
        let w = tape.param_vec(id);
        let loss = tape.sum(w);
        let grads = tape.backward(loss);
        opt.step(&mut store, &grads).unwrap();
        assert_eq!(store.param(id).data, before);
    }
}
