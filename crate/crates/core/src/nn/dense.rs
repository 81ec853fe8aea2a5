//! Fully connected stacks over the tape.

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn apply(&self, tape: &mut Tape, x: ValueId) -> ValueId {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DenseLayer {
    w: ParamId,
    b: ParamId,
    act: Activation,
}

/// Affine + activation stack. Layer widths are fixed at construction, so
/// inner widths always chain correctly; only the runtime input can mismatch.
#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
    widths: Vec<usize>,
}

impl DenseNet {
    /// `widths` = [in, hidden..., out]; `acts` has one entry per layer.
    /// Parameters are registered as `{prefix}.w{i}` / `{prefix}.b{i}`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut SeededRng,
        prefix: &str,
        widths: &[usize],
        acts: &[Activation],
    ) -> Self {
        assert!(widths.len() >= 2, "need at least one layer");
        assert_eq!(acts.len(), widths.len() - 1, "one activation per layer");
        let layers = acts
            .iter()
            .enumerate()
            .map(|(i, &act)| DenseLayer {
                w: store.add_matrix(&format!("{prefix}.w{i}"), widths[i + 1], widths[i], rng),
                b: store.add_vector(&format!("{prefix}.b{i}"), widths[i + 1]),
                act,
            })
            .collect();
        Self {
            layers,
            widths: widths.to_vec(),
        }
    }

    pub fn in_width(&self) -> usize {
        self.widths[0]
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn forward(&self, tape: &mut Tape, input: ValueId) -> Result<ValueId> {
        let got = tape.value(input).len();
        if got != self.in_width() {
            return Err(Error::DimMismatch {
                expected: self.in_width(),
                got,
                context: "dense input".into(),
            });
        }
        let mut h = input;
        for layer in &self.layers {
            h = tape.matvec(layer.w, h);
            h = tape.add_param(h, layer.b);
            h = layer.act.apply(tape, h);
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param::Init;

    fn identity_layer(store: &mut ParamStore, n: usize, act: Activation) -> DenseNet {
        let w = store.add(&format!("id{act:?}.w0"), n, n, Init::Zero);
        for i in 0..n {
            store.data_mut(w)[i * n + i] = 1.0;
        }
        let b = store.add(&format!("id{act:?}.b0"), n, 1, Init::Zero);
        DenseNet {
            layers: vec![DenseLayer { w, b, act }],
            widths: vec![n, n],
        }
    }

    #[test]
    fn identity_net_passes_input_through() {
        let mut store = ParamStore::new();
        let net = identity_layer(&mut store, 4, Activation::Identity);
        let mut tape = Tape::new(&store);
        let x = tape.constant(vec![0.5, -2.0, 3.0, 0.0]);
        let y = net.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y), &[0.5, -2.0, 3.0, 0.0]);
    }

    #[test]
    fn relu_kills_negative_input() {
        let mut store = ParamStore::new();
        let net = identity_layer(&mut store, 3, Activation::Relu);
        let mut tape = Tape::new(&store);
        let x = tape.constant(vec![-1.0, -0.5, -3.0]);
        let y = net.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_layer_net_matches_hand_rolled_reference() {
        let mut rng = SeededRng::new(21, 0);
        let mut store = ParamStore::new();
        let net = DenseNet::new(
            &mut store,
            &mut rng,
            "ref",
            &[3, 4, 2],
            &[Activation::Tanh, Activation::Identity],
        );
        let input = [0.3, -1.2, 0.8];
        let mut tape = Tape::new(&store);
        let x = tape.constant(input.to_vec());
        let y = net.forward(&mut tape, x).unwrap();

        // Straight-line reference with explicit loops.
        let w0 = &store.param(store.get("ref.w0").unwrap()).data;
        let b0 = &store.param(store.get("ref.b0").unwrap()).data;
        let w1 = &store.param(store.get("ref.w1").unwrap()).data;
        let b1 = &store.param(store.get("ref.b1").unwrap()).data;
        let mut h = [0.0f64; 4];
        for i in 0..4 {
            let mut acc = b0[i] as f64;
            for j in 0..3 {
                acc += w0[i * 3 + j] as f64 * input[j];
            }
            h[i] = acc.tanh();
        }
        let mut out = [0.0f64; 2];
        for i in 0..2 {
            let mut acc = b1[i] as f64;
            for j in 0..4 {
                acc += w1[i * 4 + j] as f64 * h[j];
            }
            out[i] = acc;
        }
        for (a, b) in tape.value(y).iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut rng = SeededRng::new(2, 0);
        let mut store = ParamStore::new();
        let net = DenseNet::new(&mut store, &mut rng, "m", &[3, 2], &[Activation::Identity]);
        let mut tape = Tape::new(&store);
        let x = tape.constant(vec![1.0, 2.0]);
        assert!(net.forward(&mut tape, x).is_err());
    }
}
