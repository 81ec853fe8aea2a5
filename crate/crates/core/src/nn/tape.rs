//! Tape-based reverse-mode autodiff over f64 vectors.
//!
//! Every operation appends a node holding its computed value; `backward`
//! walks the nodes in reverse, accumulating exact gradients for parameters
//! and intermediate values. The op set is deliberately small: exactly what
//! the world model, reward model, and policy losses need.
//!
//! Stop-gradients are expressed structurally: anything entering the tape via
//! [`Tape::constant`] is a leaf, so teacher targets and old-policy log
//! probabilities are detached by construction.

use super::param::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op {
    Const,
    ParamVec(ParamId),
    ParamRow(ParamId, usize),
    MatVec(ParamId, ValueId),
    AddParam(ValueId, ParamId),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    Offset(ValueId),
    Concat(Vec<ValueId>),
    Slice(ValueId, usize),
    Relu(ValueId),
    Tanh(ValueId),
    Sigmoid(ValueId),
    LogSigmoid(ValueId),
    Softmax(ValueId),
    Dot(ValueId, ValueId),
    Sum(ValueId),
    Abs(ValueId),
    Exp(ValueId),
    Clamp(ValueId, f64, f64),
    MaxPair(ValueId, ValueId),
    ScaleByElem(ValueId, ValueId, usize),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Gradients from one backward pass: dense per-parameter buffers plus the
/// per-node gradients (useful for input sensitivities in tests).
pub struct Grads {
    param: Vec<Vec<f64>>,
    node: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn param(&self, id: ParamId) -> &[f64] {
        &self.param[id.0]
    }

    pub fn wrt(&self, id: ValueId) -> Option<&[f64]> {
        self.node[id.0].as_deref()
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn value(&self, id: ValueId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: ValueId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        ValueId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> ValueId {
        self.push(value, Op::Const)
    }

    pub fn constant_scalar(&mut self, value: f64) -> ValueId {
        self.push(vec![value], Op::Const)
    }

    /// Whole parameter, flattened row-major.
    pub fn param_vec(&mut self, id: ParamId) -> ValueId {
        let value = self.store.param(id).data.iter().map(|&v| v as f64).collect();
        self.push(value, Op::ParamVec(id))
    }

    /// One row of a parameter matrix (embedding lookup).
    pub fn param_row(&mut self, id: ParamId, row: usize) -> ValueId {
        let p = self.store.param(id);
        assert!(row < p.rows, "row {row} out of range for '{}'", p.name);
        let value = p.data[row * p.cols..(row + 1) * p.cols]
            .iter()
            .map(|&v| v as f64)
            .collect();
        self.push(value, Op::ParamRow(id, row))
    }

    pub fn matvec(&mut self, w: ParamId, x: ValueId) -> ValueId {
        let p = self.store.param(w);
        let xv = &self.nodes[x.0].value;
        assert_eq!(
            p.cols,
            xv.len(),
            "matvec width mismatch for '{}': {} cols vs input {}",
            p.name,
            p.cols,
            xv.len()
        );
        let mut out = vec![0.0; p.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &p.data[i * p.cols..(i + 1) * p.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(xv.iter()) {
                acc += *a as f64 * b;
            }
            *o = acc;
        }
        self.push(out, Op::MatVec(w, x))
    }

    pub fn add_param(&mut self, x: ValueId, b: ParamId) -> ValueId {
        let p = self.store.param(b);
        let xv = &self.nodes[x.0].value;
        assert_eq!(p.len(), xv.len(), "bias width mismatch for '{}'", p.name);
        let value = xv
            .iter()
            .zip(p.data.iter())
            .map(|(a, &b)| a + b as f64)
            .collect();
        self.push(value, Op::AddParam(x, b))
    }

    fn zip(&mut self, a: ValueId, b: ValueId, f: impl Fn(f64, f64) -> f64, op: Op) -> ValueId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise width mismatch");
        let value = av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)).collect();
        self.push(value, op)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn max_pair(&mut self, a: ValueId, b: ValueId) -> ValueId {
        self.zip(a, b, f64::max, Op::MaxPair(a, b))
    }

    pub fn scale(&mut self, x: ValueId, c: f64) -> ValueId {
        let value = self.nodes[x.0].value.iter().map(|v| v * c).collect();
        self.push(value, Op::Scale(x, c))
    }

    pub fn offset(&mut self, x: ValueId, c: f64) -> ValueId {
        let value = self.nodes[x.0].value.iter().map(|v| v + c).collect();
        self.push(value, Op::Offset(x))
    }

    pub fn concat(&mut self, parts: &[ValueId]) -> ValueId {
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: ValueId, start: usize, len: usize) -> ValueId {
        let xv = &self.nodes[x.0].value;
        assert!(start + len <= xv.len(), "slice out of range");
        let value = xv[start..start + len].to_vec();
        self.push(value, Op::Slice(x, start))
    }

    fn map(&mut self, x: ValueId, f: impl Fn(f64) -> f64, op: Op) -> ValueId {
        let value = self.nodes[x.0].value.iter().map(|&v| f(v)).collect();
        self.push(value, op)
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: ValueId) -> ValueId {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: ValueId) -> ValueId {
        self.map(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    /// log(sigmoid(x)) computed as -softplus(-x), stable on both tails.
    pub fn log_sigmoid(&mut self, x: ValueId) -> ValueId {
        self.map(
            x,
            |v| {
                if v > 0.0 {
                    -((-v).exp().ln_1p())
                } else {
                    v - v.exp().ln_1p()
                }
            },
            Op::LogSigmoid(x),
        )
    }

    pub fn exp(&mut self, x: ValueId) -> ValueId {
        self.map(x, f64::exp, Op::Exp(x))
    }

    pub fn abs(&mut self, x: ValueId) -> ValueId {
        self.map(x, f64::abs, Op::Abs(x))
    }

    pub fn clamp(&mut self, x: ValueId, lo: f64, hi: f64) -> ValueId {
        self.map(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn softmax(&mut self, x: ValueId) -> ValueId {
        let xv = &self.nodes[x.0].value;
        let m = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let value = exps.iter().map(|e| e / z).collect();
        self.push(value, Op::Softmax(x))
    }

    pub fn dot(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "dot width mismatch");
        let v = av.iter().zip(bv.iter()).map(|(x, y)| x * y).sum();
        self.push(vec![v], Op::Dot(a, b))
    }

    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let v = self.nodes[x.0].value.iter().sum();
        self.push(vec![v], Op::Sum(x))
    }

    pub fn mean(&mut self, x: ValueId) -> ValueId {
        let n = self.nodes[x.0].value.len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// x scaled by element `idx` of `s` (a differentiable scalar gate).
    pub fn scale_by_elem(&mut self, x: ValueId, s: ValueId, idx: usize) -> ValueId {
        let sv = self.nodes[s.0].value[idx];
        let value = self.nodes[x.0].value.iter().map(|v| v * sv).collect();
        self.push(value, Op::ScaleByElem(x, s, idx))
    }

    /// Reverse pass from a scalar loss (seeded with gradient 1).
    pub fn backward(&self, loss: ValueId) -> Grads {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        self.backward_seeded(loss, &[1.0])
    }

    pub fn backward_seeded(&self, root: ValueId, upstream: &[f64]) -> Grads {
        assert_eq!(self.nodes[root.0].value.len(), upstream.len());
        let mut node: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        node[root.0] = Some(upstream.to_vec());
        let mut param: Vec<Vec<f64>> = (0..self.store.len())
            .map(|i| vec![0.0; self.store.param(ParamId(i)).len()])
            .collect();

        for i in (0..self.nodes.len()).rev() {
            let g = match node[i].take() {
                Some(g) => g,
                None => continue,
            };
            let nd = &self.nodes[i];
            match &nd.op {
                Op::Const => {}
                Op::ParamVec(pid) => {
                    for (pg, gi) in param[pid.0].iter_mut().zip(g.iter()) {
                        *pg += gi;
                    }
                }
                Op::ParamRow(pid, row) => {
                    let cols = self.store.param(*pid).cols;
                    for (j, gi) in g.iter().enumerate() {
                        param[pid.0][row * cols + j] += gi;
                    }
                }
                Op::MatVec(pid, x) => {
                    let p = self.store.param(*pid);
                    let xv = &self.nodes[x.0].value;
                    let gx = acc(&mut node[x.0], xv.len());
                    for (r, gi) in g.iter().enumerate() {
                        let row = &p.data[r * p.cols..(r + 1) * p.cols];
                        let grow = &mut param[pid.0][r * p.cols..(r + 1) * p.cols];
                        for j in 0..p.cols {
                            grow[j] += gi * xv[j];
                            gx[j] += gi * row[j] as f64;
                        }
                    }
                }
                Op::AddParam(x, pid) => {
                    for (pg, gi) in param[pid.0].iter_mut().zip(g.iter()) {
                        *pg += gi;
                    }
                    add_into(acc(&mut node[x.0], g.len()), &g);
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut node[a.0], g.len()), &g);
                    add_into(acc(&mut node[b.0], g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut node[a.0], g.len()), &g);
                    for (bg, gi) in acc(&mut node[b.0], g.len()).iter_mut().zip(g.iter()) {
                        *bg -= gi;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for (j, gi) in g.iter().enumerate() {
                        acc(&mut node[a.0], g.len())[j] += gi * bv[j];
                    }
                    for (j, gi) in g.iter().enumerate() {
                        acc(&mut node[b.0], g.len())[j] += gi * av[j];
                    }
                }
                Op::MaxPair(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for (j, gi) in g.iter().enumerate() {
                        if av[j] >= bv[j] {
                            acc(&mut node[a.0], g.len())[j] += gi;
                        } else {
                            acc(&mut node[b.0], g.len())[j] += gi;
                        }
                    }
                }
                Op::Scale(x, c) => {
                    for (xg, gi) in acc(&mut node[x.0], g.len()).iter_mut().zip(g.iter()) {
                        *xg += gi * c;
                    }
                }
                Op::Offset(x) => add_into(acc(&mut node[x.0], g.len()), &g),
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        add_into(acc(&mut node[p.0], len), &g[off..off + len]);
                        off += len;
                    }
                }
                Op::Slice(x, start) => {
                    let len = self.nodes[x.0].value.len();
                    let gx = acc(&mut node[x.0], len);
                    for (j, gi) in g.iter().enumerate() {
                        gx[start + j] += gi;
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        if xv[j] > 0.0 {
                            gx[j] += gi;
                        }
                    }
                }
                Op::Tanh(x) => {
                    let yv = &nd.value;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        gx[j] += gi * (1.0 - yv[j] * yv[j]);
                    }
                }
                Op::Sigmoid(x) => {
                    let yv = &nd.value;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        gx[j] += gi * yv[j] * (1.0 - yv[j]);
                    }
                }
                Op::LogSigmoid(x) => {
                    // d/dx log(sigmoid(x)) = 1 - sigmoid(x) = 1 - exp(y).
                    let yv = &nd.value;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        gx[j] += gi * (1.0 - yv[j].exp());
                    }
                }
                Op::Exp(x) => {
                    let yv = &nd.value;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        gx[j] += gi * yv[j];
                    }
                }
                Op::Abs(x) => {
                    let xv = &self.nodes[x.0].value;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        gx[j] += gi * xv[j].signum() * (xv[j] != 0.0) as u8 as f64;
                    }
                }
                Op::Clamp(x, lo, hi) => {
                    let xv = &self.nodes[x.0].value;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        if (*lo..=*hi).contains(&xv[j]) {
                            gx[j] += gi;
                        }
                    }
                }
                Op::Softmax(x) => {
                    let yv = &nd.value;
                    let inner: f64 = g.iter().zip(yv.iter()).map(|(gi, yi)| gi * yi).sum();
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        gx[j] += yv[j] * (gi - inner);
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let g0 = g[0];
                    for (j, bj) in bv.iter().enumerate() {
                        acc(&mut node[a.0], bv.len())[j] += g0 * bj;
                    }
                    for (j, aj) in av.iter().enumerate() {
                        acc(&mut node[b.0], av.len())[j] += g0 * aj;
                    }
                }
                Op::Sum(x) => {
                    let len = self.nodes[x.0].value.len();
                    let g0 = g[0];
                    for xg in acc(&mut node[x.0], len).iter_mut() {
                        *xg += g0;
                    }
                }
                Op::ScaleByElem(x, s, idx) => {
                    let sv = self.nodes[s.0].value[*idx];
                    let xv = &self.nodes[x.0].value;
                    let mut ds = 0.0;
                    for (j, gi) in g.iter().enumerate() {
                        ds += gi * xv[j];
                    }
                    let slen = self.nodes[s.0].value.len();
                    acc(&mut node[s.0], slen)[*idx] += ds;
                    let gx = acc(&mut node[x.0], g.len());
                    for (j, gi) in g.iter().enumerate() {
                        gx[j] += gi * sv;
                    }
                }
            }
            node[i] = Some(g);
        }
        Grads { param, node }
    }
}

fn acc(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}
