//! Named parameter storage.
//!
//! Parameters are f32 matrices (vectors are single-column matrices) addressed
//! by stable [`ParamId`] handles. All forward/backward arithmetic widens to
//! f64; only the stored values and optimizer moments stay in f32.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How a new parameter is filled.
pub enum Init<'r> {
    /// Uniform in +-sqrt(6 / (fan_in + fan_out)) with fan_out = rows,
    /// fan_in = cols.
    Xavier(&'r mut SeededRng),
    Zero,
    Const(f64),
}

#[derive(Default, Clone)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter. Names must be unique; a duplicate is a
    /// construction bug, not a runtime condition.
    pub fn add(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name '{name}'"
        );
        let n = rows * cols;
        let data = match init {
            Init::Xavier(rng) => {
                let bound = (6.0 / (rows + cols) as f64).sqrt();
                (0..n)
                    .map(|_| rng.uniform_range(-bound, bound) as f32)
                    .collect()
            }
            Init::Zero => vec![0.0; n],
            Init::Const(c) => vec![c as f32; n],
        };
        let id = ParamId(self.params.len());
        self.by_name.insert(name.to_string(), id.0);
        self.params.push(Param {
            name: name.to_string(),
            rows,
            cols,
            data,
            trainable: true,
        });
        id
    }

    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize, rng: &mut SeededRng) -> ParamId {
        self.add(name, rows, cols, Init::Xavier(rng))
    }

    pub fn add_vector(&mut self, name: &str, len: usize) -> ParamId {
        self.add(name, len, 1, Init::Zero)
    }

    pub fn get(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [f32] {
        &mut self.params[id.0].data
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Freeze or unfreeze every parameter whose name starts with `prefix`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) {
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.trainable = trainable;
            }
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.params
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("parameter"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_bound_respected() {
        let mut rng = SeededRng::new(1, 0);
        let mut store = ParamStore::new();
        let id = store.add_matrix("w", 64, 32, &mut rng);
        let bound = (6.0 / 96.0_f64).sqrt() as f32;
        assert!(store.param(id).data.iter().all(|v| v.abs() <= bound));
        // Values actually spread out rather than collapsing to a constant.
        let mean: f32 =
            store.param(id).data.iter().sum::<f32>() / store.param(id).len() as f32;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn prefix_freezing() {
        let mut rng = SeededRng::new(1, 0);
        let mut store = ParamStore::new();
        let a = store.add_matrix("enc.w0", 4, 4, &mut rng);
        let b = store.add_matrix("head.w0", 4, 4, &mut rng);
        store.set_trainable_prefix("enc.", false);
        assert!(!store.param(a).trainable);
        assert!(store.param(b).trainable);
        assert_eq!(store.ids_with_prefix("enc.").count(), 1);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::new();
        store.add_vector("b", 4);
        store.add_vector("b", 4);
    }

    #[test]
    fn finite_check_catches_nan() {
        let mut store = ParamStore::new();
        let id = store.add_vector("b", 4);
        assert!(store.check_finite().is_ok());
        store.data_mut(id)[2] = f32::NAN;
        assert!(store.check_finite().is_err());
    }
}
