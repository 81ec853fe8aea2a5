//! Shortcut step grid and flow interpolants.
//!
//! Step sizes are dyadic fractions d = 2^k / K_max, so halving any d > d_min
//! stays on the grid and signal levels t = m*d tile [0, 1) exactly.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Admissible step sizes for shortcut training and sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepGrid {
    k_max: usize,
}

impl StepGrid {
    pub fn new(k_max: usize) -> Result<Self> {
        if k_max == 0 || !k_max.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "K_max must be a power of two, got {k_max}"
            )));
        }
        Ok(Self { k_max })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn d_min(&self) -> f64 {
        1.0 / self.k_max as f64
    }

    /// All admissible step sizes, ascending: {1/K_max, 2/K_max, ..., 1}.
    pub fn admissible(&self) -> Vec<f64> {
        let mut d = 1;
        let mut out = Vec::new();
        while d <= self.k_max {
            out.push(d as f64 / self.k_max as f64);
            d *= 2;
        }
        out
    }

    pub fn validate_d(&self, d: f64) -> Result<()> {
        if self.admissible().iter().any(|&a| a == d) {
            Ok(())
        } else {
            Err(Error::OffGridStep(d))
        }
    }

    /// A sampling step count is valid when 1/steps is an admissible d.
    pub fn validate_steps(&self, steps: usize) -> Result<()> {
        if steps >= 1 && steps <= self.k_max && steps.is_power_of_two() {
            Ok(())
        } else {
            Err(Error::InvalidStepCount(steps))
        }
    }
}

impl Default for StepGrid {
    fn default() -> Self {
        Self { k_max: 16 }
    }
}

/// Draw (t, d): d uniform over the admissible sizes, t uniform over
/// {0, d, 2d, ..., 1-d}.
pub fn sample_training_pair(rng: &mut SeededRng, grid: &StepGrid) -> (f64, f64) {
    let sizes = grid.admissible();
    let d = sizes[rng.index(sizes.len())];
    let slots = (1.0 / d).round() as usize;
    let t = d * rng.index(slots) as f64;
    (t, d)
}

/// One flow-matching training point: noisy interpolant between x0 and x1.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t: f64,
    pub d: f64,
    pub xt: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowSample {
    pub fn new(x0: Vec<f64>, x1: Vec<f64>, t: f64, d: f64, grid: &StepGrid) -> Result<Self> {
        if x0.len() != x1.len() {
            return Err(Error::DimMismatch {
                expected: x1.len(),
                got: x0.len(),
                context: "flow endpoints".into(),
            });
        }
        grid.validate_d(d)?;
        let ratio = t / d;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "t = {t} is not a multiple of d = {d}"
            )));
        }
        if t + d > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!("t + d = {} exceeds 1", t + d)));
        }
        let xt = x0
            .iter()
            .zip(x1.iter())
            .map(|(&a, &b)| t * b + (1.0 - t) * a)
            .collect();
        let v = x0.iter().zip(x1.iter()).map(|(&a, &b)| b - a).collect();
        Ok(Self { x0, x1, t, d, xt, v })
    }
}
