//! Finite-difference gradient oracle, shared by every module that builds a
//! loss on the tape.
//!
//! Parameters are stored in f32, so adding a nominal step h and reading back
//! the cell does not recover h exactly. The quotient therefore divides by the
//! actually-applied difference fl(p+h) - fl(p-h), computed exactly in f64,
//! which removes the step-representation error and leaves only the O(h^2)
//! central-difference truncation term.

use super::param::{ParamId, ParamStore};
use super::tape::Grads;
use crate::rng::SeededRng;

/// Compare analytic gradients against central finite differences (h = 1e-4)
/// on up to `n_coords` randomly chosen coordinates of `ids`, returning the
/// worst relative error. Coordinates with analytic gradient below 1e-3 of
/// the largest one are excluded: their FD quotient is dominated by
/// truncation noise rather than signal.
pub fn max_rel_err_fd(
    store: &mut ParamStore,
    ids: &[ParamId],
    analytic: &Grads,
    rng: &mut SeededRng,
    n_coords: usize,
    loss_fn: &mut dyn FnMut(&ParamStore) -> f64,
) -> f64 {
    let mut candidates: Vec<(ParamId, usize, f64)> = Vec::new();
    let mut gmax: f64 = 0.0;
    for &id in ids {
        for (idx, &g) in analytic.param(id).iter().enumerate() {
            gmax = gmax.max(g.abs());
            candidates.push((id, idx, g));
        }
    }
    if gmax == 0.0 {
        return 0.0;
    }
    candidates.retain(|&(_, _, g)| g.abs() >= 1e-3 * gmax);
    // Fisher-Yates prefix shuffle to pick coordinates without replacement.
    let picks = n_coords.min(candidates.len());
    for i in 0..picks {
        let j = i + rng.index(candidates.len() - i);
        candidates.swap(i, j);
    }

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for &(id, idx, g) in candidates.iter().take(picks) {
        let p0 = store.param(id).data[idx];
        let plus = (p0 as f64 + h) as f32;
        let minus = (p0 as f64 - h) as f32;
        let delta = plus as f64 - minus as f64;
        if delta == 0.0 {
            continue;
        }
        store.data_mut(id)[idx] = plus;
        let l_plus = loss_fn(store);
        store.data_mut(id)[idx] = minus;
        let l_minus = loss_fn(store);
        store.data_mut(id)[idx] = p0;
        let fd = (l_plus - l_minus) / delta;
        let rel = (fd - g).abs() / g.abs().max(fd.abs());
        worst = worst.max(rel);
    }
    worst
}
