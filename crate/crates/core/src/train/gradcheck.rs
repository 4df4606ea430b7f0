//! Central finite-difference checks of the analytic gradient.
//!
//! A ReLU head is not differentiable where a pre-activation is zero. A
//! probe whose `±ε` step moves some pre-activation across zero measures a
//! secant over the kink rather than the derivative, so such coordinates are
//! skipped and counted.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{batch_gradient, nll_loss, Dataset};
use crate::error::Result;
use crate::model::Model;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub coords: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
    /// Coordinate with the largest error.
    pub worst: Option<usize>,
    /// Candidates passed over because the probe crossed a ReLU kink.
    pub kinks_skipped: usize,
}

/// `(L(θ + εe_i) − L(θ − εe_i)) / 2ε` for each coordinate, dropout off.
pub fn numeric_gradient(model: &Model, data: &Dataset, cases: &[usize], coords: &[usize], eps: f64) -> Result<Vec<f64>> {
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + eps;
        let up = nll_loss(&probe, data, cases)?;
        probe.params_mut()[i] = orig - eps;
        let down = nll_loss(&probe, data, cases)?;
        probe.params_mut()[i] = orig;
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// Compares a full analytic gradient with numeric values at `coords`.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], coords: &[usize]) -> GradCheck {
    let picked: Vec<f64> = coords.iter().map(|&i| analytic[i]).collect();
    let mut max_relative_error = 0.0;
    let mut worst = None;
    for ((&c, &a), &n) in coords.iter().zip(&picked).zip(numeric) {
        let e = relative_error(a, n);
        if e > max_relative_error || e.is_nan() {
            max_relative_error = e;
            worst = Some(c);
        }
    }
    GradCheck {
        coords: coords.to_vec(),
        analytic: picked,
        numeric: numeric.to_vec(),
        max_relative_error,
        worst,
        kinks_skipped: 0,
    }
}

/// Whether moving coordinate `coord` by `±eps` flips any hidden unit on
/// any of the cases.
pub fn crosses_kink(model: &Model, data: &Dataset, cases: &[usize], coord: usize, eps: f64) -> Result<bool> {
    let mut up = model.clone();
    up.params_mut()[coord] += eps;
    let mut down = model.clone();
    down.params_mut()[coord] -= eps;
    for &i in cases {
        let input = &data.inputs[i];
        if up.activation_pattern(input)? != down.activation_pattern(input)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Every coordinate in seeded random order, those with a non-zero analytic
/// gradient first. The embedding rows of unseen tokens have an identically
/// zero gradient and would make the check vacuous.
fn candidate_order(analytic: &[f64], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut live, mut rest): (Vec<usize>, Vec<usize>) = (0..analytic.len()).partition(|&i| analytic[i] != 0.0);
    live.shuffle(&mut rng);
    rest.shuffle(&mut rng);
    live.extend(rest);
    live
}

/// Up to `n` coordinates, preferring ones the batch actually touches.
pub fn live_coordinates(analytic: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let mut picked = candidate_order(analytic, seed);
    picked.truncate(n);
    picked.sort_unstable();
    picked
}

/// Max relative error of the analytic gradient of `nll_loss` over
/// `n_coords` sampled coordinates at which the loss is smooth within `±eps`.
pub fn gradient_check(
    model: &Model,
    data: &Dataset,
    cases: &[usize],
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheck> {
    let (_, analytic, _) = batch_gradient(model, data, cases, None)?;
    let mut coords = Vec::with_capacity(n_coords);
    let mut kinks_skipped = 0;
    for c in candidate_order(&analytic, seed) {
        if coords.len() == n_coords {
            break;
        }
        if crosses_kink(model, data, cases, c, eps)? {
            kinks_skipped += 1;
        } else {
            coords.push(c);
        }
    }
    coords.sort_unstable();
    let numeric = numeric_gradient(model, data, cases, &coords, eps)?;
    let mut check = compare_gradients(&analytic, &numeric, &coords);
    check.kinks_skipped = kinks_skipped;
    Ok(check)
}
