//! Central-difference verification of the hand-derived gradients.

use super::layers::Mode;
use super::model::{backward, forward_batch, total_loss};
use super::params::ParamStore;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::synthgen::Sample;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Above this many trainable coordinates, a seeded random subset of this
    /// size is checked instead.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            max_coords: 4096,
            seed: 0x6772_6164,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (tensor index in canonical order, element index) of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

pub fn grad_check(
    spec: &NetworkSpec,
    params: &ParamStore,
    batch: &[&Sample],
    lambda: &[f64],
    epsilon: f64,
) -> Result<f64> {
    Ok(grad_check_with(
        spec,
        params,
        batch,
        lambda,
        epsilon,
        GradCheckOptions::default(),
    )?
    .max_relative_error)
}

pub fn grad_check_with(
    spec: &NetworkSpec,
    params: &ParamStore,
    batch: &[&Sample],
    lambda: &[f64],
    epsilon: f64,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let fwd = forward_batch(spec, params, batch, Mode::Train)?;
    let grads = backward(spec, params, batch, lambda, &fwd)?.grads;
    let grad_tensors = grads.tensors(spec);

    let mut coords = Vec::new();
    for (ti, (slot, t)) in params.tensors(spec).iter().enumerate() {
        if slot.role.trainable() {
            coords.extend((0..t.numel()).map(|k| (ti, k)));
        }
    }
    if coords.len() > opts.max_coords {
        let mut r = rng::child(opts.seed, "grad-check");
        let mut picked = rng::choose_distinct(&mut r, coords.len(), opts.max_coords);
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let numeric = par::map(&coords, |&(ti, k)| -> Result<f64> {
        let eval = |delta: f64| -> Result<f64> {
            let mut p = params.clone();
            {
                let mut ts = p.tensors_mut(spec);
                ts[ti].1.data_mut()[k] += delta;
            }
            Ok(total_loss(spec, &p, batch, lambda)?.total)
        };
        Ok((eval(epsilon)? - eval(-epsilon)?) / (2.0 * epsilon))
    });

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    for (&(ti, k), num) in coords.iter().zip(numeric) {
        let num = num?;
        let ana = grad_tensors[ti].1.data()[k];
        let err = relative_error(ana, num);
        if err > report.max_relative_error || err.is_nan() {
            report = GradCheckReport {
                max_relative_error: err,
                worst: (ti, k),
                analytic: ana,
                numeric: num,
                checked: report.checked,
            };
        }
    }
    Ok(report)
}
