//! Inference wrapper: canonical time scale and stream order around the network.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::model::MlpModel;
use crate::descriptor::{log_moments, DescriptorSet, Grid};
use crate::error::{Error, Result};

/// Network input for a pair after rescaling and ordering, plus the time factor `c`.
fn canonical_input(model: &MlpModel, a: &DescriptorSet, b: &DescriptorSet, out: &mut Vec<f64>) -> Result<f64> {
    let grid = model
        .input_grid()
        .ok_or_else(|| Error::structural("model has no input grid tag"))?;
    for d in [a, b] {
        if d.grid() != grid {
            return Err(Error::structural(format!(
                "descriptor grid {} does not match the model's {}",
                d.grid(),
                grid
            )));
        }
    }
    let c = a.mean().max(b.mean());
    let la = log_moments(a.time_scaled(1.0 / c).moments())?;
    let lb = log_moments(b.time_scaled(1.0 / c).moments())?;
    let a_first = match a.mean().partial_cmp(&b.mean()) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => lexicographic(&la, a.autocorr(), &lb, b.autocorr()) != Ordering::Greater,
    };
    let (first, second) = if a_first {
        ((&la, a.autocorr()), (&lb, b.autocorr()))
    } else {
        ((&lb, b.autocorr()), (&la, a.autocorr()))
    };
    out.clear();
    out.extend_from_slice(first.0);
    out.extend_from_slice(first.1);
    out.extend_from_slice(second.0);
    out.extend_from_slice(second.1);
    Ok(c)
}

fn lexicographic(la: &[f64], ra: &[f64], lb: &[f64], rb: &[f64]) -> Ordering {
    la.iter()
        .chain(ra)
        .zip(lb.iter().chain(rb))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Maps a network output back to the caller's time scale.
fn finish(model: &MlpModel, out: &[f64], c: f64, exact_mean: f64) -> Result<DescriptorSet> {
    let grid: Grid = model.output_grid();
    let mut moments: Vec<f64> = out[..grid.n_mom].iter().map(|l| libm::exp(*l)).collect();
    let mut f = 1.0;
    for m in moments.iter_mut() {
        f *= c;
        *m *= f;
    }
    moments[0] = exact_mean;
    let autocorr = out[grid.n_mom..].iter().map(|r| r.clamp(-1.0, 1.0)).collect();
    DescriptorSet::new(grid, moments, autocorr)
}

fn merged_mean(a: &DescriptorSet, b: &DescriptorSet) -> f64 {
    1.0 / (1.0 / a.mean() + 1.0 / b.mean())
}

/// Predicted descriptor of the superposition of two streams.
pub fn predict_superposed(model: &MlpModel, a: &DescriptorSet, b: &DescriptorSet) -> Result<DescriptorSet> {
    let mut x = Vec::with_capacity(model.n_in());
    let c = canonical_input(model, a, b, &mut x)?;
    let out = model.forward(&x)?;
    finish(model, &out, c, merged_mean(a, b))
}

/// [`predict_superposed`] for many pairs with one batched forward pass.
pub fn predict_superposed_batch(model: &MlpModel, pairs: &[(DescriptorSet, DescriptorSet)]) -> Result<Vec<DescriptorSet>> {
    let mut inputs = Vec::with_capacity(pairs.len() * model.n_in());
    let mut scales = Vec::with_capacity(pairs.len());
    let mut x = Vec::with_capacity(model.n_in());
    for (a, b) in pairs {
        scales.push(canonical_input(model, a, b, &mut x)?);
        inputs.extend_from_slice(&x);
    }
    let out = model.forward_batch(&inputs)?;
    out.chunks_exact(model.n_out())
        .zip(pairs)
        .zip(scales)
        .map(|((o, (a, b)), c)| finish(model, o, c, merged_mean(a, b)))
        .collect()
}
