//! Sample estimates of stream descriptors.

use alloc::vec;
use alloc::vec::Vec;

use crate::descriptor::{DescriptorSet, Grid};
use crate::error::{Error, Result};

/// Sample raw moments `(1/N) Σ x^i` for `i = 1..=n`.
pub fn empirical_moments(x: &[f64], n: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::domain("no samples"));
    }
    let mut sums = vec![0.0; n];
    for v in x {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= v;
            *s += p;
        }
    }
    let len = x.len() as f64;
    Ok(sums.into_iter().map(|s| s / len).collect())
}

/// Moments and lagged power correlations of an inter-arrival sequence.
/// `ρ(k, a1, a2)` correlates `x_t^{a1}` with `x_{t-k}^{a2}`; lag covariances
/// are divided by `N`.
pub fn empirical_descriptors(x: &[f64], grid: Grid) -> Result<DescriptorSet> {
    if x.len() <= grid.n_lag {
        return Err(Error::domain("sequence is shorter than the largest lag"));
    }
    let moments = empirical_moments(x, grid.moments_needed())?;
    let n = x.len();
    let powers: Vec<Vec<f64>> = (1..=grid.n_pow).map(|a| x.iter().map(|v| libm::pow(*v, a as f64)).collect()).collect();
    let mut sd = Vec::with_capacity(grid.n_pow);
    for a in 1..=grid.n_pow {
        let mean = moments[a - 1];
        let var = moments[2 * a - 1] - mean * mean;
        if !(var > 1e-13 * moments[2 * a - 1]) {
            return Err(Error::DegenerateVariance { power: a });
        }
        sd.push(libm::sqrt(var));
    }
    let mut autocorr = Vec::with_capacity(grid.autocorr_len());
    for (k, a1, a2) in grid.cells() {
        let (p1, p2) = (&powers[a1 - 1], &powers[a2 - 1]);
        let (m1, m2) = (moments[a1 - 1], moments[a2 - 1]);
        let cov: f64 = p1[k..].iter().zip(&p2[..n - k]).map(|(u, v)| (u - m1) * (v - m2)).sum::<f64>() / n as f64;
        autocorr.push((cov / (sd[a1 - 1] * sd[a2 - 1])).clamp(-1.0, 1.0));
    }
    DescriptorSet::new(grid, moments[..grid.n_mom].to_vec(), autocorr)
}
