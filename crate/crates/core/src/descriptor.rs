//! Stream descriptors: inter-arrival moments plus a lag-power autocorrelation grid.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on `|ρ| ≤ 1` before a value counts as out of range.
pub const CORR_SLACK: f64 = 1e-9;

/// Shape of a descriptor: moment orders `1..=n_mom`, lags `1..=n_lag` and
/// powers `1..=n_pow` for both sides of the correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Grid {
    pub n_mom: usize,
    pub n_lag: usize,
    pub n_pow: usize,
}

impl Grid {
    /// The merged-stream output grid: five moments, lags and powers up to two.
    pub const TARGET: Grid = Grid {
        n_mom: 5,
        n_lag: 2,
        n_pow: 2,
    };

    pub fn new(n_mom: usize, n_lag: usize, n_pow: usize) -> Result<Grid> {
        if n_mom == 0 || n_lag == 0 || n_pow == 0 {
            return Err(Error::structural(format!(
                "grid ({n_mom}, {n_lag}, {n_pow}) must be positive in every axis"
            )));
        }
        Ok(Grid {
            n_mom,
            n_lag,
            n_pow,
        })
    }

    pub fn autocorr_len(&self) -> usize {
        self.n_lag * self.n_pow * self.n_pow
    }

    /// Length of one stream's feature block: moments then correlations.
    pub fn feature_len(&self) -> usize {
        self.n_mom + self.autocorr_len()
    }

    /// Flat position of `ρ(k, a1, a2)` (all 1-based), lexicographic in `(k, a1, a2)`.
    pub fn index(&self, k: usize, a1: usize, a2: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.n_lag && a1 >= 1 && a1 <= self.n_pow && a2 >= 1 && a2 <= self.n_pow);
        ((k - 1) * self.n_pow + (a1 - 1)) * self.n_pow + (a2 - 1)
    }

    /// Grid cells in storage order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let p = self.n_pow;
        (1..=self.n_lag).flat_map(move |k| (1..=p).flat_map(move |a1| (1..=p).map(move |a2| (k, a1, a2))))
    }

    /// Highest moment order needed to evaluate this grid.
    pub fn moments_needed(&self) -> usize {
        self.n_mom.max(2 * self.n_pow)
    }

    /// True when every cell of `other` is also a cell of `self`.
    pub fn covers(&self, other: &Grid) -> bool {
        other.n_mom <= self.n_mom && other.n_lag <= self.n_lag && other.n_pow <= self.n_pow
    }
}

impl core::fmt::Display for Grid {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({}, {}, {})", self.n_mom, self.n_lag, self.n_pow)
    }
}

/// Raw moments `m(1..=n_mom)` and the autocorrelation grid of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    grid: Grid,
    moments: Vec<f64>,
    autocorr: Vec<f64>,
}

impl DescriptorSet {
    pub fn new(grid: Grid, moments: Vec<f64>, autocorr: Vec<f64>) -> Result<Self> {
        if moments.len() != grid.n_mom {
            return Err(Error::shape(grid.n_mom, moments.len()));
        }
        if autocorr.len() != grid.autocorr_len() {
            return Err(Error::shape(grid.autocorr_len(), autocorr.len()));
        }
        if let Some((i, m)) = moments.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::domain(format!("moment m({}) = {m} is not a positive finite number", i + 1)));
        }
        if let Some(r) = autocorr.iter().find(|r| !(r.abs() <= 1.0 + CORR_SLACK)) {
            return Err(Error::domain(format!("autocorrelation {r} outside [-1, 1]")));
        }
        Ok(DescriptorSet {
            grid,
            moments,
            autocorr,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn autocorr(&self) -> &[f64] {
        &self.autocorr
    }

    /// `m(i)`, 1-based.
    pub fn moment(&self, i: usize) -> f64 {
        self.moments[i - 1]
    }

    pub fn rho(&self, k: usize, a1: usize, a2: usize) -> f64 {
        self.autocorr[self.grid.index(k, a1, a2)]
    }

    pub fn mean(&self) -> f64 {
        self.moments[0]
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.moments[0]
    }

    /// Squared coefficient of variation; needs at least two moments.
    pub fn scv(&self) -> f64 {
        self.moments[1] / (self.moments[0] * self.moments[0]) - 1.0
    }

    /// Checks `m(2a) ≥ m(a)²` for every order available.
    pub fn is_moment_consistent(&self) -> bool {
        (1..=self.grid.n_mom / 2).all(|a| self.moment(2 * a) >= self.moment(a) * self.moment(a) * (1.0 - 1e-12))
    }

    /// The same descriptor on a smaller grid.
    pub fn restrict(&self, grid: Grid) -> Result<DescriptorSet> {
        if !self.grid.covers(&grid) {
            return Err(Error::structural(format!("grid {} does not cover {}", self.grid, grid)));
        }
        let autocorr = grid.cells().map(|(k, a1, a2)| self.rho(k, a1, a2)).collect();
        Ok(DescriptorSet {
            grid,
            moments: self.moments[..grid.n_mom].to_vec(),
            autocorr,
        })
    }

    /// Descriptor of the stream with time stretched by `c`: `m(i) → c^i m(i)`,
    /// correlations unchanged.
    pub fn time_scaled(&self, c: f64) -> DescriptorSet {
        let mut f = 1.0;
        let moments = self
            .moments
            .iter()
            .map(|m| {
                f *= c;
                m * f
            })
            .collect();
        DescriptorSet {
            grid: self.grid,
            moments,
            autocorr: self.autocorr.clone(),
        }
    }

    /// Replaces moments by their natural logarithms.
    pub fn log_transform(&self) -> LogDescriptor {
        LogDescriptor {
            grid: self.grid,
            log_moments: self.moments.iter().map(|m| libm::log(*m)).collect(),
            autocorr: self.autocorr.clone(),
        }
    }
}

/// A descriptor with log moments, the form consumed by the network and
/// persisted in dataset records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDescriptor {
    pub grid: Grid,
    pub log_moments: Vec<f64>,
    pub autocorr: Vec<f64>,
}

impl LogDescriptor {
    /// Inverse of [`DescriptorSet::log_transform`].
    pub fn exp(&self) -> Result<DescriptorSet> {
        DescriptorSet::new(
            self.grid,
            self.log_moments.iter().map(|l| libm::exp(*l)).collect(),
            self.autocorr.clone(),
        )
    }

    /// Feature block: log moments followed by correlations in grid order.
    pub fn features(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_moments.iter().chain(self.autocorr.iter()).copied()
    }

    pub fn restrict(&self, grid: Grid) -> Result<LogDescriptor> {
        if !self.grid.covers(&grid) {
            return Err(Error::structural(format!("grid {} does not cover {}", self.grid, grid)));
        }
        let autocorr = grid
            .cells()
            .map(|(k, a1, a2)| self.autocorr[self.grid.index(k, a1, a2)])
            .collect();
        Ok(LogDescriptor {
            grid,
            log_moments: self.log_moments[..grid.n_mom].to_vec(),
            autocorr,
        })
    }
}

/// Log-transforms a descriptor; fails on non-positive moments.
pub fn log_transform(d: &DescriptorSet) -> LogDescriptor {
    d.log_transform()
}

/// Log-transforms raw moments, rejecting non-positive values.
pub fn log_moments(moments: &[f64]) -> Result<Vec<f64>> {
    moments
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if m > 0.0 && m.is_finite() {
                Ok(libm::log(m))
            } else {
                Err(Error::domain(format!("cannot take the log of moment m({}) = {m}", i + 1)))
            }
        })
        .collect()
}
