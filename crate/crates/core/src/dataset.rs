//! Labeled superposition samples: two input descriptors and the exact
//! descriptor of their merged stream.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::descriptor::{DescriptorSet, Grid, LogDescriptor};
use crate::error::{Error, Result};
use crate::generators::{sample_map_pair_with, Method, SamplerConfig};
use crate::map::{MarkovArrivalProcess, DEFAULT_DIM_CAP};
use crate::rng::SeedStream;

/// Samples are resampled with fresh sub-seeds at most this many times.
pub const MAX_RETRIES: u32 = 100;

/// Tolerance on the unit mean of the first input.
pub const UNIT_MEAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSplit {
    Train,
    Val,
    Test,
}

impl DatasetSplit {
    pub const ALL: [DatasetSplit; 3] = [DatasetSplit::Train, DatasetSplit::Val, DatasetSplit::Test];

    pub fn name(&self) -> &'static str {
        match self {
            DatasetSplit::Train => "train",
            DatasetSplit::Val => "val",
            DatasetSplit::Test => "test",
        }
    }

    /// RNG stream of sample `index`; splits occupy disjoint ranges of width `2^40`.
    pub fn stream_id(&self, index: u64) -> u64 {
        assert!(index < 1 << 40, "sample index {index} exceeds the split range");
        ((*self as u64) << 40) + index
    }
}

/// Provenance of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub split: DatasetSplit,
    pub index: u64,
    pub stream: u64,
    pub retries: u32,
    pub dims: [usize; 2],
    pub methods: [Method; 2],
    /// Mean of the second stream; the first has mean 1.
    pub mean_ratio: f64,
}

/// Inputs on a configurable grid and the merged target on [`Grid::TARGET`],
/// all with log moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub meta: SampleMeta,
    pub input_a: LogDescriptor,
    pub input_b: LogDescriptor,
    pub target: LogDescriptor,
}

impl LabeledSample {
    /// Concatenated network input: stream a block then stream b block.
    pub fn input_features(&self) -> Vec<f64> {
        self.input_a.features().chain(self.input_b.features()).collect()
    }

    pub fn target_features(&self) -> Vec<f64> {
        self.target.features().collect()
    }

    /// Same sample with inputs restricted to a smaller grid; the target is shared.
    pub fn restrict_inputs(&self, grid: Grid) -> Result<LabeledSample> {
        Ok(LabeledSample {
            meta: self.meta.clone(),
            input_a: self.input_a.restrict(grid)?,
            input_b: self.input_b.restrict(grid)?,
            target: self.target.clone(),
        })
    }

    /// Checks the unit-mean convention, rate additivity and correlation bounds.
    pub fn check_invariants(&self) -> Result<()> {
        let ma = libm::exp(self.input_a.log_moments[0]);
        let mb = libm::exp(self.input_b.log_moments[0]);
        let ms = libm::exp(self.target.log_moments[0]);
        if (ma - 1.0).abs() > UNIT_MEAN_TOL {
            return Err(Error::domain(format!("first input has mean {ma}, expected 1")));
        }
        if !(mb > 0.0 && mb <= 1.0 + UNIT_MEAN_TOL) {
            return Err(Error::domain(format!("second input has mean {mb}, expected (0, 1]")));
        }
        let rate = 1.0 / ma + 1.0 / mb;
        if (1.0 / ms - rate).abs() > 1e-9 * rate {
            return Err(Error::domain(format!("merged rate {} differs from {}", 1.0 / ms, rate)));
        }
        for d in [&self.input_a, &self.input_b, &self.target] {
            if d.autocorr.iter().any(|r| !(r.abs() <= 1.0)) {
                return Err(Error::domain("stored autocorrelation outside [-1, 1]"));
            }
        }
        if self.target.grid != Grid::TARGET {
            return Err(Error::structural(format!("target grid {} is not {}", self.target.grid, Grid::TARGET)));
        }
        Ok(())
    }
}

/// Exact descriptors of two streams and of their superposition.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLabel {
    pub input_a: DescriptorSet,
    pub input_b: DescriptorSet,
    pub target: DescriptorSet,
}

/// Labels a pair whose first stream has unit mean.
pub fn label_pair(a: &MarkovArrivalProcess, b: &MarkovArrivalProcess, grid: Grid) -> Result<PairLabel> {
    label_pair_with_cap(a, b, grid, DEFAULT_DIM_CAP)
}

pub fn label_pair_with_cap(
    a: &MarkovArrivalProcess,
    b: &MarkovArrivalProcess,
    grid: Grid,
    cap: usize,
) -> Result<PairLabel> {
    let merged = a.superpose_with_cap(b, cap)?;
    let input_a = a.descriptor_set(grid)?;
    if (input_a.mean() - 1.0).abs() > UNIT_MEAN_TOL {
        return Err(Error::domain(format!("first stream has mean {}, expected 1", input_a.mean())));
    }
    let input_b = b.descriptor_set(grid)?;
    let target = merged.descriptor_set(Grid::TARGET)?;
    Ok(PairLabel {
        input_a,
        input_b,
        target,
    })
}

/// Draws and labels sample `index` of `split`. Failed draws are retried on
/// re-keyed streams up to [`MAX_RETRIES`] times.
pub fn generate_sample(
    seeds: &SeedStream,
    split: DatasetSplit,
    index: u64,
    sampler: &SamplerConfig,
    grid: Grid,
) -> Result<LabeledSample> {
    let stream = split.stream_id(index);
    let mut last = Error::domain("no attempt made");
    for retry in 0..=MAX_RETRIES {
        let mut rng = seeds.rng_retry(stream, retry);
        let attempt = sample_map_pair_with(&mut rng, sampler).and_then(|pair| {
            let label = label_pair(&pair.first, &pair.second, grid)?;
            Ok(LabeledSample {
                meta: SampleMeta {
                    split,
                    index,
                    stream,
                    retries: retry,
                    dims: [pair.first.dim(), pair.second.dim()],
                    methods: [pair.first_config.method, pair.second_config.method],
                    mean_ratio: label.input_b.mean(),
                },
                input_a: label.input_a.log_transform(),
                input_b: label.input_b.log_transform(),
                target: label.target.log_transform(),
            })
        });
        match attempt {
            Ok(s) => return Ok(s),
            Err(e @ Error::Structural(_)) => return Err(e),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Every grid in the sweep box `n ∈ n_mom`, `k ∈ n_lag`, `a ∈ n_pow`.
pub fn sweep_grids(
    n_mom: core::ops::RangeInclusive<usize>,
    n_lag: core::ops::RangeInclusive<usize>,
    n_pow: core::ops::RangeInclusive<usize>,
) -> Result<Vec<Grid>> {
    let mut out = Vec::new();
    for n in n_mom {
        for k in n_lag.clone() {
            for a in n_pow.clone() {
                out.push(Grid::new(n, k, a)?);
            }
        }
    }
    Ok(out)
}

/// Smallest grid covering all of `grids`, used to label once for a sweep.
pub fn covering_grid(grids: &[Grid]) -> Result<Grid> {
    if grids.is_empty() {
        return Err(Error::structural("no grids given"));
    }
    Grid::new(
        grids.iter().map(|g| g.n_mom).max().unwrap_or(1),
        grids.iter().map(|g| g.n_lag).max().unwrap_or(1),
        grids.iter().map(|g| g.n_pow).max().unwrap_or(1),
    )
}

/// Restricts labeled samples to each grid in turn; targets are shared.
pub fn grid_variants(samples: &[LabeledSample], grids: &[Grid]) -> Result<Vec<(Grid, Vec<LabeledSample>)>> {
    grids
        .iter()
        .map(|g| {
            let restricted = samples.iter().map(|s| s.restrict_inputs(*g)).collect::<Result<Vec<_>>>()?;
            Ok((*g, restricted))
        })
        .collect()
}
