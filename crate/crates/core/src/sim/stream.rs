//! Sample paths of MAP arrival streams.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::map::MarkovArrivalProcess;
use crate::ph::{exponential, pick};
use crate::rng::{SeedStream, StreamRng};

/// Event tables of a MAP: from phase `i`, the chain leaves at rate `q_i`
/// and picks target `j` among `2n` slots, `j < n` silent and `j ≥ n` an
/// arrival into phase `j - n`.
#[derive(Debug, Clone)]
pub struct MapSampler {
    n: usize,
    rates: Vec<f64>,
    jumps: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

impl MapSampler {
    pub fn new(map: &MarkovArrivalProcess) -> Result<Self> {
        let n = map.dim();
        let (d0, d1) = (map.d0(), map.d1());
        let mut rates = Vec::with_capacity(n);
        let mut jumps = Vec::with_capacity(n);
        for i in 0..n {
            let q = -d0[(i, i)];
            let mut acc = 0.0;
            let mut cum = Vec::with_capacity(2 * n);
            for j in 0..n {
                if j != i {
                    acc += d0[(i, j)];
                }
                cum.push(acc);
            }
            for j in 0..n {
                acc += d1[(i, j)];
                cum.push(acc);
            }
            rates.push(q);
            jumps.push(cum);
        }
        let pi = map.stationary_context()?.pi;
        let mut acc = 0.0;
        let stationary = pi
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(MapSampler {
            n,
            rates,
            jumps,
            stationary,
        })
    }

    /// Phase drawn from the stationary law of the background chain.
    pub fn initial_phase<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        pick(&self.stationary, rng.random::<f64>())
    }

    /// Time until the next arrival from `phase`; updates `phase` to the phase after it.
    pub fn next_interval<R: Rng + ?Sized>(&self, phase: &mut usize, rng: &mut R) -> f64 {
        let mut t = 0.0;
        loop {
            let i = *phase;
            t += exponential(rng, self.rates[i]);
            let j = pick(&self.jumps[i], rng.random::<f64>());
            if j >= self.n {
                *phase = j - self.n;
                return t;
            }
            *phase = j;
        }
    }
}

/// Arrival epochs `t_1 < t_2 < …` of `count` arrivals, started at time 0 in
/// a stationary phase.
pub fn simulate_map_stream(map: &MarkovArrivalProcess, count: usize, seed: u64) -> Result<Vec<f64>> {
    simulate_map_stream_with(map, count, &mut SeedStream::new(seed).rng(0))
}

pub fn simulate_map_stream_with(map: &MarkovArrivalProcess, count: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
    let sampler = MapSampler::new(map)?;
    let mut phase = sampler.initial_phase(rng);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        t += sampler.next_interval(&mut phase, rng);
        out.push(t);
    }
    Ok(out)
}

/// Gaps between consecutive epochs; the time before the first epoch is dropped.
pub fn interarrivals(epochs: &[f64]) -> Vec<f64> {
    epochs.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Sorted union of two epoch sequences, cut at the earlier of their last epochs.
pub fn merge_streams(a: &[f64], b: &[f64]) -> Vec<f64> {
    let end = match (a.last(), b.last()) {
        (Some(x), Some(y)) => x.min(*y),
        (Some(x), None) => *x,
        (None, Some(y)) => *y,
        (None, None) => return Vec::new(),
    };
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i] <= b[j]);
        let t = if take_a {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if t > end {
            break;
        }
        out.push(t);
    }
    out
}
