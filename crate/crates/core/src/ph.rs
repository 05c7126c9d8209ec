//! Phase-type distributions: the regime building blocks of the generators
//! and the service laws of the simulator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorial;
use crate::linalg::{Lu, Matrix};
use crate::map::MarkovArrivalProcess;

/// Absorption time of a CTMC started from `alpha` with sub-generator `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTypeDist {
    alpha: Vec<f64>,
    t: Matrix,
}

impl PhaseTypeDist {
    pub fn new(alpha: Vec<f64>, t: Matrix) -> Result<Self> {
        let n = alpha.len();
        if !t.is_square() || t.rows() != n || n == 0 {
            return Err(Error::structural(format!(
                "initial vector of length {n} does not match a {}x{} sub-generator",
                t.rows(),
                t.cols()
            )));
        }
        if alpha.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::structural("initial probabilities must be non-negative"));
        }
        let s: f64 = alpha.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::structural(format!("initial probabilities sum to {s}, not 1")));
        }
        for i in 0..n {
            let diag = t[(i, i)];
            if !(diag < 0.0) {
                return Err(Error::structural(format!("sub-generator diagonal at {i} is {diag}")));
            }
            for j in 0..n {
                if i != j && !(t[(i, j)] >= 0.0) {
                    return Err(Error::structural(format!("negative off-diagonal rate at ({i}, {j})")));
                }
            }
            let row: f64 = t.row(i).iter().sum();
            if row > 1e-10 * diag.abs() {
                return Err(Error::structural(format!("sub-generator row {i} sums to {row} > 0")));
            }
        }
        Lu::factor(&t).map_err(|_| Error::structural("sub-generator is singular"))?;
        Ok(PhaseTypeDist { alpha, t })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        erlang_ph(1, mean)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn subgenerator(&self) -> &Matrix {
        &self.t
    }

    /// Absorption rates `-T 1`.
    pub fn exit_rates(&self) -> Vec<f64> {
        self.t.row_sums().into_iter().map(|s| (-s).max(0.0)).collect()
    }

    /// `m(i) = i! α (-T)^{-i} 1` for `i = 1..=n`.
    pub fn moments(&self, n: usize) -> Vec<f64> {
        let lu = Lu::factor(&self.t.scaled(-1.0)).expect("validated non-singular");
        let mut v = vec![1.0; self.dim()];
        (1..=n)
            .map(|i| {
                v = lu.solve(&v);
                factorial(i) * self.alpha.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.moments(1)[0]
    }

    pub fn scv(&self) -> f64 {
        let m = self.moments(2);
        m[1] / (m[0] * m[0]) - 1.0
    }

    /// Same shape with every duration multiplied by `factor`.
    pub fn stretched(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::domain(format!("stretch factor must be positive, got {factor}")));
        }
        Ok(PhaseTypeDist {
            alpha: self.alpha.clone(),
            t: self.t.scaled(1.0 / factor),
        })
    }

    /// Renewal MAP with this inter-arrival law: `D0 = T`, `D1 = t α`.
    pub fn renewal_map(&self) -> Result<MarkovArrivalProcess> {
        let n = self.dim();
        let exit = self.exit_rates();
        let mut d1 = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                d1[(i, j)] = exit[i] * self.alpha[j];
            }
        }
        MarkovArrivalProcess::new(self.t.clone(), d1)
    }

    pub fn sampler(&self) -> PhSampler {
        PhSampler::new(self)
    }
}

/// Erlang-`k` with the given mean: `k` phases in series at rate `k / mean`.
pub fn erlang_ph(k: usize, mean: f64) -> Result<PhaseTypeDist> {
    if k == 0 || !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::domain(format!("Erlang needs k ≥ 1 and a positive mean, got k={k}, mean={mean}")));
    }
    let rate = k as f64 / mean;
    let mut t = Matrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = -rate;
        if i + 1 < k {
            t[(i, i + 1)] = rate;
        }
    }
    let mut alpha = vec![0.0; k];
    alpha[0] = 1.0;
    PhaseTypeDist::new(alpha, t)
}

/// Two parallel exponential branches with probabilities `(mix, 1 - mix)`;
/// the first branch is `rate_ratio` times faster than the second.
pub fn hyperexp2_ph(mean: f64, mix: f64, rate_ratio: f64) -> Result<PhaseTypeDist> {
    if !(mean > 0.0 && mean.is_finite()) || !(mix > 0.0 && mix < 1.0) || !(rate_ratio >= 1.0 && rate_ratio.is_finite()) {
        return Err(Error::domain(format!(
            "hyperexponential needs mean > 0, mix in (0,1), ratio ≥ 1; got {mean}, {mix}, {rate_ratio}"
        )));
    }
    let fast = (mix + (1.0 - mix) * rate_ratio) / mean;
    let slow = fast / rate_ratio;
    PhaseTypeDist::new(vec![mix, 1.0 - mix], Matrix::diagonal(&[-fast, -slow]))
}

/// Probabilistic mixture: `ph1` with probability `w`, else `ph2`.
pub fn mix_ph(ph1: &PhaseTypeDist, ph2: &PhaseTypeDist, w: f64) -> Result<PhaseTypeDist> {
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::domain(format!("mixture weight must be in (0,1), got {w}")));
    }
    let alpha = ph1
        .alpha
        .iter()
        .map(|a| w * a)
        .chain(ph2.alpha.iter().map(|a| (1.0 - w) * a))
        .collect();
    PhaseTypeDist::new(alpha, Matrix::block_diagonal(&[&ph1.t, &ph2.t]))
}

/// Upper bound on the phases used by [`fit_two_moment`] for low SCVs.
pub const MAX_FIT_PHASES: usize = 50;

/// Two-moment phase-type fit: a mixed Erlang for `scv < 1`, the exponential
/// at `scv = 1`, and a balanced-means hyperexponential for `scv > 1`.
///
/// SCVs below `1 / MAX_FIT_PHASES` are matched only approximately (the
/// Erlang with `MAX_FIT_PHASES` phases).
pub fn fit_two_moment(mean: f64, scv: f64) -> Result<PhaseTypeDist> {
    if !(mean > 0.0 && mean.is_finite()) || !(scv > 0.0 && scv.is_finite()) {
        return Err(Error::domain(format!("two-moment fit needs positive mean and SCV, got {mean}, {scv}")));
    }
    if (scv - 1.0).abs() < 1e-12 {
        return erlang_ph(1, mean);
    }
    if scv > 1.0 {
        let p1 = 0.5 * (1.0 + libm::sqrt((scv - 1.0) / (scv + 1.0)));
        let (r1, r2) = (2.0 * p1 / mean, 2.0 * (1.0 - p1) / mean);
        return PhaseTypeDist::new(vec![p1, 1.0 - p1], Matrix::diagonal(&[-r1, -r2]));
    }
    let k = (libm::ceil(1.0 / scv) as usize).clamp(2, MAX_FIT_PHASES);
    if scv * (k as f64) < 1.0 - 1e-12 {
        return erlang_ph(k, mean);
    }
    // Erlang(k-1) with probability p, Erlang(k) otherwise, common rate.
    let kf = k as f64;
    let p = (kf * scv - libm::sqrt(kf * (1.0 + scv) - kf * kf * scv)) / (1.0 + scv);
    let rate = (kf - p) / mean;
    let mut t = Matrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = -rate;
        if i + 1 < k {
            t[(i, i + 1)] = rate;
        }
    }
    let mut alpha = vec![0.0; k];
    alpha[0] = 1.0 - p;
    alpha[1] = p;
    PhaseTypeDist::new(alpha, t)
}

/// Phase-type family descriptions used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PhSpec {
    Exponential { mean: f64 },
    Erlang { k: usize, mean: f64 },
    Hyperexp2 { mean: f64, mix: f64, rate_ratio: f64 },
    /// Two-moment fit to the given mean and SCV.
    TwoMoment { mean: f64, scv: f64 },
}

impl PhSpec {
    pub fn build(&self) -> Result<PhaseTypeDist> {
        match *self {
            PhSpec::Exponential { mean } => erlang_ph(1, mean),
            PhSpec::Erlang { k, mean } => erlang_ph(k, mean),
            PhSpec::Hyperexp2 { mean, mix, rate_ratio } => hyperexp2_ph(mean, mix, rate_ratio),
            PhSpec::TwoMoment { mean, scv } => fit_two_moment(mean, scv),
        }
    }
}

/// Draws absorption times by walking the phases.
#[derive(Debug, Clone)]
pub struct PhSampler {
    initial: Vec<f64>,
    rates: Vec<f64>,
    /// Cumulative jump probabilities per phase; index `n` means absorption.
    jumps: Vec<Vec<f64>>,
}

impl PhSampler {
    fn new(ph: &PhaseTypeDist) -> Self {
        let n = ph.dim();
        let exit = ph.exit_rates();
        let mut rates = Vec::with_capacity(n);
        let mut jumps = Vec::with_capacity(n);
        for i in 0..n {
            let q = -ph.t[(i, i)];
            let mut acc = 0.0;
            let mut cum = Vec::with_capacity(n + 1);
            for j in 0..n {
                if j != i {
                    acc += ph.t[(i, j)] / q;
                }
                cum.push(acc);
            }
            acc += exit[i] / q;
            cum.push(acc);
            rates.push(q);
            jumps.push(cum);
        }
        let mut initial = Vec::with_capacity(n);
        let mut acc = 0.0;
        for a in &ph.alpha {
            acc += a;
            initial.push(acc);
        }
        PhSampler { initial, rates, jumps }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut phase = pick(&self.initial, rng.random::<f64>());
        let n = self.rates.len();
        let mut total = 0.0;
        loop {
            total += exponential(rng, self.rates[phase]);
            let next = pick(&self.jumps[phase], rng.random::<f64>());
            if next >= n {
                return total;
            }
            phase = next;
        }
    }
}

/// Index of the first cumulative weight above `u`, with rounding slack
/// absorbed by the last entry.
pub(crate) fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("non-empty");
    let target = u * total;
    cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1)
}

/// Exponential variate by inversion.
pub(crate) fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -libm::log1p(-u) / rate
}
