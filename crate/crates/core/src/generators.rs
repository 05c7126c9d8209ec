//! Structured random MAP families.
//!
//! All three families switch between a fast and a slow phase-type regime at
//! arrival epochs. Alternation yields strong negative lag-1 correlation,
//! sticky regimes yield strong positive correlation, and the mild family
//! maps a target correlation to a stickiness level while randomizing the
//! regime shapes for richer marginals. Every output is rescaled to unit mean.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::map::MarkovArrivalProcess;
use crate::ph::{erlang_ph, hyperexp2_ph, mix_ph, PhaseTypeDist};
use crate::rng::{RngKind, SeedStream, StreamRng};

/// Regimes with their switching probabilities at arrival epochs.
#[derive(Debug, Clone)]
pub struct RegimeSpec {
    regimes: Vec<PhaseTypeDist>,
    transition: Matrix,
}

impl RegimeSpec {
    pub fn new(regimes: Vec<PhaseTypeDist>, transition: Matrix) -> Result<Self> {
        let r = regimes.len();
        if r == 0 {
            return Err(Error::structural("at least one regime is required"));
        }
        if !transition.is_square() || transition.rows() != r {
            return Err(Error::structural(format!(
                "{r} regimes need a {r}x{r} transition matrix, got {}x{}",
                transition.rows(),
                transition.cols()
            )));
        }
        for i in 0..r {
            let row = transition.row(i);
            if row.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
                return Err(Error::structural(format!("transition row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::structural(format!("transition row {i} sums to {s}")));
            }
        }
        Ok(RegimeSpec { regimes, transition })
    }

    /// Two regimes with `R = [[p, 1-p], [1-p, p]]`.
    pub fn symmetric(fast: PhaseTypeDist, slow: PhaseTypeDist, p_stay: f64) -> Result<Self> {
        let q = 1.0 - p_stay;
        Self::new(vec![fast, slow], Matrix::from_rows(&[[p_stay, q], [q, p_stay]])?)
    }

    pub fn regimes(&self) -> &[PhaseTypeDist] {
        &self.regimes
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }
}

/// `D0` is block-diagonal in the regime sub-generators; the arrival that ends
/// a sojourn in regime `r` starts regime `s` with probability `R[r, s]`:
/// `D1[r, s] = (-T_r 1) α_s R[r, s]`.
pub fn build_regime_switching_map(spec: &RegimeSpec) -> Result<MarkovArrivalProcess> {
    let blocks: Vec<&Matrix> = spec.regimes.iter().map(|ph| ph.subgenerator()).collect();
    let d0 = Matrix::block_diagonal(&blocks);
    let n = d0.rows();
    let mut d1 = Matrix::zeros(n, n);
    let offsets: Vec<usize> = spec
        .regimes
        .iter()
        .scan(0, |off, ph| {
            let here = *off;
            *off += ph.dim();
            Some(here)
        })
        .collect();
    for (r, from) in spec.regimes.iter().enumerate() {
        let exit = from.exit_rates();
        for (s, to) in spec.regimes.iter().enumerate() {
            let p = spec.transition[(r, s)];
            if p == 0.0 {
                continue;
            }
            for (i, e) in exit.iter().enumerate() {
                for (j, a) in to.alpha().iter().enumerate() {
                    d1[(offsets[r] + i, offsets[s] + j)] = e * a * p;
                }
            }
        }
    }
    MarkovArrivalProcess::new(d0, d1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    StrongNegative,
    StrongPositive,
    Mild,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::StrongNegative, Method::StrongPositive, Method::Mild];

    pub fn name(&self) -> &'static str {
        match self {
            Method::StrongNegative => "strong_negative",
            Method::StrongPositive => "strong_positive",
            Method::Mild => "mild",
        }
    }
}

/// Parameters of a single generator call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub method: Method,
    /// Target lag-1 correlation, mild family only.
    pub rho_target: f64,
    pub mean_fast: f64,
    pub mean_slow: f64,
    /// Erlang orders of the strong families; the mild family draws its own.
    pub k_fast: usize,
    pub k_slow: usize,
    /// Regime stickiness of the strong-positive family.
    pub p_stay: f64,
    pub heavy_marginals: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            method: Method::Mild,
            rho_target: 0.0,
            mean_fast: 0.1,
            mean_slow: 1.9,
            k_fast: 1,
            k_slow: 1,
            p_stay: 0.95,
            heavy_marginals: true,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_fast > 0.0 && self.mean_fast < self.mean_slow && self.mean_slow.is_finite()) {
            return Err(Error::structural(format!(
                "need 0 < mean_fast < mean_slow, got {} and {}",
                self.mean_fast, self.mean_slow
            )));
        }
        match self.method {
            Method::StrongNegative | Method::StrongPositive if self.k_fast == 0 || self.k_slow == 0 => {
                Err(Error::structural("Erlang orders must be at least 1"))
            }
            Method::StrongPositive if !(self.p_stay > 0.5 && self.p_stay < 1.0) => {
                Err(Error::structural(format!("p_stay must be in (0.5, 1), got {}", self.p_stay)))
            }
            Method::Mild if !(self.rho_target > -1.0 && self.rho_target < 1.0) => {
                Err(Error::structural(format!("rho_target must be in (-1, 1), got {}", self.rho_target)))
            }
            _ => Ok(()),
        }
    }
}

fn expect_method(config: &GeneratorConfig, method: Method) -> Result<()> {
    if config.method != method {
        return Err(Error::structural(format!(
            "config is for {}, not {}",
            config.method.name(),
            method.name()
        )));
    }
    config.validate()
}

/// Deterministic fast/slow alternation over Erlang regimes.
pub fn gen_strong_negative(config: &GeneratorConfig) -> Result<MarkovArrivalProcess> {
    expect_method(config, Method::StrongNegative)?;
    let fast = erlang_ph(config.k_fast, config.mean_fast)?;
    let slow = erlang_ph(config.k_slow, config.mean_slow)?;
    let spec = RegimeSpec::new(vec![fast, slow], Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])?)?;
    build_regime_switching_map(&spec)?.time_scale(1.0)
}

/// Sticky Erlang regimes with stay probability `p_stay`.
pub fn gen_strong_positive(config: &GeneratorConfig) -> Result<MarkovArrivalProcess> {
    expect_method(config, Method::StrongPositive)?;
    let fast = erlang_ph(config.k_fast, config.mean_fast)?;
    let slow = erlang_ph(config.k_slow, config.mean_slow)?;
    let spec = RegimeSpec::symmetric(fast, slow, config.p_stay)?;
    build_regime_switching_map(&spec)?.time_scale(1.0)
}

/// Stickiness for a target correlation: `0.5 + 0.45 tanh(2ρ)`, clipped to `[0.05, 0.95]`.
pub fn mild_stickiness(rho_target: f64) -> f64 {
    (0.5 + 0.45 * libm::tanh(2.0 * rho_target)).clamp(0.05, 0.95)
}

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Moderate correlation with varied marginals. The regime shapes are drawn
/// from an RNG seeded by `config.seed`.
pub fn gen_mild(config: &GeneratorConfig) -> Result<MarkovArrivalProcess> {
    expect_method(config, Method::Mild)?;
    let mut rng = SeedStream::new(config.seed).rng(0);
    let rng = &mut rng;

    let k_fast = rng.random_range(3..=19usize);
    let fast = erlang_ph(k_fast, config.mean_fast)?;

    let slow = if config.heavy_marginals {
        let p = uniform(rng, 0.2, 0.8);
        let r = uniform(rng, 5.0, 80.0);
        let hyper = hyperexp2_ph(config.mean_slow, p, r)?;
        if rng.random::<f64>() < 0.6 {
            let k_slow = rng.random_range(2..=14usize);
            let w = uniform(rng, 0.2, 0.8);
            let erl = erlang_ph(k_slow, config.mean_slow)?;
            mix_ph(&hyper, &erl, w)?
        } else {
            hyper
        }
    } else {
        let k_slow = rng.random_range(2..=24usize);
        erlang_ph(k_slow, config.mean_slow)?
    };

    let spec = RegimeSpec::symmetric(fast, slow, mild_stickiness(config.rho_target))?;
    build_regime_switching_map(&spec)?.time_scale(1.0)
}

pub fn generate(config: &GeneratorConfig) -> Result<MarkovArrivalProcess> {
    match config.method {
        Method::StrongNegative => gen_strong_negative(config),
        Method::StrongPositive => gen_strong_positive(config),
        Method::Mild => gen_mild(config),
    }
}

/// Closed interval used for random parameter draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub lo: T,
    pub hi: T,
}

impl<T> Range<T> {
    pub const fn new(lo: T, hi: T) -> Self {
        Range { lo, hi }
    }
}

/// Distributions of the generator parameters used for bulk sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub rng: RngKind,
    /// Weights of (strong negative, strong positive, mild).
    pub method_mix: [f64; 3],
    /// Fast-regime mean; the slow mean is `2 - mean_fast`.
    pub mean_fast: Range<f64>,
    pub negative_k_fast: Range<usize>,
    pub negative_k_slow: Range<usize>,
    pub positive_k_fast: Range<usize>,
    pub positive_k_slow: Range<usize>,
    pub p_stay: Range<f64>,
    pub rho_target: Range<f64>,
    /// Probability that a mild draw uses heavy slow-regime marginals.
    pub heavy_probability: f64,
    /// Mean of the second stream after rescaling; the first keeps mean 1.
    pub scale: Range<f64>,
    /// Streams with more states are redrawn.
    pub max_stream_dim: usize,
    pub max_redraws: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            rng: RngKind::Chacha8,
            method_mix: [1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0],
            mean_fast: Range::new(0.02, 0.4),
            negative_k_fast: Range::new(1, 5),
            negative_k_slow: Range::new(2, 5),
            positive_k_fast: Range::new(1, 5),
            positive_k_slow: Range::new(1, 5),
            p_stay: Range::new(0.85, 0.99),
            rho_target: Range::new(-0.3, 0.3),
            heavy_probability: 0.5,
            scale: Range::new(0.1, 1.0),
            max_stream_dim: 50,
            max_redraws: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.method_mix.iter().sum();
        if self.method_mix.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::structural(format!("method weights must be non-negative and sum to 1, got {total}")));
        }
        let mf = self.mean_fast;
        if !(mf.lo > 0.0 && mf.lo <= mf.hi && mf.hi < 1.0) {
            return Err(Error::structural("mean_fast range must lie in (0, 1)"));
        }
        for r in [self.negative_k_fast, self.negative_k_slow, self.positive_k_fast, self.positive_k_slow] {
            if r.lo == 0 || r.lo > r.hi {
                return Err(Error::structural("Erlang order ranges must satisfy 1 ≤ lo ≤ hi"));
            }
        }
        if !(self.p_stay.lo > 0.5 && self.p_stay.lo <= self.p_stay.hi && self.p_stay.hi < 1.0) {
            return Err(Error::structural("p_stay range must lie in (0.5, 1)"));
        }
        if !(self.rho_target.lo > -1.0 && self.rho_target.lo <= self.rho_target.hi && self.rho_target.hi < 1.0) {
            return Err(Error::structural("rho_target range must lie in (-1, 1)"));
        }
        if !(0.0..=1.0).contains(&self.heavy_probability) {
            return Err(Error::structural("heavy_probability must be in [0, 1]"));
        }
        if !(self.scale.lo > 0.0 && self.scale.lo <= self.scale.hi && self.scale.hi <= 1.0) {
            return Err(Error::structural("scale range must lie in (0, 1]"));
        }
        if self.max_stream_dim == 0 {
            return Err(Error::structural("max_stream_dim must be positive"));
        }
        Ok(())
    }

    pub fn pick_method(&self, rng: &mut StreamRng) -> Method {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (m, w) in Method::ALL.iter().zip(self.method_mix) {
            acc += w;
            if u < acc {
                return *m;
            }
        }
        // rounding in the weights: fall back to the last method with weight
        *Method::ALL
            .iter()
            .zip(self.method_mix)
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(m, _)| m)
            .unwrap_or(&Method::Mild)
    }

    /// Draws the parameters of one generator call for `method`.
    pub fn draw_config(&self, method: Method, rng: &mut StreamRng) -> GeneratorConfig {
        let mean_fast = uniform(rng, self.mean_fast.lo, self.mean_fast.hi);
        let (kf, ks) = match method {
            Method::StrongNegative => (self.negative_k_fast, self.negative_k_slow),
            _ => (self.positive_k_fast, self.positive_k_slow),
        };
        GeneratorConfig {
            method,
            rho_target: uniform(rng, self.rho_target.lo, self.rho_target.hi),
            mean_fast,
            mean_slow: 2.0 - mean_fast,
            k_fast: rng.random_range(kf.lo..=kf.hi),
            k_slow: rng.random_range(ks.lo..=ks.hi),
            p_stay: uniform(rng, self.p_stay.lo, self.p_stay.hi),
            heavy_marginals: rng.random::<f64>() < self.heavy_probability,
            seed: rng.random(),
        }
    }

    /// One unit-mean stream within the dimension budget, redrawing oversized ones.
    pub fn sample_map(&self, rng: &mut StreamRng) -> Result<(MarkovArrivalProcess, GeneratorConfig)> {
        let method = self.pick_method(rng);
        let mut last_dim = 0;
        for _ in 0..=self.max_redraws {
            let config = self.draw_config(method, rng);
            let map = generate(&config)?;
            if map.dim() <= self.max_stream_dim {
                return Ok((map, config));
            }
            last_dim = map.dim();
        }
        Err(Error::Capacity {
            dim: last_dim,
            cap: self.max_stream_dim,
        })
    }
}

/// Two independent streams: `first` has mean 1, `second` has mean `scale ≤ 1`.
#[derive(Debug, Clone)]
pub struct MapPair {
    pub first: MarkovArrivalProcess,
    pub second: MarkovArrivalProcess,
    pub scale: f64,
    pub first_config: GeneratorConfig,
    pub second_config: GeneratorConfig,
}

/// Samples a pair on the stream selected by `seed`.
pub fn sample_map_pair(seed: u64, config: &SamplerConfig) -> Result<MapPair> {
    sample_map_pair_with(&mut SeedStream::new(seed).rng(0), config)
}

pub fn sample_map_pair_with(rng: &mut StreamRng, config: &SamplerConfig) -> Result<MapPair> {
    config.validate()?;
    let (first, first_config) = config.sample_map(rng)?;
    let (second, second_config) = config.sample_map(rng)?;
    let scale = uniform(rng, config.scale.lo, config.scale.hi);
    let second = rescale_pair_member(&second, scale)?;
    Ok(MapPair {
        first,
        second,
        scale,
        first_config,
        second_config,
    })
}

/// Rescales a unit-mean stream to mean `scale`.
pub fn rescale_pair_member(map: &MarkovArrivalProcess, scale: f64) -> Result<MarkovArrivalProcess> {
    if scale == 1.0 {
        return Ok(map.clone());
    }
    map.time_scale(scale)
}
