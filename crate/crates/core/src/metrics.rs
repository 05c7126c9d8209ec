//! Error metrics and regime partitions used to report accuracy.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

/// Truncation length of steady-state distributions.
pub const HIST_LEN: usize = 500;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(a, b));
    }
    if a == 0 {
        return Err(Error::domain("metrics need at least one value"));
    }
    Ok(())
}

/// Mean absolute percentage error, in percent.
pub fn mape(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    let mut sum = 0.0;
    for (y, p) in truth.iter().zip(pred) {
        if *y == 0.0 {
            return Err(Error::domain("MAPE is undefined for a zero true value"));
        }
        sum += ((y - p) / y).abs();
    }
    Ok(100.0 * sum / truth.len() as f64)
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), pred.len())?;
    let sum: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum();
    Ok(sum / truth.len() as f64)
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.len() != HIST_LEN {
        return Err(Error::shape(HIST_LEN, p.len()));
    }
    if let Some(x) = p.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::domain(format!("probability {x} is negative or undefined")));
    }
    Ok(())
}

/// Sum of absolute errors of one truncated distribution.
pub fn sae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_distribution(truth)?;
    check_distribution(pred)?;
    Ok(truth.iter().zip(pred).map(|(p, q)| (p - q).abs()).sum())
}

/// SAE averaged over instances.
pub fn mean_sae(pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::domain("no instances"));
    }
    let mut s = 0.0;
    for (t, p) in pairs {
        s += sae(t, p)?;
    }
    Ok(s / pairs.len() as f64)
}

/// Relative error of the mean number in system, in percent of the predicted mean.
pub fn rem(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_distribution(truth)?;
    check_distribution(pred)?;
    let diff: f64 = truth.iter().zip(pred).enumerate().map(|(i, (p, q))| i as f64 * (p - q)).sum();
    let mean_pred: f64 = pred.iter().enumerate().map(|(i, q)| i as f64 * q).sum();
    if mean_pred == 0.0 {
        return Err(Error::domain("REM is undefined for a zero predicted mean"));
    }
    Ok(100.0 * diff.abs() / mean_pred)
}

/// Mean of a truncated distribution.
pub fn distribution_mean(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(i, q)| i as f64 * q).sum()
}

/// Two-way split at a threshold, `[.., t)` and `[t, ..)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Below,
    AtLeast,
}

impl Split {
    pub fn of(value: f64, threshold: f64) -> Split {
        if value < threshold {
            Split::Below
        } else {
            Split::AtLeast
        }
    }

    fn bit(self) -> usize {
        self as usize
    }

    fn label(self, threshold: &str) -> String {
        match self {
            Split::Below => format!("<{threshold}"),
            Split::AtLeast => format!(">{threshold}"),
        }
    }
}

/// Lag-1 correlation bands `[-1,-0.25)`, `[-0.25,0)`, `[0,0.25)`, `[0.25,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoBand {
    StrongNegative,
    WeakNegative,
    WeakPositive,
    StrongPositive,
}

impl RhoBand {
    pub fn of(rho: f64) -> RhoBand {
        if rho < -0.25 {
            RhoBand::StrongNegative
        } else if rho < 0.0 {
            RhoBand::WeakNegative
        } else if rho < 0.25 {
            RhoBand::WeakPositive
        } else {
            RhoBand::StrongPositive
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RhoBand::StrongNegative => "<-0.25",
            RhoBand::WeakNegative => "(-0.25,0)",
            RhoBand::WeakPositive => "(0,0.25)",
            RhoBand::StrongPositive => "(0.25,1)",
        }
    }
}

pub const SCV_THRESHOLD: f64 = 3.0;
pub const RATIO_THRESHOLD: f64 = 0.5;
pub const UTIL_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Scv,
    Rho,
    System,
}

impl Scheme {
    pub fn len(self) -> usize {
        match self {
            Scheme::Scv => 8,
            Scheme::Rho => 32,
            Scheme::System => 64,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Column headers of the regime-defining fields.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Scheme::Scv => &["scv_stream1", "scv_stream2", "mean_ratio"],
            Scheme::Rho => &["rho_stream1", "rho_stream2", "mean_ratio"],
            Scheme::System => &["scv_stream1", "scv_stream2", "scv_service", "rho_stream1", "rho_stream2", "utilization"],
        }
    }

    /// All keys in table row order.
    pub fn keys(self) -> Vec<RegimeKey> {
        (0..self.len()).map(|i| RegimeKey::from_index(self, i)).collect()
    }
}

/// Regime cell of one sample under one partition scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegimeKey {
    Scv {
        scv1: Split,
        scv2: Split,
        ratio: Split,
    },
    Rho {
        rho1: RhoBand,
        rho2: RhoBand,
        ratio: Split,
    },
    /// Correlation signs use `Below` for negative and `AtLeast` for non-negative.
    System {
        scv1: Split,
        scv2: Split,
        service: Split,
        rho1: Split,
        rho2: Split,
        util: Split,
    },
}

const BANDS: [RhoBand; 4] = [
    RhoBand::StrongNegative,
    RhoBand::WeakNegative,
    RhoBand::WeakPositive,
    RhoBand::StrongPositive,
];

fn split_of_bit(b: usize) -> Split {
    if b == 0 {
        Split::Below
    } else {
        Split::AtLeast
    }
}

impl RegimeKey {
    pub fn scheme(&self) -> Scheme {
        match self {
            RegimeKey::Scv { .. } => Scheme::Scv,
            RegimeKey::Rho { .. } => Scheme::Rho,
            RegimeKey::System { .. } => Scheme::System,
        }
    }

    /// Zero-based row of this key in its table.
    pub fn index(&self) -> usize {
        match *self {
            RegimeKey::Scv { scv1, scv2, ratio } => (scv1.bit() << 2) | (scv2.bit() << 1) | ratio.bit(),
            RegimeKey::Rho { rho1, rho2, ratio } => ((rho1 as usize * 4 + rho2 as usize) << 1) | ratio.bit(),
            RegimeKey::System {
                scv1,
                scv2,
                service,
                rho1,
                rho2,
                util,
            } => {
                (scv1.bit() << 5)
                    | (scv2.bit() << 4)
                    | (service.bit() << 3)
                    | (rho1.bit() << 2)
                    | (rho2.bit() << 1)
                    | util.bit()
            }
        }
    }

    pub fn from_index(scheme: Scheme, i: usize) -> RegimeKey {
        assert!(i < scheme.len(), "regime index {i} out of range");
        let bit = |k: usize| split_of_bit((i >> k) & 1);
        match scheme {
            Scheme::Scv => RegimeKey::Scv {
                scv1: bit(2),
                scv2: bit(1),
                ratio: bit(0),
            },
            Scheme::Rho => RegimeKey::Rho {
                rho1: BANDS[i >> 3],
                rho2: BANDS[(i >> 1) & 3],
                ratio: bit(0),
            },
            Scheme::System => RegimeKey::System {
                scv1: bit(5),
                scv2: bit(4),
                service: bit(3),
                rho1: bit(2),
                rho2: bit(1),
                util: bit(0),
            },
        }
    }

    /// Field labels in the scheme's column order.
    pub fn labels(&self) -> Vec<String> {
        match *self {
            RegimeKey::Scv { scv1, scv2, ratio } => {
                alloc::vec![scv1.label("3"), scv2.label("3"), ratio.label("0.5")]
            }
            RegimeKey::Rho { rho1, rho2, ratio } => {
                alloc::vec![rho1.label().into(), rho2.label().into(), ratio.label("0.5")]
            }
            RegimeKey::System {
                scv1,
                scv2,
                service,
                rho1,
                rho2,
                util,
            } => alloc::vec![
                scv1.label("3"),
                scv2.label("3"),
                service.label("3"),
                rho1.label("0"),
                rho2.label("0"),
                util.label("0.7"),
            ],
        }
    }
}

/// Per-pair quantities that decide regime membership. Stream 1 is the
/// unit-mean stream; `mean_ratio` is the second stream's mean over the first's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub scv1: f64,
    pub scv2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub mean_ratio: f64,
}

impl PairFeatures {
    /// Reads SCV and lag-1 correlation from two descriptors (at least two moments each).
    pub fn from_descriptors(first: &DescriptorSet, second: &DescriptorSet) -> PairFeatures {
        PairFeatures {
            scv1: first.scv(),
            scv2: second.scv(),
            rho1: first.rho(1, 1, 1),
            rho2: second.rho(1, 1, 1),
            mean_ratio: second.mean() / first.mean(),
        }
    }

    pub fn scv_key(&self) -> RegimeKey {
        RegimeKey::Scv {
            scv1: Split::of(self.scv1, SCV_THRESHOLD),
            scv2: Split::of(self.scv2, SCV_THRESHOLD),
            ratio: Split::of(self.mean_ratio, RATIO_THRESHOLD),
        }
    }

    pub fn rho_key(&self) -> RegimeKey {
        RegimeKey::Rho {
            rho1: RhoBand::of(self.rho1),
            rho2: RhoBand::of(self.rho2),
            ratio: Split::of(self.mean_ratio, RATIO_THRESHOLD),
        }
    }

    pub fn system_key(&self, service_scv: f64, utilization: f64) -> RegimeKey {
        RegimeKey::System {
            scv1: Split::of(self.scv1, SCV_THRESHOLD),
            scv2: Split::of(self.scv2, SCV_THRESHOLD),
            service: Split::of(service_scv, SCV_THRESHOLD),
            rho1: Split::of(self.rho1, 0.0),
            rho2: Split::of(self.rho2, 0.0),
            util: Split::of(utilization, UTIL_THRESHOLD),
        }
    }
}

/// Groups item indices by key; every item lands in exactly one cell.
pub fn partition_regimes<T>(items: &[T], key: impl Fn(&T) -> RegimeKey) -> BTreeMap<RegimeKey, Vec<usize>> {
    let mut cells: BTreeMap<RegimeKey, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        cells.entry(key(item)).or_default().push(i);
    }
    cells
}

/// Number of evaluated moments (orders 2 to 5) and correlation cells.
pub const N_PARE: usize = 4;
pub const N_CORR: usize = 8;

/// Running per-regime sums of percentage moment errors and absolute
/// correlation errors, plus optional named scalar columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorAccumulator {
    pub count: usize,
    pub pare_sum: [f64; N_PARE],
    pub abs_corr_sum: [f64; N_CORR],
    pub extra_sum: Vec<f64>,
}

impl ErrorAccumulator {
    /// Adds one sample on the target grid (five moments, eight correlations).
    pub fn add(&mut self, truth: &DescriptorSet, pred: &DescriptorSet) -> Result<()> {
        if truth.moments().len() < 5 || pred.moments().len() < 5 {
            return Err(Error::shape(5, truth.moments().len().min(pred.moments().len())));
        }
        if truth.autocorr().len() != N_CORR || pred.autocorr().len() != N_CORR {
            return Err(Error::shape(N_CORR, truth.autocorr().len().min(pred.autocorr().len())));
        }
        for i in 0..N_PARE {
            let y = truth.moment(i + 2);
            self.pare_sum[i] += 100.0 * ((y - pred.moment(i + 2)) / y).abs();
        }
        for (s, (y, p)) in self.abs_corr_sum.iter_mut().zip(truth.autocorr().iter().zip(pred.autocorr())) {
            *s += (y - p).abs();
        }
        self.count += 1;
        Ok(())
    }

    /// Adds values for the extra columns of the current sample.
    pub fn add_extra(&mut self, values: &[f64]) {
        if self.extra_sum.len() < values.len() {
            self.extra_sum.resize(values.len(), 0.0);
        }
        for (s, v) in self.extra_sum.iter_mut().zip(values) {
            *s += v;
        }
    }

    pub fn merge(&mut self, other: &ErrorAccumulator) {
        self.count += other.count;
        for (a, b) in self.pare_sum.iter_mut().zip(other.pare_sum) {
            *a += b;
        }
        for (a, b) in self.abs_corr_sum.iter_mut().zip(other.abs_corr_sum) {
            *a += b;
        }
        self.add_extra(&other.extra_sum);
    }

    fn mean_of(&self, s: f64) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            s / self.count as f64
        }
    }

    /// MAPE of moments 2..=5.
    pub fn pare(&self) -> [f64; N_PARE] {
        self.pare_sum.map(|s| self.mean_of(s))
    }

    pub fn corr_mae(&self) -> [f64; N_CORR] {
        self.abs_corr_sum.map(|s| self.mean_of(s))
    }

    /// Correlation MAE averaged over the eight cells.
    pub fn corr_mae_overall(&self) -> f64 {
        self.corr_mae().iter().sum::<f64>() / N_CORR as f64
    }

    pub fn extra(&self) -> Vec<f64> {
        self.extra_sum.iter().map(|s| self.mean_of(*s)).collect()
    }
}

/// Accumulators for every key of one scheme, in table row order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeTable {
    pub scheme: Scheme,
    pub rows: Vec<ErrorAccumulator>,
}

impl RegimeTable {
    pub fn new(scheme: Scheme) -> Self {
        RegimeTable {
            scheme,
            rows: alloc::vec![ErrorAccumulator::default(); scheme.len()],
        }
    }

    pub fn row_mut(&mut self, key: &RegimeKey) -> Result<&mut ErrorAccumulator> {
        if key.scheme() != self.scheme {
            return Err(Error::structural("regime key belongs to a different scheme"));
        }
        Ok(&mut self.rows[key.index()])
    }

    /// Pooled accumulator over all rows.
    pub fn overall(&self) -> ErrorAccumulator {
        let mut all = ErrorAccumulator::default();
        for r in &self.rows {
            all.merge(r);
        }
        all
    }
}
