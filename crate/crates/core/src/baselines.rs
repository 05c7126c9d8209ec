//! Classical renewal approximations of a merged stream's SCV.
//!
//! The recipes are spelled out in `BASELINES.md` at the repository root.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ph::fit_two_moment;

/// Rate and interval SCV of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub rate: f64,
    pub scv: f64,
}

impl StreamSummary {
    pub fn new(rate: f64, scv: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite() && scv > 0.0 && scv.is_finite()) {
            return Err(Error::domain(format!("stream summary needs positive finite rate and scv, got ({rate}, {scv})")));
        }
        Ok(StreamSummary { rate, scv })
    }

    /// Second moment of the renewal interval with this rate and SCV.
    pub fn second_moment(&self) -> f64 {
        (1.0 + self.scv) / (self.rate * self.rate)
    }
}

fn total_rate(streams: &[StreamSummary]) -> Result<f64> {
    if streams.is_empty() {
        return Err(Error::domain("at least one stream is required"));
    }
    Ok(streams.iter().map(|s| s.rate).sum())
}

/// Rate-weighted average of the component SCVs.
pub fn whitt_asymptotic(streams: &[StreamSummary]) -> Result<StreamSummary> {
    let rate = total_rate(streams)?;
    let scv = streams.iter().map(|s| s.rate / rate * s.scv).sum();
    Ok(StreamSummary { rate, scv })
}

/// SCV of the stationary interval of the superposition of independent
/// renewal streams, each replaced by a two-moment phase-type fit.
pub fn whitt_stationary_interval(streams: &[StreamSummary]) -> Result<StreamSummary> {
    let rate = total_rate(streams)?;
    let mut merged = fit_two_moment(1.0 / streams[0].rate, streams[0].scv)?.renewal_map()?;
    for s in &streams[1..] {
        let next = fit_two_moment(1.0 / s.rate, s.scv)?.renewal_map()?;
        merged = merged.superpose(&next)?;
    }
    let m = merged.interarrival_moments(2)?;
    Ok(StreamSummary {
        rate,
        scv: m[1] / (m[0] * m[0]) - 1.0,
    })
}

/// Weight given to the asymptotic SCV for a merged stream of the given
/// components feeding a queue at `utilization`.
pub fn albin_weight(streams: &[StreamSummary], utilization: f64) -> Result<f64> {
    if !(utilization > 0.0 && utilization < 1.0) {
        return Err(Error::domain(format!("utilization must be in (0, 1), got {utilization}")));
    }
    let rate = total_rate(streams)?;
    let nu = 1.0 / streams.iter().map(|s| (s.rate / rate) * (s.rate / rate)).sum::<f64>();
    Ok(1.0 / (1.0 + 2.1 * libm::pow(1.0 - utilization, 1.8) * nu))
}

/// `w · scv_asymptotic + (1 - w) · scv_stationary_interval`.
pub fn albin_hybrid_with_weight(streams: &[StreamSummary], w: f64) -> Result<StreamSummary> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::domain(format!("Albin weight {w} outside [0, 1]")));
    }
    let a = whitt_asymptotic(streams)?;
    if w == 1.0 {
        return Ok(a);
    }
    let r = whitt_stationary_interval(streams)?;
    if w == 0.0 {
        return Ok(r);
    }
    Ok(StreamSummary {
        rate: a.rate,
        scv: w * a.scv + (1.0 - w) * r.scv,
    })
}

/// Context for the hybrid weight: utilization of the queue that the merged stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlbinContext {
    pub utilization: f64,
}

impl Default for AlbinContext {
    fn default() -> Self {
        AlbinContext { utilization: 0.7 }
    }
}

pub fn albin_hybrid(streams: &[StreamSummary], context: AlbinContext) -> Result<StreamSummary> {
    albin_hybrid_with_weight(streams, albin_weight(streams, context.utilization)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    WhittRenewal,
    WhittAsymptotic,
    Albin,
}

impl BaselineMethod {
    /// Table column order.
    pub const ALL: [BaselineMethod; 3] = [
        BaselineMethod::WhittRenewal,
        BaselineMethod::WhittAsymptotic,
        BaselineMethod::Albin,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            BaselineMethod::WhittRenewal => "whitt_r",
            BaselineMethod::WhittAsymptotic => "whitt_a",
            BaselineMethod::Albin => "albin",
        }
    }

    pub fn merge(&self, streams: &[StreamSummary], context: AlbinContext) -> Result<StreamSummary> {
        match self {
            BaselineMethod::WhittRenewal => whitt_stationary_interval(streams),
            BaselineMethod::WhittAsymptotic => whitt_asymptotic(streams),
            BaselineMethod::Albin => albin_hybrid(streams, context),
        }
    }
}

/// Baseline second moment `(1 + scv) · m_S(1)²` of the merged interval.
pub fn baseline_second_moment(
    streams: &[StreamSummary],
    merged_mean: f64,
    method: BaselineMethod,
    context: AlbinContext,
) -> Result<f64> {
    let merged = method.merge(streams, context)?;
    Ok((1.0 + merged.scv) * merged_mean * merged_mean)
}

/// Percentage error of each baseline's second moment against the exact one, in
/// [`BaselineMethod::ALL`] order.
pub fn baseline_pare(
    streams: &[StreamSummary],
    merged_mean: f64,
    exact_m2: f64,
    context: AlbinContext,
) -> Result<Vec<f64>> {
    BaselineMethod::ALL
        .iter()
        .map(|m| {
            let m2 = baseline_second_moment(streams, merged_mean, *m, context)?;
            Ok(100.0 * ((exact_m2 - m2) / exact_m2).abs())
        })
        .collect()
}
