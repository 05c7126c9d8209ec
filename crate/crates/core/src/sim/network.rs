//! The two evaluation topologies: two streams into one station, and two
//! such stations feeding a third.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::station::{run_station, SteadyStateHistogram};
use super::stream::{interarrivals, merge_streams, simulate_map_stream_with};
use crate::error::{Error, Result};
use crate::map::MarkovArrivalProcess;
use crate::ph::PhaseTypeDist;
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub arrivals_per_stream: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            arrivals_per_stream: 2_000_000,
            warmup_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arrivals_per_stream < 2 {
            return Err(Error::structural("arrivals_per_stream must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::structural("warmup_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// RNG stream ids: external streams `0..4`, station services `10..13`.
const SERVICE_STREAM: u64 = 10;

/// The service law stretched to mean `utilization / total_rate`.
pub fn service_for_utilization(shape: &PhaseTypeDist, total_rate: f64, utilization: f64) -> Result<PhaseTypeDist> {
    if !(utilization > 0.0 && utilization < 1.0) {
        return Err(Error::domain("target utilization must be in (0, 1)"));
    }
    if !(total_rate > 0.0 && total_rate.is_finite()) {
        return Err(Error::domain("total arrival rate must be positive"));
    }
    shape.stretched(utilization / total_rate / shape.mean())
}

#[derive(Debug, Clone, PartialEq)]
pub struct System1Run {
    pub histogram: SteadyStateHistogram,
    /// Inter-arrival times of the merged input.
    pub merged_interarrivals: Vec<f64>,
    pub arrivals: usize,
    pub departures: usize,
    pub warning: Option<String>,
}

/// Two MAP streams merged into one FIFO station.
pub fn run_system1(
    map1: &MarkovArrivalProcess,
    map2: &MarkovArrivalProcess,
    service: &PhaseTypeDist,
    config: &SimConfig,
) -> Result<System1Run> {
    config.validate()?;
    let seeds = SeedStream::new(config.seed);
    let e1 = simulate_map_stream_with(map1, config.arrivals_per_stream, &mut seeds.rng(0))?;
    let e2 = simulate_map_stream_with(map2, config.arrivals_per_stream, &mut seeds.rng(1))?;
    let merged = merge_streams(&e1, &e2);
    drop((e1, e2));
    let run = run_station(&merged, service, config.warmup_fraction, &mut seeds.rng(SERVICE_STREAM))?;
    Ok(System1Run {
        histogram: run.histogram,
        merged_interarrivals: interarrivals(&merged),
        arrivals: merged.len(),
        departures: run.departures.len(),
        warning: run.warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct System2Run {
    /// Station `c`.
    pub histogram: SteadyStateHistogram,
    /// Observed utilizations of stations `a`, `b`, `c`; `b` is 0 without input.
    pub utilizations: [f64; 3],
    pub warnings: Vec<String>,
}

/// Stations `a` and `b` each merge their external streams; their departures
/// are merged into station `c`. Station `b` may have no external streams.
pub fn run_system2(
    streams_a: [&MarkovArrivalProcess; 2],
    streams_b: &[&MarkovArrivalProcess],
    services: [&PhaseTypeDist; 3],
    config: &SimConfig,
) -> Result<System2Run> {
    config.validate()?;
    if streams_b.len() > 2 {
        return Err(Error::structural("station b takes at most two external streams"));
    }
    let seeds = SeedStream::new(config.seed);
    let n = config.arrivals_per_stream;
    let mut warnings = Vec::new();

    let ea = merge_streams(
        &simulate_map_stream_with(streams_a[0], n, &mut seeds.rng(0))?,
        &simulate_map_stream_with(streams_a[1], n, &mut seeds.rng(1))?,
    );
    let run_a = run_station(&ea, services[0], config.warmup_fraction, &mut seeds.rng(SERVICE_STREAM))?;
    warnings.extend(run_a.warning.map(|w| alloc::format!("station a: {w}")));

    let mut eb: Vec<f64> = Vec::new();
    for (i, m) in streams_b.iter().enumerate() {
        let e = simulate_map_stream_with(m, n, &mut seeds.rng(2 + i as u64))?;
        eb = if eb.is_empty() { e } else { merge_streams(&eb, &e) };
    }
    let (dep_b, util_b) = if eb.is_empty() {
        (Vec::new(), 0.0)
    } else {
        let run_b = run_station(&eb, services[1], config.warmup_fraction, &mut seeds.rng(SERVICE_STREAM + 1))?;
        warnings.extend(run_b.warning.map(|w| alloc::format!("station b: {w}")));
        (run_b.departures, run_b.histogram.observed_utilization)
    };

    let ec = merge_streams(&run_a.departures, &dep_b);
    let run_c = run_station(&ec, services[2], config.warmup_fraction, &mut seeds.rng(SERVICE_STREAM + 2))?;
    warnings.extend(run_c.warning.map(|w| alloc::format!("station c: {w}")));
    Ok(System2Run {
        utilizations: [
            run_a.histogram.observed_utilization,
            util_b,
            run_c.histogram.observed_utilization,
        ],
        histogram: run_c.histogram,
        warnings,
    })
}
