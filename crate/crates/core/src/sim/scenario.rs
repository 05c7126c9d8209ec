//! Random scenarios for each of the 64 system regime classes.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::generators::{generate, rescale_pair_member, GeneratorConfig, Method, SamplerConfig};
use crate::map::MarkovArrivalProcess;
use crate::metrics::{RegimeKey, Scheme, Split, SCV_THRESHOLD};
use crate::ph::{fit_two_moment, PhaseTypeDist};
use crate::rng::{SeedStream, StreamRng};

/// Attempts allowed when drawing a stream for a class.
pub const MAX_CLASS_DRAWS: usize = 20_000;

/// A stream class: SCV side of 3 and sign of the lag-1 correlation
/// (`Below` is negative).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamClass {
    pub scv: Split,
    pub rho: Split,
}

/// Draws a unit-mean MAP whose SCV and lag-1 correlation fall in `class`.
pub fn draw_stream_for_class(
    class: StreamClass,
    sampler: &SamplerConfig,
    rng: &mut StreamRng,
) -> Result<(MarkovArrivalProcess, GeneratorConfig)> {
    for _ in 0..MAX_CLASS_DRAWS {
        let method = if class.scv == Split::AtLeast {
            Method::Mild
        } else {
            sampler.pick_method(rng)
        };
        let method = match (method, class.rho) {
            (Method::StrongPositive, Split::Below) => Method::StrongNegative,
            (Method::StrongNegative, Split::AtLeast) => Method::StrongPositive,
            (m, _) => m,
        };
        let mut config = sampler.draw_config(method, rng);
        if method == Method::Mild {
            let r = config.rho_target.abs().max(0.02);
            config.rho_target = if class.rho == Split::Below { -r } else { r };
            if class.scv == Split::AtLeast {
                config.heavy_marginals = true;
            }
        }
        let map = generate(&config)?;
        if map.dim() > sampler.max_stream_dim {
            continue;
        }
        let m = map.interarrival_moments(2)?;
        let scv = m[1] / (m[0] * m[0]) - 1.0;
        let rho = map.lag_autocorrelation(1, 1, 1)?;
        if Split::of(scv, SCV_THRESHOLD) == class.scv && Split::of(rho, 0.0) == class.rho {
            return Ok((map, config));
        }
    }
    Err(Error::domain(format!("no stream found for class {class:?}")))
}

/// Unit-mean renewal service law with SCV in `[0.25, 2.75]` or `[3, 8]`.
pub fn draw_service_for_class(scv: Split, rng: &mut StreamRng) -> Result<PhaseTypeDist> {
    let target = match scv {
        Split::Below => rng.random_range(0.25..2.75),
        Split::AtLeast => rng.random_range(3.0..8.0),
    };
    fit_two_moment(1.0, target)
}

/// Utilization in `[0.4, 0.68]` or `[0.7, 0.8]`.
pub fn draw_utilization(util: Split, rng: &mut StreamRng) -> f64 {
    match util {
        Split::Below => rng.random_range(0.4..0.68),
        Split::AtLeast => rng.random_range(0.7..0.8),
    }
}

/// One station fed by two streams.
#[derive(Debug, Clone)]
pub struct System1Scenario {
    pub key: RegimeKey,
    /// Unit-mean stream.
    pub map1: MarkovArrivalProcess,
    /// Stream with mean `mean_ratio ≤ 1`.
    pub map2: MarkovArrivalProcess,
    pub mean_ratio: f64,
    /// Unit-mean service shape; stretch it with the utilization before use.
    pub service_shape: PhaseTypeDist,
    pub utilization: f64,
}

impl System1Scenario {
    /// Service law giving the target utilization.
    pub fn service(&self) -> Result<PhaseTypeDist> {
        let rate = 1.0 + 1.0 / self.mean_ratio;
        crate::sim::network::service_for_utilization(&self.service_shape, rate, self.utilization)
    }
}

/// A scenario for system key `key`, drawn from stream `index` of `seeds`.
pub fn draw_system1_scenario(
    key: RegimeKey,
    seeds: &SeedStream,
    index: u64,
    sampler: &SamplerConfig,
) -> Result<System1Scenario> {
    let RegimeKey::System {
        scv1,
        scv2,
        service,
        rho1,
        rho2,
        util,
    } = key
    else {
        return Err(Error::structural("system scenarios need a system regime key"));
    };
    let mut rng = seeds.rng(index);
    let (map1, _) = draw_stream_for_class(StreamClass { scv: scv1, rho: rho1 }, sampler, &mut rng)?;
    let (map2, _) = draw_stream_for_class(StreamClass { scv: scv2, rho: rho2 }, sampler, &mut rng)?;
    let mean_ratio = rng.random_range(sampler.scale.lo..=sampler.scale.hi);
    let map2 = rescale_pair_member(&map2, mean_ratio)?;
    Ok(System1Scenario {
        key,
        map1,
        map2,
        mean_ratio,
        service_shape: draw_service_for_class(service, &mut rng)?,
        utilization: draw_utilization(util, &mut rng),
    })
}

/// One scenario per system key, in table row order.
pub fn system1_grid(seed: u64, sampler: &SamplerConfig) -> Result<Vec<System1Scenario>> {
    let seeds = SeedStream::new(seed);
    Scheme::System
        .keys()
        .into_iter()
        .map(|k| draw_system1_scenario(k, &seeds, k.index() as u64, sampler))
        .collect()
}

/// Two stations of System-1 shape whose departures merge into a third.
/// Every station runs at the same target utilization.
#[derive(Debug, Clone)]
pub struct System2Scenario {
    pub key: RegimeKey,
    /// External pairs of stations `a` and `b`, each drawn like a System-1 pair.
    pub streams_a: [MarkovArrivalProcess; 2],
    pub streams_b: [MarkovArrivalProcess; 2],
    /// Unit-mean service shapes of stations `a`, `b`, `c`.
    pub service_shapes: [PhaseTypeDist; 3],
    pub utilization: f64,
}

impl System2Scenario {
    /// Service laws of `a`, `b`, `c` at the target utilization.
    pub fn services(&self) -> Result<[PhaseTypeDist; 3]> {
        let rate = |pair: &[MarkovArrivalProcess; 2]| -> Result<f64> { Ok(pair[0].rate()? + pair[1].rate()?) };
        let (ra, rb) = (rate(&self.streams_a)?, rate(&self.streams_b)?);
        let u = self.utilization;
        Ok([
            crate::sim::network::service_for_utilization(&self.service_shapes[0], ra, u)?,
            crate::sim::network::service_for_utilization(&self.service_shapes[1], rb, u)?,
            crate::sim::network::service_for_utilization(&self.service_shapes[2], ra + rb, u)?,
        ])
    }
}

/// A System-2 scenario for `key`: the stream and service classes apply to
/// both upstream stations and the service class to all three stations.
pub fn draw_system2_scenario(
    key: RegimeKey,
    seeds: &SeedStream,
    index: u64,
    sampler: &SamplerConfig,
) -> Result<System2Scenario> {
    let RegimeKey::System {
        scv1,
        scv2,
        service,
        rho1,
        rho2,
        util,
    } = key
    else {
        return Err(Error::structural("system scenarios need a system regime key"));
    };
    let mut rng = seeds.rng(index);
    let pair = |rng: &mut StreamRng| -> Result<[MarkovArrivalProcess; 2]> {
        let (m1, _) = draw_stream_for_class(StreamClass { scv: scv1, rho: rho1 }, sampler, rng)?;
        let (m2, _) = draw_stream_for_class(StreamClass { scv: scv2, rho: rho2 }, sampler, rng)?;
        let ratio = rng.random_range(sampler.scale.lo..=sampler.scale.hi);
        Ok([m1, rescale_pair_member(&m2, ratio)?])
    };
    let streams_a = pair(&mut rng)?;
    let streams_b = pair(&mut rng)?;
    let service_shapes = [
        draw_service_for_class(service, &mut rng)?,
        draw_service_for_class(service, &mut rng)?,
        draw_service_for_class(service, &mut rng)?,
    ];
    Ok(System2Scenario {
        key,
        streams_a,
        streams_b,
        service_shapes,
        utilization: draw_utilization(util, &mut rng),
    })
}

/// One System-2 scenario per system key, in table row order.
pub fn system2_grid(seed: u64, sampler: &SamplerConfig) -> Result<Vec<System2Scenario>> {
    let seeds = SeedStream::new(seed).child(2);
    Scheme::System
        .keys()
        .into_iter()
        .map(|k| draw_system2_scenario(k, &seeds, k.index() as u64, sampler))
        .collect()
}
