//! Single-server FIFO station driven by a given arrival sequence.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::HIST_LEN;
use crate::ph::PhaseTypeDist;
use crate::rng::StreamRng;

/// Time-average distribution of the number in system over the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateHistogram {
    /// `probs[i]` for `i < 500`.
    pub probs: Vec<f64>,
    /// Mass at 500 or more customers.
    pub overflow: f64,
    pub mean_in_system: f64,
    /// Fraction of the window with a busy server.
    pub observed_utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationRun {
    pub histogram: SteadyStateHistogram,
    /// Departure epochs in arrival order.
    pub departures: Vec<f64>,
    /// Set when the offered load `λ E[S]` is at least 1.
    pub warning: Option<String>,
}

/// FIFO single server: `D_n = max(A_n, D_{n-1}) + S_n`. The window runs from
/// `warmup_fraction · T` to `T`, the last arrival epoch.
pub fn run_station(
    arrivals: &[f64],
    service: &PhaseTypeDist,
    warmup_fraction: f64,
    rng: &mut StreamRng,
) -> Result<StationRun> {
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(Error::structural(format!("warmup fraction {warmup_fraction} outside [0, 1)")));
    }
    let horizon = match arrivals.last() {
        Some(t) if *t > 0.0 => *t,
        _ => return Err(Error::domain("station needs arrivals after time 0")),
    };
    let sampler = service.sampler();
    let mut departures = Vec::with_capacity(arrivals.len());
    let mut last = 0.0f64;
    for &a in arrivals {
        last = last.max(a) + sampler.sample(rng);
        departures.push(last);
    }

    let start = warmup_fraction * horizon;
    let mut time_in = vec![0.0; HIST_LEN];
    let mut overflow = 0.0;
    let mut area = 0.0;
    let mut n: usize = 0;
    let mut t_prev = 0.0f64;
    let (mut i, mut j) = (0, 0);
    let account = |n: usize, from: f64, to: f64, time_in: &mut [f64], overflow: &mut f64, area: &mut f64| {
        let lo = from.max(start);
        let hi = to.min(horizon);
        if hi > lo {
            let dt = hi - lo;
            if n < HIST_LEN {
                time_in[n] += dt;
            } else {
                *overflow += dt;
            }
            *area += n as f64 * dt;
        }
    };
    while i < arrivals.len() {
        let arrival_next = j >= departures.len() || arrivals[i] <= departures[j];
        let t = if arrival_next { arrivals[i] } else { departures[j] };
        if t > horizon {
            break;
        }
        account(n, t_prev, t, &mut time_in, &mut overflow, &mut area);
        t_prev = t;
        if arrival_next {
            n += 1;
            i += 1;
        } else {
            n -= 1;
            j += 1;
        }
    }
    account(n, t_prev, horizon, &mut time_in, &mut overflow, &mut area);

    let window = horizon - start;
    let probs: Vec<f64> = time_in.iter().map(|t| t / window).collect();
    let overflow = overflow / window;
    let histogram = SteadyStateHistogram {
        observed_utilization: 1.0 - probs[0],
        mean_in_system: area / window,
        probs,
        overflow,
    };
    let load = arrivals.len() as f64 / horizon * service.mean();
    let warning = (load >= 1.0).then(|| format!("offered load {load:.4} is not below 1; the queue is unstable"));
    Ok(StationRun {
        histogram,
        departures,
        warning,
    })
}

/// Geometric M/M/1 distribution `(1-ρ) ρ^i`, truncated at 500 entries.
pub fn mm1_distribution(rho: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(HIST_LEN);
    let mut x = 1.0 - rho;
    for _ in 0..HIST_LEN {
        p.push(x);
        x *= rho;
    }
    p
}
