//! Exact algebra, generators and a learned superposition operator for
//! Markovian arrival processes (MAPs).
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and an explicit seed; file formats, parallel
//! orchestration and the command line live in the `supermap` crate.
//!
//! Module map:
//!
//! * [`linalg`]: dense row-major matrices and an LU factorization.
//! * [`map`]: MAP validation, stationary analysis, moments, lag-power
//!   autocorrelations, Kronecker superposition and time scaling.
//! * [`ph`]: phase-type building blocks (Erlang, two-branch
//!   hyperexponential, mixtures, two-moment fits).
//! * [`generators`]: the three structured MAP families and pair sampling.
//! * [`dataset`]: labeling of MAP pairs and descriptor-grid bookkeeping.
//! * [`neural`]: the fully connected regressor, its loss, an Adam-style
//!   trainer and the time-rescaling inference wrapper.
//! * [`baselines`]: classical merged-SCV approximations.
//! * [`metrics`]: MAPE/MAE/SAE/REM and regime partitions.
//! * [`sim`]: discrete-event ground truth for single stations and the two
//!   small network topologies.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod dataset;
pub mod descriptor;
pub mod error;
pub mod generators;
pub mod linalg;
pub mod map;
pub mod metrics;
pub mod neural;
pub mod ph;
pub mod rng;
pub mod sim;

pub use descriptor::{DescriptorSet, Grid};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use map::MarkovArrivalProcess;
pub use ph::PhaseTypeDist;

/// `n!` as a float. Exact for the small orders used here.
pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}
