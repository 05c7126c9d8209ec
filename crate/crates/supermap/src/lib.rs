//! File formats, parallel pipelines and command-line plumbing around
//! `supermap-core`: dataset building, training, evaluation tables and
//! queueing simulations, each leaving a run manifest behind.

pub mod bulk;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod eval;
pub mod formats;
pub mod manifest;
pub mod model_io;
pub mod parallel;
pub mod simulation;
pub mod training;

pub use error::{AppError, ExitKind, Result};
