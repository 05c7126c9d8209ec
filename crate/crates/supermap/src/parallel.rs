//! Thread pools and the sharded training executor.

use rayon::prelude::*;
use supermap_core::error::Result as CoreResult;
use supermap_core::neural::{accumulate_gradient, BatchExecutor, LossParts, MlpModel};

use crate::error::{AppError, Result};

/// Caps the number of worker threads of every parallel stage.
pub const THREADS_ENV: &str = "SUPERMAP_THREADS";

/// Worker count: `SUPERMAP_THREADS` if set, else the available parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(AppError::config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Runs `f` inside a pool of [`thread_count`] workers.
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| AppError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Splits each mini-batch into a fixed number of contiguous shards, computes
/// their gradients in parallel and adds them in shard order. The result
/// depends on the shard count but not on the number of threads.
#[derive(Debug, Clone, Copy)]
pub struct ShardedExecutor {
    pub shards: usize,
}

impl ShardedExecutor {
    pub fn new(shards: usize) -> Self {
        ShardedExecutor { shards: shards.max(1) }
    }
}

impl BatchExecutor for ShardedExecutor {
    fn loss_and_gradient(
        &self,
        model: &MlpModel,
        inputs: &[f64],
        targets: &[f64],
        alpha: f64,
        grad: &mut [f64],
    ) -> CoreResult<LossParts> {
        let (n_in, n_out) = (model.n_in(), model.n_out());
        let rows = inputs.len() / n_in.max(1);
        let per = rows.div_ceil(self.shards).max(1);
        let parts: Vec<CoreResult<(LossParts, Vec<f64>)>> = inputs
            .par_chunks(per * n_in)
            .zip(targets.par_chunks(per * n_out))
            .map(|(x, y)| {
                let mut g = vec![0.0; model.param_count()];
                let loss = accumulate_gradient(model, x, y, alpha, rows, &mut g)?;
                Ok((loss, g))
            })
            .collect();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = LossParts::default();
        for p in parts {
            let (loss, g) = p?;
            total.add(loss);
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok(total)
    }
}
