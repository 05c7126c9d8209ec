//! Model training on labeled records and the descriptor-grid sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};
use supermap_core::baselines::AlbinContext;
use supermap_core::dataset::{grid_variants, LabeledSample};
use supermap_core::neural::{
    default_layer_sizes, init_model, train_with_observer, BatchExecutor, EpochRecord, SerialExecutor, TrainConfig,
    TrainData, TrainFailure, TrainOutcome,
};
use supermap_core::metrics::{N_CORR, N_PARE};
use supermap_core::Grid;

use crate::error::{AppError, Result};
use crate::eval::evaluate;
use crate::parallel::ShardedExecutor;

/// Training settings plus the optional gradient sharding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainJob {
    pub train: TrainConfig,
    /// Mini-batch gradient shards; 0 trains single-threaded. Results depend
    /// on this number but not on the thread count.
    pub shards: usize,
}

impl Default for TrainJob {
    fn default() -> Self {
        TrainJob {
            train: TrainConfig::default(),
            shards: 0,
        }
    }
}

/// Trains a fresh network with the default hidden layers on the records' grid.
pub fn train_model(
    train: &[LabeledSample],
    val: &[LabeledSample],
    job: &TrainJob,
    observer: &mut dyn FnMut(&EpochRecord),
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let first = train
        .first()
        .ok_or_else(|| supermap_core::error::Error::Domain("empty training split".into()))?;
    let grid = first.input_a.grid;
    let mut model = init_model(&default_layer_sizes(grid), job.train.seed)?;
    model.with_grids(Some(grid), Grid::TARGET)?;
    let train_data = TrainData::from_samples(train)?;
    let val_data = TrainData::from_samples(val)?;
    let sharded;
    let executor: &dyn BatchExecutor = if job.shards == 0 {
        &SerialExecutor
    } else {
        sharded = ShardedExecutor::new(job.shards);
        &sharded
    };
    train_with_observer(model, &train_data, &val_data, &job.train, executor, observer)
}

/// Test metrics of one sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_mom: usize,
    pub n_lag: usize,
    pub n_pow: usize,
    pub input_len: usize,
    pub best_epoch: usize,
    pub val_loss: f64,
    pub pare_m2: f64,
    pub pare_m3: f64,
    pub pare_m4: f64,
    pub pare_m5: f64,
    pub corr_mae: f64,
}

/// Trains one model per grid on restricted copies of the same records.
/// The records must be labeled on a grid covering every requested one.
pub fn sweep(
    train: &[LabeledSample],
    val: &[LabeledSample],
    test: &[LabeledSample],
    grids: &[Grid],
    job: &TrainJob,
) -> Result<Vec<SweepRow>> {
    let tr = grid_variants(train, grids)?;
    let va = grid_variants(val, grids)?;
    let te = grid_variants(test, grids)?;
    let mut rows = Vec::with_capacity(grids.len());
    for (((g, tr), (_, va)), (_, te)) in tr.into_iter().zip(va).zip(te) {
        log::info!("sweep: training on grid {g}");
        let out = train_model(&tr, &va, job, &mut |_| {}).map_err(|f| AppError::Core(f.error))?;
        let report = evaluate(&out.model, &te, AlbinContext::default())?;
        let o = report.overall();
        let pare: [f64; N_PARE] = o.pare();
        let best = out.history.iter().find(|r| r.epoch == out.best_epoch);
        rows.push(SweepRow {
            n_mom: g.n_mom,
            n_lag: g.n_lag,
            n_pow: g.n_pow,
            input_len: 2 * g.feature_len(),
            best_epoch: out.best_epoch,
            val_loss: best.map(|r| r.val_loss).unwrap_or(f64::NAN),
            pare_m2: pare[0],
            pare_m3: pare[1],
            pare_m4: pare[2],
            pare_m5: pare[3],
            corr_mae: o.corr_mae().iter().sum::<f64>() / N_CORR as f64,
        });
    }
    Ok(rows)
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| AppError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}
