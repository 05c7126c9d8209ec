//! Test-set evaluation in the regime-table layouts: moment PARE with the
//! three baseline columns, and per-cell correlation MAE.

use std::path::Path;

use serde::{Deserialize, Serialize};
use supermap_core::baselines::{baseline_pare, AlbinContext, BaselineMethod, StreamSummary};
use supermap_core::dataset::LabeledSample;
use supermap_core::metrics::{ErrorAccumulator, PairFeatures, RegimeKey, RegimeTable, Scheme, N_CORR, N_PARE};
use supermap_core::neural::{predict_superposed_batch, MlpModel};
use supermap_core::{DescriptorSet, Grid};

use crate::error::{AppError, Result};

/// Extra accumulator columns: second-moment PARE of each baseline.
pub const BASELINE_COLUMNS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scv: RegimeTable,
    pub rho: RegimeTable,
}

impl EvalReport {
    pub fn overall(&self) -> ErrorAccumulator {
        self.scv.overall()
    }
}

/// Exact descriptors of one record.
pub struct Decoded {
    pub a: DescriptorSet,
    pub b: DescriptorSet,
    pub truth: DescriptorSet,
}

pub fn decode(s: &LabeledSample) -> Result<Decoded> {
    Ok(Decoded {
        a: s.input_a.exp()?,
        b: s.input_b.exp()?,
        truth: s.target.exp()?,
    })
}

/// Second-moment PARE of every baseline for one record, in [`BaselineMethod::ALL`] order.
pub fn baseline_errors(d: &Decoded, ctx: AlbinContext) -> Result<Vec<f64>> {
    let streams = [
        StreamSummary::new(d.a.rate(), d.a.scv())?,
        StreamSummary::new(d.b.rate(), d.b.scv())?,
    ];
    Ok(baseline_pare(&streams, d.truth.mean(), d.truth.moment(2), ctx)?)
}

/// Runs the model on every record and fills both regime tables.
pub fn evaluate(model: &MlpModel, samples: &[LabeledSample], ctx: AlbinContext) -> Result<EvalReport> {
    let grid = model
        .input_grid()
        .ok_or_else(|| AppError::config("model has no input grid tag"))?;
    let decoded: Vec<Decoded> = samples
        .iter()
        .map(|s| {
            if s.input_a.grid != grid {
                return Err(AppError::config(format!(
                    "dataset grid {} does not match the model's {}",
                    s.input_a.grid, grid
                )));
            }
            decode(s)
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(DescriptorSet, DescriptorSet)> = decoded.iter().map(|d| (d.a.clone(), d.b.clone())).collect();
    let preds = predict_superposed_batch(model, &pairs)?;

    let mut scv = RegimeTable::new(Scheme::Scv);
    let mut rho = RegimeTable::new(Scheme::Rho);
    for (d, p) in decoded.iter().zip(&preds) {
        let f = PairFeatures::from_descriptors(&d.a, &d.b);
        let extra = baseline_errors(d, ctx)?;
        for (table, key) in [(&mut scv, f.scv_key()), (&mut rho, f.rho_key())] {
            let row = table.row_mut(&key)?;
            row.add(&d.truth, p)?;
            row.add_extra(&extra);
        }
    }
    Ok(EvalReport { scv, rho })
}

/// One regime row of the dominance check: the network's second-moment PARE
/// must be at least `factor` times below Whitt-A and strictly below Albin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceRow {
    pub labels: Vec<String>,
    pub count: usize,
    pub nn: f64,
    pub whitt_asymptotic: f64,
    pub albin: f64,
    pub holds: bool,
}

pub fn dominance(table: &RegimeTable, factor: f64) -> Vec<DominanceRow> {
    let col = |m: BaselineMethod| BaselineMethod::ALL.iter().position(|x| *x == m).unwrap_or(0);
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let extra = r.extra();
            let nn = r.pare()[0];
            let wa = extra.get(col(BaselineMethod::WhittAsymptotic)).copied().unwrap_or(f64::NAN);
            let al = extra.get(col(BaselineMethod::Albin)).copied().unwrap_or(f64::NAN);
            DominanceRow {
                labels: RegimeKey::from_index(table.scheme, i).labels(),
                count: r.count,
                nn,
                whitt_asymptotic: wa,
                albin: al,
                holds: r.count > 0 && factor * nn <= wa && nn < al,
            }
        })
        .collect()
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> AppError {
    AppError::format(path, e.to_string())
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        String::new()
    }
}

/// Moment table: regime columns, count, PARE of m(2..5), then the baselines'
/// second-moment PARE.
pub fn write_moment_table(table: &RegimeTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = vec!["row".into()];
    header.extend(table.scheme.columns().iter().map(|s| s.to_string()));
    header.push("count".into());
    header.extend((2..2 + N_PARE).map(|i| format!("pare_m{i}")));
    header.extend(BaselineMethod::ALL.iter().map(|m| format!("{}_m2", m.label())));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, r) in table.rows.iter().enumerate() {
        let mut rec: Vec<String> = vec![(i + 1).to_string()];
        rec.extend(RegimeKey::from_index(table.scheme, i).labels());
        rec.push(r.count.to_string());
        rec.extend(r.pare().iter().map(|v| fmt(*v)));
        let extra = r.extra();
        rec.extend((0..BASELINE_COLUMNS).map(|j| fmt(extra.get(j).copied().unwrap_or(f64::NAN))));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Correlation table: regime columns, count, MAE of each of the eight cells.
pub fn write_corr_table(table: &RegimeTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = vec!["row".into()];
    header.extend(table.scheme.columns().iter().map(|s| s.to_string()));
    header.push("count".into());
    header.extend(Grid::TARGET.cells().map(|(k, a1, a2)| format!("mae_rho_{k}_{a1}_{a2}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, r) in table.rows.iter().enumerate() {
        let mut rec: Vec<String> = vec![(i + 1).to_string()];
        rec.extend(RegimeKey::from_index(table.scheme, i).labels());
        rec.push(r.count.to_string());
        rec.extend(r.corr_mae().iter().map(|v| fmt(*v)));
        debug_assert_eq!(r.corr_mae().len(), N_CORR);
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Pooled test-set numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub samples: usize,
    pub pare: [f64; N_PARE],
    pub corr_mae: [f64; N_CORR],
    pub corr_mae_overall: f64,
    pub baseline_m2_pare: Vec<f64>,
    pub dominance: Vec<DominanceRow>,
}

pub fn summarize(report: &EvalReport) -> EvalSummary {
    let o = report.overall();
    EvalSummary {
        samples: o.count,
        pare: o.pare(),
        corr_mae: o.corr_mae(),
        corr_mae_overall: o.corr_mae_overall(),
        baseline_m2_pare: o.extra(),
        dominance: dominance(&report.scv, 5.0),
    }
}
