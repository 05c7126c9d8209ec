//! Scenario files, the 64-class System 1 and System 2 grids, and result CSVs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use supermap_core::generators::SamplerConfig;
use supermap_core::map::MarkovArrivalProcess;
use supermap_core::metrics::{mae, mape, RegimeKey, HIST_LEN};
use supermap_core::neural::{predict_superposed, MlpModel};
use supermap_core::ph::PhSpec;
use supermap_core::sim::{
    empirical_descriptors, run_system1, run_system2, service_for_utilization, system1_grid, system2_grid, SimConfig,
    SteadyStateHistogram,
};
use supermap_core::{DescriptorSet, Grid};

use crate::error::{AppError, Result};
use crate::formats::{read_map, MapFile};

/// Where a stream comes from in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StreamSource {
    /// MAP file, relative to the scenario file.
    File { file: PathBuf },
    Poisson { poisson_rate: f64 },
    Inline(MapFile),
}

impl StreamSource {
    pub fn load(&self, base: &Path) -> Result<MarkovArrivalProcess> {
        match self {
            StreamSource::File { file } => read_map(&base.join(file)),
            StreamSource::Poisson { poisson_rate } => Ok(MarkovArrivalProcess::poisson(*poisson_rate)?),
            StreamSource::Inline(m) => m.to_map(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    System1,
    System2,
}

/// A single simulation run described in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub topology: Topology,
    /// The two external streams of the first station.
    pub streams_a: Vec<StreamSource>,
    /// System 2 only: up to two external streams of station `b`.
    #[serde(default)]
    pub streams_b: Vec<StreamSource>,
    /// One service law for System 1; `a`, `b`, `c` for System 2.
    pub services: Vec<PhSpec>,
    /// Optional per-station target utilizations; services are stretched to meet them.
    #[serde(default)]
    pub utilization: Option<Vec<f64>>,
    #[serde(default)]
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub topology: Topology,
    /// Observed utilization of every station.
    pub utilizations: Vec<f64>,
    /// Histogram of the last station.
    pub histogram: SteadyStateHistogram,
    /// Empirical descriptor of the System 1 merged input.
    pub merged: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

fn total_rate(maps: &[MarkovArrivalProcess]) -> Result<f64> {
    maps.iter().map(|m| Ok(m.rate()?)).sum()
}

pub fn run_scenario(spec: &ScenarioSpec, base: &Path) -> Result<ScenarioResult> {
    let a: Vec<MarkovArrivalProcess> = spec.streams_a.iter().map(|s| s.load(base)).collect::<Result<_>>()?;
    let b: Vec<MarkovArrivalProcess> = spec.streams_b.iter().map(|s| s.load(base)).collect::<Result<_>>()?;
    let mut services = spec.services.iter().map(|s| Ok(s.build()?)).collect::<Result<Vec<_>>>()?;
    if a.len() != 2 {
        return Err(AppError::config("streams_a must list exactly two streams"));
    }
    let stations = match spec.topology {
        Topology::System1 => 1,
        Topology::System2 => 3,
    };
    if services.len() != stations {
        return Err(AppError::config(format!("{stations} service laws expected, found {}", services.len())));
    }
    if let Some(u) = &spec.utilization {
        if u.len() != stations {
            return Err(AppError::config(format!("{stations} utilizations expected, found {}", u.len())));
        }
        let (ra, rb) = (total_rate(&a)?, total_rate(&b)?);
        let rates = [ra, rb, ra + rb];
        let order: &[usize] = if stations == 1 { &[0] } else { &[0, 1, 2] };
        for (i, &station) in order.iter().enumerate() {
            if rates[station] > 0.0 {
                services[i] = service_for_utilization(&services[i], rates[station], u[i])?;
            }
        }
    }
    match spec.topology {
        Topology::System1 => {
            if !b.is_empty() {
                return Err(AppError::config("streams_b is only used by system2"));
            }
            let run = run_system1(&a[0], &a[1], &services[0], &spec.sim)?;
            let merged = empirical_descriptors(&run.merged_interarrivals, Grid::TARGET).ok();
            Ok(ScenarioResult {
                name: spec.name.clone(),
                topology: spec.topology,
                utilizations: vec![run.histogram.observed_utilization],
                histogram: run.histogram,
                merged: merged.map(|d| d.moments().iter().chain(d.autocorr()).copied().collect()),
                warnings: run.warning.into_iter().collect(),
            })
        }
        Topology::System2 => {
            let b_refs: Vec<&MarkovArrivalProcess> = b.iter().collect();
            let run = run_system2([&a[0], &a[1]], &b_refs, [&services[0], &services[1], &services[2]], &spec.sim)?;
            Ok(ScenarioResult {
                name: spec.name.clone(),
                topology: spec.topology,
                utilizations: run.utilizations.to_vec(),
                histogram: run.histogram,
                merged: None,
                warnings: run.warnings,
            })
        }
    }
}

/// `name, topology, utilization, mean_in_system, overflow, p0 .. p499`.
pub fn write_histograms<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a SteadyStateHistogram)>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    let mut header: Vec<String> = ["name", "topology", "utilization", "mean_in_system", "overflow"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..HIST_LEN).map(|i| format!("p{i}")));
    w.write_record(&header).map_err(|e| AppError::format(path, e.to_string()))?;
    for (name, topology, h) in rows {
        let mut rec = vec![
            name.to_string(),
            topology.to_string(),
            h.observed_utilization.to_string(),
            h.mean_in_system.to_string(),
            h.overflow.to_string(),
        ];
        rec.extend(h.probs.iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(|e| AppError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Settings of the regime-grid runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridRunConfig {
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub sim: SimConfig,
    /// Zero-based table rows to run; empty runs all 64.
    pub rows: Vec<usize>,
}

impl Default for GridRunConfig {
    fn default() -> Self {
        GridRunConfig {
            seed: 0,
            sampler: SamplerConfig {
                max_stream_dim: 30,
                ..SamplerConfig::default()
            },
            sim: SimConfig::default(),
            rows: Vec::new(),
        }
    }
}

impl GridRunConfig {
    fn selected(&self, i: usize) -> bool {
        self.rows.is_empty() || self.rows.contains(&i)
    }
}

/// Descriptor-level comparison of a predicted merged stream with the
/// simulated one: PARE of m(2..5) and the correlation MAE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorError {
    pub pare_m2: f64,
    pub pare_m3_m5: f64,
    pub corr_mae: f64,
}

impl DescriptorError {
    pub fn between(empirical: &DescriptorSet, predicted: &DescriptorSet) -> Result<Self> {
        let e = &empirical.moments()[1..5];
        let p = &predicted.moments()[1..5];
        Ok(DescriptorError {
            pare_m2: mape(&e[..1], &p[..1])?,
            pare_m3_m5: mape(&e[1..], &p[1..])?,
            corr_mae: mae(empirical.autocorr(), predicted.autocorr())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System1Row {
    pub row: usize,
    pub labels: Vec<String>,
    pub target_utilization: f64,
    pub histogram: SteadyStateHistogram,
    pub empirical: Vec<f64>,
    /// Exact Kronecker descriptor against the simulation.
    pub exact_error: DescriptorError,
    /// Network prediction against the simulation, when a model is given.
    pub nn_error: Option<DescriptorError>,
    pub warning: Option<String>,
}

/// Runs the selected System 1 classes in parallel, one replication each.
pub fn run_system1_grid(cfg: &GridRunConfig, model: Option<&MlpModel>) -> Result<Vec<System1Row>> {
    let scenarios = system1_grid(cfg.seed, &cfg.sampler)?;
    let grid = model.and_then(|m| m.input_grid());
    scenarios
        .par_iter()
        .enumerate()
        .filter(|(i, _)| cfg.selected(*i))
        .map(|(i, sc)| {
            let sim = SimConfig {
                seed: cfg.sim.seed.wrapping_add(i as u64),
                ..cfg.sim.clone()
            };
            let run = run_system1(&sc.map1, &sc.map2, &sc.service()?, &sim)?;
            let empirical = empirical_descriptors(&run.merged_interarrivals, Grid::TARGET)?;
            let exact = sc.map1.superpose(&sc.map2)?.descriptor_set(Grid::TARGET)?;
            let nn_error = match (model, grid) {
                (Some(m), Some(g)) => {
                    let p = predict_superposed(m, &sc.map1.descriptor_set(g)?, &sc.map2.descriptor_set(g)?)?;
                    Some(DescriptorError::between(&empirical, &p)?)
                }
                _ => None,
            };
            Ok(System1Row {
                row: i,
                labels: sc.key.labels(),
                target_utilization: sc.utilization,
                histogram: run.histogram,
                empirical: empirical.moments().iter().chain(empirical.autocorr()).copied().collect(),
                exact_error: DescriptorError::between(&empirical, &exact)?,
                nn_error,
                warning: run.warning,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System2Row {
    pub row: usize,
    pub labels: Vec<String>,
    pub target_utilization: f64,
    pub utilizations: [f64; 3],
    pub histogram: SteadyStateHistogram,
    pub warnings: Vec<String>,
}

pub fn run_system2_grid(cfg: &GridRunConfig) -> Result<Vec<System2Row>> {
    let scenarios = system2_grid(cfg.seed, &cfg.sampler)?;
    scenarios
        .par_iter()
        .enumerate()
        .filter(|(i, _)| cfg.selected(*i))
        .map(|(i, sc)| {
            let sim = SimConfig {
                seed: cfg.sim.seed.wrapping_add(i as u64),
                ..cfg.sim.clone()
            };
            let [sa, sb, scc] = sc.services()?;
            let b: Vec<&MarkovArrivalProcess> = sc.streams_b.iter().collect();
            let run = run_system2([&sc.streams_a[0], &sc.streams_a[1]], &b, [&sa, &sb, &scc], &sim)?;
            Ok(System2Row {
                row: i,
                labels: sc.key.labels(),
                target_utilization: sc.utilization,
                utilizations: run.utilizations,
                histogram: run.histogram,
                warnings: run.warnings,
            })
        })
        .collect()
}

fn labels_header(extra: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = vec!["row".into()];
    h.extend(supermap_core::metrics::Scheme::System.columns().iter().map(|s| s.to_string()));
    h.extend(extra.iter().map(|s| s.to_string()));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// System 1 table: class columns, then simulation and descriptor-error columns.
pub fn write_system1_table(rows: &[System1Row], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    w.write_record(labels_header(&[
        "target_utilization",
        "observed_utilization",
        "mean_in_system",
        "overflow",
        "nn_pare_m2",
        "nn_pare_m3_m5",
        "nn_corr_mae",
        "exact_pare_m2",
        "exact_pare_m3_m5",
        "exact_corr_mae",
        "warning",
    ]))
    .map_err(|e| AppError::format(path, e.to_string()))?;
    for r in rows {
        let mut rec = vec![(r.row + 1).to_string()];
        rec.extend(r.labels.iter().cloned());
        rec.extend([
            format!("{:.4}", r.target_utilization),
            format!("{:.4}", r.histogram.observed_utilization),
            format!("{:.4}", r.histogram.mean_in_system),
            format!("{:.2e}", r.histogram.overflow),
            opt(r.nn_error.map(|e| e.pare_m2)),
            opt(r.nn_error.map(|e| e.pare_m3_m5)),
            opt(r.nn_error.map(|e| e.corr_mae)),
            format!("{:.6}", r.exact_error.pare_m2),
            format!("{:.6}", r.exact_error.pare_m3_m5),
            format!("{:.6}", r.exact_error.corr_mae),
            r.warning.clone().unwrap_or_default(),
        ]);
        w.write_record(&rec).map_err(|e| AppError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn write_system2_table(rows: &[System2Row], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    w.write_record(labels_header(&[
        "target_utilization",
        "utilization_a",
        "utilization_b",
        "utilization_c",
        "mean_in_system_c",
        "overflow_c",
        "warnings",
    ]))
    .map_err(|e| AppError::format(path, e.to_string()))?;
    for r in rows {
        let mut rec = vec![(r.row + 1).to_string()];
        rec.extend(r.labels.iter().cloned());
        rec.push(format!("{:.4}", r.target_utilization));
        rec.extend(r.utilizations.iter().map(|u| format!("{u:.4}")));
        rec.push(format!("{:.4}", r.histogram.mean_in_system));
        rec.push(format!("{:.2e}", r.histogram.overflow));
        rec.push(r.warnings.join("; "));
        w.write_record(&rec).map_err(|e| AppError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Key of a grid row, for callers that index results by regime.
pub fn row_key(row: usize) -> RegimeKey {
    RegimeKey::from_index(supermap_core::metrics::Scheme::System, row)
}
