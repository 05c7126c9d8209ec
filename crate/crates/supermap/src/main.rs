use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use supermap_core::baselines::{AlbinContext, BaselineMethod, StreamSummary};
use supermap_core::dataset::{covering_grid, sweep_grids, DatasetSplit};
use supermap_core::generators::{generate, GeneratorConfig};
use supermap_core::neural::predict_superposed;
use supermap_core::Grid;

use supermap::bulk::{bulk_manifest_path, generate_pairs, BulkConfig};
use supermap::config::layered;
use supermap::dataset_io::{build_dataset, load_manifest, load_split, manifest_path, DatasetConfig};
use supermap::eval::{evaluate, summarize, write_corr_table, write_moment_table};
use supermap::formats::{read_json, read_text, write_json, write_map, DescriptorFile, StreamFile};
use supermap::manifest::{run_manifest_path, RunRecorder};
use supermap::model_io::{load_model, load_model_file, save_model, write_history, ModelProvenance};
use supermap::parallel::with_pool;
use supermap::simulation::{
    run_scenario, run_system1_grid, run_system2_grid, write_histograms, write_system1_table, write_system2_table,
    GridRunConfig, ScenarioSpec,
};
use supermap::training::{sweep, train_model, write_sweep, TrainJob};
use supermap::{AppError, Result};

/// Superposition of Markovian arrival processes: data, training, evaluation and simulation.
#[derive(Parser)]
#[command(name = "supermap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration layers shared by every command: defaults, then `--config`,
/// then `--set` overrides, then the command's own flags.
#[derive(Args)]
struct Layers {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override such as `sampler.max_stream_dim=30`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Layers {
    fn resolve<T: Serialize + for<'de> Deserialize<'de>>(&self, defaults: &T, flags: Vec<Option<String>>) -> Result<T> {
        let mut overrides = self.set.clone();
        overrides.extend(flags.into_iter().flatten());
        layered(defaults, self.config.as_deref(), &overrides)
    }
}

fn flag<V: ToString>(key: &str, v: Option<V>) -> Option<String> {
    v.map(|v| format!("{key}={}", v.to_string()))
}

fn quoted(key: &str, v: Option<&str>) -> Option<String> {
    v.map(|v| format!("{key}={}", serde_json::Value::String(v.to_string())))
}

#[derive(Subcommand)]
enum Command {
    /// Sample MAP pairs in bulk, or one MAP from explicit generator parameters.
    Generate(GenerateArgs),
    /// Label MAP pairs with their exact superposed descriptors.
    Label(LabelArgs),
    /// Train the superposition network on a labeled dataset.
    Train(TrainArgs),
    /// Regime tables of a model and the baselines on one dataset split.
    Eval(EvalArgs),
    /// Descriptor of the superposition of two streams.
    Superpose(SuperposeArgs),
    /// Two-moment merging approximations for two streams.
    Baseline(BaselineArgs),
    /// Queueing simulations: one scenario file or a full regime grid.
    Simulate(SimulateArgs),
    /// Train and test one model per descriptor grid of a sweep box.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    StrongNegative,
    StrongPositive,
    Mild,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::StrongNegative => "strong_negative",
            MethodArg::StrongPositive => "strong_positive",
            MethodArg::Mild => "mild",
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    layers: Layers,
    /// Output directory for bulk runs, output file with `--single`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    max_stream_dim: Option<usize>,
    /// Build one MAP from generator parameters instead of sampling pairs.
    #[arg(long)]
    single: bool,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, allow_hyphen_values = true)]
    rho_target: Option<f64>,
    #[arg(long)]
    mean_fast: Option<f64>,
    #[arg(long)]
    mean_slow: Option<f64>,
    #[arg(long)]
    k_fast: Option<usize>,
    #[arg(long)]
    k_slow: Option<usize>,
    #[arg(long)]
    p_stay: Option<f64>,
    #[arg(long)]
    heavy_marginals: Option<bool>,
}

#[derive(Args)]
struct LabelArgs {
    #[command(flatten)]
    layers: Layers,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "dataset")]
    name: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    max_stream_dim: Option<usize>,
    #[arg(long)]
    n_mom: Option<usize>,
    #[arg(long)]
    n_lag: Option<usize>,
    #[arg(long)]
    n_pow: Option<usize>,
    /// Also write packed binary splits.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    layers: Layers,
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Model file to write; the history CSV and run manifest go next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Mini-batch gradient shards; 0 is single-threaded.
    #[arg(long)]
    shards: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn split(self) -> DatasetSplit {
        match self {
            SplitArg::Train => DatasetSplit::Train,
            SplitArg::Val => DatasetSplit::Val,
            SplitArg::Test => DatasetSplit::Test,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    albin: AlbinContext,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            albin: AlbinContext::default(),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    layers: Layers,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Output directory for the tables and summary.
    #[arg(long)]
    out: PathBuf,
    /// Utilization used by the Albin hybrid weight.
    #[arg(long)]
    utilization: Option<f64>,
}

#[derive(Args)]
struct SuperposeArgs {
    /// First stream: MAP or descriptor JSON.
    first: PathBuf,
    /// Second stream: MAP or descriptor JSON.
    second: PathBuf,
    /// Predict with this model; without it both streams must be MAPs and the
    /// exact Kronecker superposition is used.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output descriptor file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    first: PathBuf,
    second: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    utilization: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    System1,
    System2,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    layers: Layers,
    /// Scenario file; mutually exclusive with `--grid`.
    #[arg(long, conflicts_with = "grid")]
    scenario: Option<PathBuf>,
    /// Run the 64 regime classes of one topology.
    #[arg(long, value_enum)]
    grid: Option<TopologyArg>,
    /// Model used to predict System 1 merged descriptors.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    arrivals: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SweepConfig {
    n_mom: [usize; 2],
    n_lag: [usize; 2],
    n_pow: [usize; 2],
    job: TrainJob,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_mom: [1, 10],
            n_lag: [1, 5],
            n_pow: [1, 5],
            job: TrainJob::default(),
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    layers: Layers,
    /// Dataset labeled on a grid covering the sweep box.
    #[arg(long)]
    dataset: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    name.split('.').next().unwrap_or(name).to_string()
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let dir = path.parent().unwrap_or(Path::new("."));
    dir.join(format!("{}{suffix}", stem(path)))
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    if a.single {
        let cfg: GeneratorConfig = a.layers.resolve(
            &GeneratorConfig::default(),
            vec![
                quoted("method", a.method.map(MethodArg::name)),
                flag("rho_target", a.rho_target),
                flag("mean_fast", a.mean_fast),
                flag("mean_slow", a.mean_slow),
                flag("k_fast", a.k_fast),
                flag("k_slow", a.k_slow),
                flag("p_stay", a.p_stay),
                flag("heavy_marginals", a.heavy_marginals),
                flag("seed", a.seed),
            ],
        )?;
        let mut rec = RunRecorder::new("generate", &cfg);
        rec.seed("generator", cfg.seed);
        write_map(&a.out, &generate(&cfg)?)?;
        rec.output(&a.out);
        rec.finish(&sibling(&a.out, ".run.json"))?;
        return Ok(());
    }
    let cfg: BulkConfig = a.layers.resolve(
        &BulkConfig::default(),
        vec![
            flag("seed", a.seed),
            flag("count", a.count),
            flag("sampler.max_stream_dim", a.max_stream_dim),
        ],
    )?;
    let mut rec = RunRecorder::new("generate", &cfg);
    rec.seed("master", cfg.seed);
    let run = run_manifest_path(&a.out, "pairs");
    let m = generate_pairs(&cfg, &a.out, Some(run.display().to_string()))?;
    rec.output(&bulk_manifest_path(&a.out));
    log::info!("wrote {} pairs, method shares {:?}", m.pairs.len(), m.method_shares());
    rec.finish(&run)?;
    Ok(())
}

fn cmd_label(a: &LabelArgs) -> Result<()> {
    let cfg: DatasetConfig = a.layers.resolve(
        &DatasetConfig::default(),
        vec![
            flag("seed", a.seed),
            flag("counts.train", a.train),
            flag("counts.val", a.val),
            flag("counts.test", a.test),
            flag("sampler.max_stream_dim", a.max_stream_dim),
            flag("grid.n_mom", a.n_mom),
            flag("grid.n_lag", a.n_lag),
            flag("grid.n_pow", a.n_pow),
            a.binary.then(|| "binary=true".to_string()),
        ],
    )?;
    let mut rec = RunRecorder::new("label", &cfg);
    rec.seed("master", cfg.seed);
    let run = run_manifest_path(&a.out, &a.name);
    rec.stage("label");
    let m = build_dataset(&cfg, &a.out, &a.name, Some(run.display().to_string()))?;
    rec.output(&manifest_path(&a.out, &a.name));
    for f in m.files.values().chain(m.binary_files.values()) {
        rec.output(&a.out.join(&f.file));
    }
    rec.finish(&run)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let job: TrainJob = a.layers.resolve(
        &TrainJob::default(),
        vec![
            flag("train.seed", a.seed),
            flag("train.epochs", a.epochs),
            flag("train.learning_rate", a.learning_rate),
            flag("train.batch_size", a.batch_size),
            flag("train.patience", a.patience),
            flag("shards", a.shards),
        ],
    )?;
    let mut rec = RunRecorder::new("train", &job);
    rec.seed("init_and_shuffle", job.train.seed);
    rec.input(&a.dataset);
    rec.stage("load");
    let dataset = load_manifest(&a.dataset)?;
    let train = load_split(&a.dataset, DatasetSplit::Train)?;
    let val = load_split(&a.dataset, DatasetSplit::Val)?;
    rec.stage("train");
    let outcome = train_model(&train, &val, &job, &mut |r| {
        log::info!(
            "epoch {:>4}  train {:.6}  val {:.6}",
            r.epoch,
            r.train_loss,
            r.val_loss
        )
    });
    let run = sibling(&a.out, ".run.json");
    let history = sibling(&a.out, ".history.csv");
    let provenance = |best: usize| ModelProvenance {
        best_epoch: Some(best),
        train_config_digest: Some(rec.config_digest().to_string()),
        dataset_config_digest: Some(dataset.config_digest.clone()),
        run_manifest: Some(run.display().to_string()),
    };
    match outcome {
        Ok(out) => {
            save_model(&out.model, provenance(out.best_epoch), &a.out)?;
            write_history(&history, &out.history)?;
            rec.output(&a.out);
            rec.output(&history);
            rec.finish(&run)?;
            Ok(())
        }
        Err(failure) => {
            if let Some(cp) = failure.checkpoint {
                let path = sibling(&a.out, ".checkpoint.smapnn.json");
                save_model(&cp.model, provenance(cp.best_epoch), &path)?;
                write_history(&history, &cp.history)?;
                log::warn!("training failed; last finite state saved to {}", path.display());
                rec.output(&path);
                rec.output(&history);
            }
            rec.finish(&run)?;
            Err(AppError::Core(failure.error))
        }
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg: EvalConfig = a
        .layers
        .resolve(&EvalConfig::default(), vec![flag("albin.utilization", a.utilization)])?;
    let mut rec = RunRecorder::new("eval", &cfg);
    rec.input(&a.model);
    rec.input(&a.dataset);
    let (model, _) = load_model_file(&a.model)?;
    let samples = load_split(&a.dataset, a.split.split())?;
    rec.stage("evaluate");
    let report = evaluate(&model, &samples, cfg.albin)?;
    let outputs = [
        ("scv_moments.csv", &report.scv, true),
        ("scv_corr.csv", &report.scv, false),
        ("rho_moments.csv", &report.rho, true),
        ("rho_corr.csv", &report.rho, false),
    ];
    std::fs::create_dir_all(&a.out).map_err(|e| AppError::io(&a.out, e))?;
    for (name, table, moments) in outputs {
        let p = a.out.join(name);
        if moments {
            write_moment_table(table, &p)?;
        } else {
            write_corr_table(table, &p)?;
        }
        rec.output(&p);
    }
    let summary = a.out.join("summary.json");
    write_json(&summary, &summarize(&report))?;
    rec.output(&summary);
    rec.finish(&run_manifest_path(&a.out, "eval"))?;
    Ok(())
}

fn read_stream(path: &Path) -> Result<StreamFile> {
    read_json(path)
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).expect("serializable output");
            match writeln!(std::io::stdout().lock(), "{text}") {
                // A closed pipe (`| head`) is the reader's choice, not a failure.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(AppError::io("<stdout>", e)),
                _ => Ok(()),
            }
        }
    }
}

fn cmd_superpose(a: &SuperposeArgs) -> Result<()> {
    let (s1, s2) = (read_stream(&a.first)?, read_stream(&a.second)?);
    let merged = match &a.model {
        Some(path) => {
            let model = load_model(path)?;
            let grid = model
                .input_grid()
                .ok_or_else(|| AppError::config("model has no input grid tag"))?;
            predict_superposed(&model, &s1.descriptor(grid)?, &s2.descriptor(grid)?)?
        }
        None => match (&s1, &s2) {
            (StreamFile::Map(m1), StreamFile::Map(m2)) => {
                m1.to_map()?.superpose(&m2.to_map()?)?.descriptor_set(Grid::TARGET)?
            }
            _ => return Err(AppError::config("descriptor inputs need --model")),
        },
    };
    emit(a.out.as_deref(), &DescriptorFile::from_descriptor(&merged))
}

fn cmd_baseline(a: &BaselineArgs) -> Result<()> {
    let (s1, s2) = (read_stream(&a.first)?, read_stream(&a.second)?);
    let grid = Grid::new(2, 1, 1)?;
    let (d1, d2) = (s1.descriptor(grid)?, s2.descriptor(grid)?);
    let streams = [
        StreamSummary::new(d1.rate(), d1.scv())?,
        StreamSummary::new(d2.rate(), d2.scv())?,
    ];
    let ctx = AlbinContext {
        utilization: a.utilization,
    };
    let mean = 1.0 / (d1.rate() + d2.rate());
    let exact_m2 = match (&s1, &s2) {
        (StreamFile::Map(m1), StreamFile::Map(m2)) => {
            Some(m1.to_map()?.superpose(&m2.to_map()?)?.descriptor_set(grid)?.moment(2))
        }
        _ => None,
    };
    let mut methods = serde_json::Map::new();
    for m in BaselineMethod::ALL {
        let merged = m.merge(&streams, ctx)?;
        let m2 = (1.0 + merged.scv) * mean * mean;
        methods.insert(
            m.label().to_string(),
            json!({
                "scv": merged.scv,
                "m2": m2,
                "pare_m2": exact_m2.map(|e| 100.0 * ((e - m2) / e).abs()),
            }),
        );
    }
    let report = json!({
        "merged_mean": mean,
        "exact_m2": exact_m2,
        "utilization": a.utilization,
        "methods": methods,
    });
    emit(a.out.as_deref(), &report)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).map_err(|e| AppError::io(&a.out, e))?;
    if let Some(path) = &a.scenario {
        let text = read_text(path)?;
        let mut spec: ScenarioSpec = serde_json::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))?;
        if let Some(s) = a.seed {
            spec.sim.seed = s;
        }
        if let Some(n) = a.arrivals {
            spec.sim.arrivals_per_stream = n;
        }
        let mut rec = RunRecorder::new("simulate", &spec);
        rec.seed("simulation", spec.sim.seed);
        rec.input(path);
        let base = path.parent().unwrap_or(Path::new("."));
        let result = run_scenario(&spec, base)?;
        for w in &result.warnings {
            log::warn!("{w}");
        }
        let name = if spec.name.is_empty() { stem(path) } else { spec.name.clone() };
        let topology = match spec.topology {
            supermap::simulation::Topology::System1 => "system1",
            supermap::simulation::Topology::System2 => "system2",
        };
        let csv = a.out.join(format!("{name}.histogram.csv"));
        write_histograms([(name.as_str(), topology, &result.histogram)], &csv)?;
        let detail = a.out.join(format!("{name}.result.json"));
        write_json(&detail, &result)?;
        rec.output(&csv);
        rec.output(&detail);
        rec.finish(&run_manifest_path(&a.out, &name))?;
        return Ok(());
    }
    let topology = a
        .grid
        .ok_or_else(|| AppError::config("give either --scenario or --grid"))?;
    let cfg: GridRunConfig = a.layers.resolve(
        &GridRunConfig::default(),
        vec![flag("seed", a.seed), flag("sim.arrivals_per_stream", a.arrivals)],
    )?;
    let mut rec = RunRecorder::new("simulate", &cfg);
    rec.seed("scenarios", cfg.seed);
    rec.seed("simulation", cfg.sim.seed);
    rec.stage("simulate");
    match topology {
        TopologyArg::System1 => {
            let model = a.model.as_deref().map(load_model).transpose()?;
            if let Some(p) = &a.model {
                rec.input(p);
            }
            let rows = run_system1_grid(&cfg, model.as_ref())?;
            let table = a.out.join("system1.csv");
            let hist = a.out.join("system1.histogram.csv");
            write_system1_table(&rows, &table)?;
            let names: Vec<String> = rows.iter().map(|r| format!("row{}", r.row + 1)).collect();
            write_histograms(
                rows.iter().zip(&names).map(|(r, n)| (n.as_str(), "system1", &r.histogram)),
                &hist,
            )?;
            rec.output(&table);
            rec.output(&hist);
            rec.finish(&run_manifest_path(&a.out, "system1"))?;
        }
        TopologyArg::System2 => {
            let rows = run_system2_grid(&cfg)?;
            let table = a.out.join("system2.csv");
            let hist = a.out.join("system2.histogram.csv");
            write_system2_table(&rows, &table)?;
            let names: Vec<String> = rows.iter().map(|r| format!("row{}", r.row + 1)).collect();
            write_histograms(
                rows.iter().zip(&names).map(|(r, n)| (n.as_str(), "system2", &r.histogram)),
                &hist,
            )?;
            rec.output(&table);
            rec.output(&hist);
            rec.finish(&run_manifest_path(&a.out, "system2"))?;
        }
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg: SweepConfig = a
        .layers
        .resolve(&SweepConfig::default(), vec![flag("job.train.epochs", a.epochs)])?;
    let grids = sweep_grids(
        cfg.n_mom[0]..=cfg.n_mom[1],
        cfg.n_lag[0]..=cfg.n_lag[1],
        cfg.n_pow[0]..=cfg.n_pow[1],
    )?;
    let m = load_manifest(&a.dataset)?;
    let cover = covering_grid(&grids)?;
    if !m.grid.covers(&cover) {
        return Err(AppError::config(format!(
            "dataset grid {} does not cover the sweep box {}",
            m.grid, cover
        )));
    }
    let mut rec = RunRecorder::new("sweep", &cfg);
    rec.seed("init_and_shuffle", cfg.job.train.seed);
    rec.input(&a.dataset);
    let train = load_split(&a.dataset, DatasetSplit::Train)?;
    let val = load_split(&a.dataset, DatasetSplit::Val)?;
    let test = load_split(&a.dataset, DatasetSplit::Test)?;
    rec.stage("sweep");
    let rows = sweep(&train, &val, &test, &grids, &cfg.job)?;
    write_sweep(&rows, &a.out)?;
    rec.output(&a.out);
    rec.finish(&sibling(&a.out, ".run.json"))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    with_pool(|| match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Label(a) => cmd_label(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Superpose(a) => cmd_superpose(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_kind() as u8)
        }
    }
}
