//! Acceptance run: one pass/fail line per criterion. The desk-scale dataset
//! and model are cached under the cargo target directory, keyed by their
//! configuration digests, so only the first run pays for labeling and training.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use supermap::dataset_io::{build_dataset, load_manifest, load_split, manifest_path, DatasetConfig, SplitCounts};
use supermap::eval::{evaluate, summarize};
use supermap::formats::digest_of;
use supermap::model_io::{load_model_file, save_model, ModelProvenance};
use supermap::simulation::{run_system1_grid, GridRunConfig};
use supermap::training::{train_model, TrainJob};
use supermap_core::baselines::AlbinContext;
use supermap_core::dataset::DatasetSplit;
use supermap_core::generators::{generate, Method, SamplerConfig};
use supermap_core::metrics::{rem, sae};
use supermap_core::neural::{init_model, loss, loss_and_gradient, predict_superposed_batch, MlpModel};
use supermap_core::ph::erlang_ph;
use supermap_core::rng::{SeedStream, StreamRng};
use supermap_core::sim::{
    empirical_descriptors, interarrivals, merge_streams, mm1_distribution, run_station, run_system1,
    simulate_map_stream, SimConfig,
};
use supermap_core::{DescriptorSet, Grid, MarkovArrivalProcess, Matrix, PhaseTypeDist};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Dense MAP with every arrival rate positive, hence irreducible.
fn random_map(rng: &mut StreamRng, max_dim: usize) -> MarkovArrivalProcess {
    let n = rng.random_range(1..=max_dim);
    let mut d0 = vec![0.0; n * n];
    let mut d1 = vec![0.0; n * n];
    for i in 0..n {
        let mut out = 0.0;
        for j in 0..n {
            d1[i * n + j] = rng.random_range(0.05..2.0);
            out += d1[i * n + j];
            if i != j && rng.random::<f64>() < 0.7 {
                d0[i * n + j] = rng.random_range(0.0..2.0);
                out += d0[i * n + j];
            }
        }
        d0[i * n + i] = -out;
    }
    MarkovArrivalProcess::new(
        Matrix::from_row_major(n, n, d0).unwrap(),
        Matrix::from_row_major(n, n, d1).unwrap(),
    )
    .unwrap()
}

fn random_renewal(rng: &mut StreamRng) -> MarkovArrivalProcess {
    let ph = match rng.random_range(0..3) {
        0 => erlang_ph(rng.random_range(1..=6), rng.random_range(0.1..5.0)).unwrap(),
        1 => supermap_core::ph::hyperexp2_ph(rng.random_range(0.1..5.0), rng.random_range(0.1..0.9), rng.random_range(1.5..40.0))
            .unwrap(),
        _ => supermap_core::ph::fit_two_moment(rng.random_range(0.1..5.0), rng.random_range(0.2..8.0)).unwrap(),
    };
    ph.renewal_map().unwrap()
}

fn closure_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = SeedStream::new(1).rng(0);
    let mut worst = [0.0f64; 5];
    let cases = 200;
    for _ in 0..cases {
        // Poisson closure
        let (r1, r2) = (rng.random_range(0.01..100.0), rng.random_range(0.01..100.0));
        let p = MarkovArrivalProcess::poisson(r1).unwrap().superpose(&MarkovArrivalProcess::poisson(r2).unwrap()).unwrap();
        let d = p.descriptor_set(Grid::TARGET).unwrap();
        let mut f = 1.0;
        for i in 1..=5 {
            f *= i as f64;
            worst[0] = worst[0].max(rel(d.moment(i), f / (r1 + r2).powi(i as i32)));
        }
        worst[0] = worst[0].max(d.autocorr().iter().fold(0.0, |m, r| m.max(r.abs())));

        // Renewal nullity
        let r = random_renewal(&mut rng).descriptor_set(Grid::TARGET).unwrap();
        worst[1] = worst[1].max(r.autocorr().iter().fold(0.0, |m, x| m.max(x.abs())));

        // Rate additivity and symmetry
        let (a, b) = (random_map(&mut rng, 4), random_map(&mut rng, 4));
        let ab = a.superpose(&b).unwrap();
        let ba = b.superpose(&a).unwrap();
        let (ma, mb) = (a.interarrival_moments(1).unwrap()[0], b.interarrival_moments(1).unwrap()[0]);
        let ms = ab.interarrival_moments(1).unwrap()[0];
        worst[2] = worst[2].max(rel(1.0 / ms, 1.0 / ma + 1.0 / mb));
        let (dab, dba) = (ab.descriptor_set(Grid::TARGET).unwrap(), ba.descriptor_set(Grid::TARGET).unwrap());
        for (x, y) in dab.moments().iter().zip(dba.moments()) {
            worst[3] = worst[3].max(rel(*x, *y));
        }
        for (x, y) in dab.autocorr().iter().zip(dba.autocorr()) {
            worst[3] = worst[3].max((x - y).abs());
        }

        // Scaling covariance
        let m = random_map(&mut rng, 5);
        let d = m.descriptor_set(Grid::TARGET).unwrap();
        let target = rng.random_range(0.05..20.0);
        let c = target / d.mean();
        let s = m.time_scale(target).unwrap().descriptor_set(Grid::TARGET).unwrap();
        for i in 1..=5 {
            worst[4] = worst[4].max(rel(s.moment(i), c.powi(i as i32) * d.moment(i)));
        }
        for (x, y) in s.autocorr().iter().zip(d.autocorr()) {
            worst[4] = worst[4].max((x - y).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let tol = [1e-9, 1e-9, 1e-9, 1e-9, 1e-10];
    let ok = worst.iter().zip(tol).all(|(w, t)| *w <= t) && secs < 1.0;
    outcome(
        ok,
        format!(
            "{cases} cases in {secs:.2} s; worst deviations: poisson {:.1e}, renewal {:.1e}, rate {:.1e}, symmetry {:.1e}, scaling {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn oracle_errors(exact: &DescriptorSet, x: &[f64]) -> (f64, f64) {
    let emp = empirical_descriptors(x, Grid::new(3, 1, 1).unwrap()).unwrap();
    let m = (1..=3).map(|i| rel(emp.moment(i), exact.moment(i))).fold(0.0, f64::max);
    (m, (emp.rho(1, 1, 1) - exact.rho(1, 1, 1)).abs())
}

fn oracle_equivalence() -> Outcome {
    let n = 1_000_000;
    let mut rng = SeedStream::new(2).rng(0);
    let (mut worst_m, mut worst_r) = (0.0f64, 0.0f64);
    for i in 0..20u64 {
        let map = random_map(&mut rng, 5);
        let exact = map.descriptor_set(Grid::new(3, 1, 1).unwrap()).unwrap();
        let x = interarrivals(&simulate_map_stream(&map, n + 1, 100 + i).unwrap());
        let (m, r) = oracle_errors(&exact, &x);
        worst_m = worst_m.max(m);
        worst_r = worst_r.max(r);
    }
    let (mut pair_m, mut pair_r) = (0.0f64, 0.0f64);
    for i in 0..10u64 {
        let (a, b) = (random_map(&mut rng, 5), random_map(&mut rng, 5));
        let exact = a.superpose(&b).unwrap().descriptor_set(Grid::new(3, 1, 1).unwrap()).unwrap();
        let ea = simulate_map_stream(&a, n, 200 + 2 * i).unwrap();
        let eb = simulate_map_stream(&b, n, 201 + 2 * i).unwrap();
        let x = interarrivals(&merge_streams(&ea, &eb));
        let (m, r) = oracle_errors(&exact, &x);
        pair_m = pair_m.max(m);
        pair_r = pair_r.max(r);
    }
    let ok = worst_m.max(pair_m) <= 0.01 && worst_r.max(pair_r) <= 0.01;
    outcome(
        ok,
        format!(
            "single MAPs: moment error {:.3}%, rho error {worst_r:.4}; merged pairs: moment error {:.3}%, rho error {pair_r:.4}",
            100.0 * worst_m,
            100.0 * pair_m
        ),
    )
}

/// Table interval widened by 10% of its width on both sides.
fn inflate(lo: f64, hi: f64) -> (f64, f64) {
    let w = 0.1 * (hi - lo);
    (lo - w, hi + w)
}

fn generator_envelopes() -> Outcome {
    let sampler = SamplerConfig::default();
    let envelopes = [
        (Method::StrongNegative, inflate(-0.99, 0.0), inflate(0.15, 1.81)),
        (Method::StrongPositive, inflate(0.0, 0.99), inflate(0.01, 15.0)),
        (Method::Mild, inflate(-0.43, 0.44), inflate(0.15, 15.0)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (method, rho_env, scv_env) in envelopes {
        let (mut signed, mut inside, mut total) = (0, 0, 0);
        let (mut rho_lo, mut rho_hi, mut scv_lo, mut scv_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for seed in 0..1000u64 {
            let mut rng = SeedStream::new(seed).rng(method as u64);
            let map = loop {
                let m = generate(&sampler.draw_config(method, &mut rng)).unwrap();
                if m.dim() <= sampler.max_stream_dim {
                    break m;
                }
            };
            let rho = map.lag_autocorrelation(1, 1, 1).unwrap();
            let mo = map.interarrival_moments(2).unwrap();
            let scv = mo[1] / (mo[0] * mo[0]) - 1.0;
            total += 1;
            signed += match method {
                Method::StrongNegative => (rho < 0.0) as usize,
                Method::StrongPositive => (rho > 0.0) as usize,
                Method::Mild => 1,
            };
            inside += (rho_env.0 <= rho && rho <= rho_env.1 && scv_env.0 <= scv && scv <= scv_env.1) as usize;
            rho_lo = rho_lo.min(rho);
            rho_hi = rho_hi.max(rho);
            scv_lo = scv_lo.min(scv);
            scv_hi = scv_hi.max(scv);
        }
        let sign_ok = method == Method::Mild || signed as f64 >= 0.95 * total as f64;
        ok &= sign_ok && inside == total;
        parts.push(format!(
            "{}: sign {signed}/{total}, inside {inside}/{total}, rho [{rho_lo:.3}, {rho_hi:.3}], scv [{scv_lo:.3}, {scv_hi:.2}]",
            method.name()
        ));
    }
    outcome(ok, parts.join("; "))
}

struct Trained {
    model: MlpModel,
    test: Vec<supermap_core::dataset::LabeledSample>,
    note: String,
}

fn cache_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn desk_dataset_config() -> DatasetConfig {
    DatasetConfig {
        seed: 2024,
        counts: SplitCounts {
            train: 50_000,
            val: 5_000,
            test: 5_000,
        },
        grid: Grid::TARGET,
        sampler: SamplerConfig {
            max_stream_dim: 30,
            ..SamplerConfig::default()
        },
        binary: false,
    }
}

fn desk_model() -> Result<Trained, String> {
    let dir = cache_dir();
    let cfg = desk_dataset_config();
    let manifest = manifest_path(&dir, "desk");
    let mut note = String::new();
    let cached = load_manifest(&manifest).map(|m| m.config == cfg).unwrap_or(false);
    if !cached {
        let t = Instant::now();
        build_dataset(&cfg, &dir, "desk", None).map_err(|e| e.to_string())?;
        note.push_str(&format!("labeled in {:.0} s; ", t.elapsed().as_secs_f64()));
    }
    let split = |s| load_split(&manifest, s).map_err(|e| e.to_string());
    let test = split(DatasetSplit::Test)?;

    let job = TrainJob::default();
    let model_path = dir.join("desk.model.json");
    let data_digest = digest_of(&cfg);
    let job_digest = digest_of(&job);
    let reuse = load_model_file(&model_path).ok().filter(|(_, p)| {
        p.dataset_config_digest.as_deref() == Some(&data_digest) && p.train_config_digest.as_deref() == Some(&job_digest)
    });
    let model = match reuse {
        Some((m, p)) => {
            note.push_str(&format!("cached model (best epoch {})", p.best_epoch.unwrap_or(0)));
            m
        }
        None => {
            let (train, val) = (split(DatasetSplit::Train)?, split(DatasetSplit::Val)?);
            let t = Instant::now();
            let out = train_model(&train, &val, &job, &mut |_| {}).map_err(|f| f.error.to_string())?;
            note.push_str(&format!(
                "trained {} epochs in {:.0} s (best {})",
                out.history.len(),
                t.elapsed().as_secs_f64(),
                out.best_epoch
            ));
            let prov = ModelProvenance {
                best_epoch: Some(out.best_epoch),
                train_config_digest: Some(job_digest),
                dataset_config_digest: Some(data_digest),
                run_manifest: None,
            };
            save_model(&out.model, prov, &model_path).map_err(|e| e.to_string())?;
            out.model
        }
    };
    Ok(Trained { model, test, note })
}

fn learning_and_dominance(t: &Trained) -> (Outcome, Outcome) {
    let report = match evaluate(&t.model, &t.test, AlbinContext::default()) {
        Ok(r) => r,
        Err(e) => {
            let fail = || outcome(false, format!("evaluation failed: {e}"));
            return (fail(), fail());
        }
    };
    let s = summarize(&report);
    let higher = s.pare[1..].iter().copied().fold(0.0, f64::max);
    let c4 = outcome(
        s.pare[0] <= 10.0 && higher <= 15.0 && s.corr_mae_overall <= 0.05,
        format!(
            "{} test samples; PARE m2 {:.2}%, m3 {:.2}%, m4 {:.2}%, m5 {:.2}%; corr MAE {:.4}; {}",
            s.samples, s.pare[0], s.pare[1], s.pare[2], s.pare[3], s.corr_mae_overall, t.note
        ),
    );
    let holds = s.dominance.iter().filter(|r| r.holds).count();
    let rows: Vec<String> = s
        .dominance
        .iter()
        .enumerate()
        .map(|(i, r)| {
            format!(
                "{}:{}{:.1}/{:.1}/{:.1}",
                i + 1,
                if r.holds { "" } else { "x" },
                r.nn,
                r.whitt_asymptotic,
                r.albin
            )
        })
        .collect();
    let c5 = outcome(
        holds >= 6,
        format!("{holds}/8 regimes hold (nn/whitt-a/albin m2 PARE: {})", rows.join(" ")),
    );
    (c4, c5)
}

fn throughput(model: &MlpModel) -> Outcome {
    let mut rng = SeedStream::new(6).rng(0);
    let pairs: Vec<(DescriptorSet, DescriptorSet)> = (0..5000)
        .map(|_| {
            let a = random_map(&mut rng, 3).descriptor_set(Grid::TARGET).unwrap();
            let b = random_map(&mut rng, 3).descriptor_set(Grid::TARGET).unwrap();
            (a, b)
        })
        .collect();
    let start = Instant::now();
    let preds = predict_superposed_batch(model, &pairs);
    let secs = start.elapsed().as_secs_f64();
    let ok = preds.map(|p| p.len() == 5000).unwrap_or(false) && secs < 1.0;
    outcome(ok, format!("5000 pairs in {:.4} s on one thread", secs))
}

fn calibration() -> Outcome {
    let exp = PhaseTypeDist::exponential(1.0).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, rho) in [0.5, 0.7].into_iter().enumerate() {
        let reference = mm1_distribution(rho);
        let arrivals = simulate_map_stream(&MarkovArrivalProcess::poisson(rho).unwrap(), 2_000_000, 70 + i as u64).unwrap();
        let run = run_station(&arrivals, &exp, 0.1, &mut SeedStream::new(71 + i as u64).rng(0)).unwrap();
        let (s1, r1) = (sae(&run.histogram.probs, &reference).unwrap(), rem(&reference, &run.histogram.probs).unwrap());

        let half = MarkovArrivalProcess::poisson(rho / 2.0).unwrap();
        let cfg = SimConfig {
            arrivals_per_stream: 1_000_000,
            warmup_fraction: 0.1,
            seed: 80 + i as u64,
        };
        let sys = run_system1(&half, &half, &exp, &cfg).unwrap();
        let (s2, r2) = (sae(&sys.histogram.probs, &reference).unwrap(), rem(&reference, &sys.histogram.probs).unwrap());
        ok &= s1 <= 0.01 && r1 <= 1.0 && s2 <= 0.01 && r2 <= 1.0;
        parts.push(format!(
            "rho {rho}: M/M/1 SAE {s1:.4} REM {r1:.2}%, System 1 SAE {s2:.4} REM {r2:.2}%"
        ));
    }
    outcome(ok, parts.join("; "))
}

fn pipeline_consistency(model: &MlpModel) -> Outcome {
    // Every third class, covering all SCV, sign, service and load labels.
    let cfg = GridRunConfig {
        seed: 8,
        sim: SimConfig {
            arrivals_per_stream: 1_000_000,
            warmup_fraction: 0.1,
            seed: 800,
        },
        rows: (0..64).step_by(3).take(20).collect(),
        ..GridRunConfig::default()
    };
    let rows = match supermap::parallel::with_pool(|| run_system1_grid(&cfg, Some(model))) {
        Ok(Ok(r)) => r,
        Ok(Err(e)) | Err(e) => return outcome(false, format!("grid run failed: {e}")),
    };
    let n = rows.len() as f64;
    let nn: Vec<_> = rows.iter().filter_map(|r| r.nn_error).collect();
    let mean = |f: &dyn Fn(&supermap::simulation::DescriptorError) -> f64, v: &[supermap::simulation::DescriptorError]| {
        v.iter().map(f).sum::<f64>() / v.len().max(1) as f64
    };
    let exact: Vec<_> = rows.iter().map(|r| r.exact_error).collect();
    let m2 = mean(&|e| e.pare_m2, &nn);
    let corr = mean(&|e| e.corr_mae, &nn);
    let worst = nn.iter().map(|e| e.pare_m2).fold(0.0, f64::max);
    outcome(
        nn.len() == 20 && m2 <= 10.0 && corr <= 0.05,
        format!(
            "{n} scenarios; NN vs simulation: PARE m2 {m2:.2}% (worst {worst:.2}%), corr MAE {corr:.4}; exact vs simulation: PARE m2 {:.2}%, corr MAE {:.4}",
            mean(&|e| e.pare_m2, &exact),
            mean(&|e| e.corr_mae, &exact)
        ),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = SeedStream::new(9).rng(0);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..40u64 {
        let n_in = rng.random_range(1..=6);
        let hidden = rng.random_range(1..=8);
        let depth = rng.random_range(1..=2);
        let mut sizes = vec![n_in];
        sizes.extend(std::iter::repeat_n(hidden, depth));
        sizes.push(13);
        // Zero biases behind a dead layer sit exactly on the ReLU kink; jittered
        // parameters make the check point differentiable almost surely.
        let mut model = init_model(&sizes, case).unwrap();
        for p in model.params_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let rows = rng.random_range(1..=4);
        let x: Vec<f64> = (0..rows * n_in).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..rows * 13).map(|_| rng.random_range(-2.0..2.0)).collect();
        let alpha = rng.random::<f64>();
        let (_, g) = loss_and_gradient(&model, &x, &y, alpha).unwrap();
        let h = 1e-6;
        for k in 0..model.param_count() {
            let mut plus = model.clone();
            plus.params_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut()[k] -= h;
            let lp = loss(&plus.forward_batch(&x).unwrap(), &y, alpha).unwrap().total;
            let lm = loss(&minus.forward_batch(&x).unwrap(), &y, alpha).unwrap().total;
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / fd.abs().max(1e-3));
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-5 && secs < 60.0,
        format!("{checked} parameters over 40 batches in {secs:.2} s; worst relative gap {worst:.2e}"),
    )
}

fn report(n: usize, name: &str, o: &Outcome) {
    println!("criterion {n} [{name}]: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    // Only the filtered `cargo test` listing asks for this; nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    report(1, "exact-algebra closure", &closure_suite());
    report(2, "oracle equivalence", &oracle_equivalence());
    report(3, "generator envelopes", &generator_envelopes());
    match desk_model() {
        Ok(t) => {
            let (c4, c5) = learning_and_dominance(&t);
            report(4, "desk-scale learning", &c4);
            report(5, "baseline dominance", &c5);
            report(6, "inference throughput", &throughput(&t.model));
            report(7, "simulator calibration", &calibration());
            report(8, "pipeline consistency", &pipeline_consistency(&t.model));
        }
        Err(e) => {
            let fail = || outcome(false, format!("desk-scale model unavailable: {e}"));
            report(4, "desk-scale learning", &fail());
            report(5, "baseline dominance", &fail());
            report(6, "inference throughput", &fail());
            report(7, "simulator calibration", &calibration());
            report(8, "pipeline consistency", &fail());
        }
    }
    report(9, "gradient correctness", &gradient_check());
}
