use proptest::prelude::*;
use supermap_core::dataset::{generate_sample, DatasetSplit};
use supermap_core::generators::SamplerConfig;
use supermap_core::neural::{
    default_layer_sizes, init_model, loss, loss_and_gradient, param_count, predict_superposed,
    predict_superposed_batch, train, MlpModel, SerialExecutor, Standardization, TrainConfig, TrainData,
};
use supermap_core::rng::SeedStream;
use supermap_core::{DescriptorSet, Grid};

#[test]
fn parameter_counts() {
    assert_eq!(param_count(&default_layer_sizes(Grid::TARGET)), 16_653);
    assert_eq!(init_model(&[2, 2], 0).unwrap().param_count(), 6);
    assert!(init_model(&[3], 0).is_err());
    assert!(init_model(&[3, 0, 2], 0).is_err());
}

#[test]
fn init_is_deterministic() {
    let a = init_model(&[4, 5, 3], 9).unwrap();
    assert_eq!(a, init_model(&[4, 5, 3], 9).unwrap());
    assert_ne!(a, init_model(&[4, 5, 3], 10).unwrap());
    let (_, b) = a.layer(1);
    assert!(b.iter().all(|v| *v == 0.0));
}

#[test]
fn zero_weights_return_final_bias() {
    let sizes = [3, 4, 2];
    let mut p = vec![0.0; param_count(&sizes)];
    let n = p.len();
    p[n - 2] = 0.25;
    p[n - 1] = -1.5;
    let m = MlpModel::from_params(sizes.to_vec(), p).unwrap();
    assert_eq!(m.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.25, -1.5]);
}

#[test]
fn single_identity_layer_copies_input_head() {
    let sizes = [3, 2];
    let mut p = vec![0.0; param_count(&sizes)];
    p[0] = 1.0; // input 0 → output 0
    p[3] = 1.0; // input 1 → output 1
    let m = MlpModel::from_params(sizes.to_vec(), p).unwrap();
    assert_eq!(m.forward(&[-0.7, 2.0, 9.0]).unwrap(), vec![-0.7, 2.0]);
    assert!(m.forward(&[1.0]).is_err());
}

#[test]
fn batch_matches_rows() {
    let m = init_model(&[6, 7, 5, 3], 1).unwrap();
    let inputs: Vec<f64> = (0..60).map(|i| libm::sin(i as f64)).collect();
    let batch = m.forward_batch(&inputs).unwrap();
    for (x, y) in inputs.chunks(6).zip(batch.chunks(3)) {
        assert_eq!(m.forward(x).unwrap(), y);
    }
}

#[test]
fn standardization_statistics() {
    let s = Standardization::fit(&[1.0, 5.0, 3.0, 5.0], 2, &[0.0, 2.0], 1).unwrap();
    assert_eq!(s.in_shift, vec![2.0, 5.0]);
    assert_eq!(s.in_scale, vec![1.0, 1.0]);
    assert_eq!(s.out_scale, vec![1.0]);
}

#[test]
fn loss_examples() {
    let t: Vec<f64> = (0..13).map(|i| i as f64 * 0.1).collect();
    assert_eq!(loss(&t, &t, 0.5).unwrap().total, 0.0);
    let mut p = t.clone();
    p[2] += 0.1;
    let l = loss(&p, &t, 1.0).unwrap();
    assert!((l.total - 0.01).abs() < 1e-12);
    let mut q = t.clone();
    q[9] += 0.3;
    assert_eq!(loss(&q, &t, 1.0).unwrap().total, 0.0);
    assert!(loss(&p, &t, 0.0).unwrap().total == 0.0);
    assert!(loss(&p, &t, 1.5).is_err());
    assert!(loss(&p[..12], &t[..12], 0.5).is_err());
}

#[test]
fn gradient_matches_finite_differences() {
    let mut model = init_model(&[4, 6, 5, 13], 2).unwrap();
    let s = Standardization {
        in_shift: vec![0.1, -0.2, 0.3, 0.0],
        in_scale: vec![1.5, 0.5, 2.0, 1.0],
        out_shift: (0..13).map(|i| i as f64 * 0.01).collect(),
        out_scale: (0..13).map(|i| 0.5 + i as f64 * 0.1).collect(),
    };
    model.set_standardization(s).unwrap();
    let x: Vec<f64> = (0..12).map(|i| libm::cos(i as f64 * 0.7)).collect();
    let y: Vec<f64> = (0..39).map(|i| libm::sin(i as f64 * 0.3)).collect();
    let (_, g) = loss_and_gradient(&model, &x, &y, 0.3).unwrap();
    let h = 1e-6;
    for k in 0..model.param_count() {
        let mut plus = model.clone();
        plus.params_mut()[k] += h;
        let mut minus = model.clone();
        minus.params_mut()[k] -= h;
        let lp = loss(&plus.forward_batch(&x).unwrap(), &y, 0.3).unwrap().total;
        let lm = loss(&minus.forward_batch(&x).unwrap(), &y, 0.3).unwrap().total;
        let fd = (lp - lm) / (2.0 * h);
        assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "param {k}: {fd} vs {}", g[k]);
    }
}

fn model() -> MlpModel {
    let mut m = init_model(&default_layer_sizes(Grid::TARGET), 5).unwrap();
    m.with_grids(Some(Grid::TARGET), Grid::TARGET).unwrap();
    m
}

fn desc(mean: f64, scv: f64, rho: f64) -> DescriptorSet {
    let m2 = (1.0 + scv) * mean * mean;
    let moments = vec![mean, m2, 3.0 * m2 * mean, 12.0 * m2 * mean * mean, 60.0 * m2 * mean.powi(3)];
    DescriptorSet::new(Grid::TARGET, moments, vec![rho; 8]).unwrap()
}

#[test]
fn first_moment_is_exact() {
    let p = predict_superposed(&model(), &desc(1.0, 1.0, 0.0), &desc(2.0, 1.0, 0.0)).unwrap();
    assert!((p.mean() - 2.0 / 3.0).abs() < 1e-15);
    assert!(p.autocorr().iter().all(|r| r.abs() <= 1.0));
}

#[test]
fn invariant_to_time_scale_and_order() {
    let m = model();
    let (a, b) = (desc(1.0, 0.7, 0.2), desc(0.4, 2.5, -0.1));
    let p = predict_superposed(&m, &a, &b).unwrap();
    let q = predict_superposed(&m, &b, &a).unwrap();
    assert_eq!(p, q);
    let c = 3.7;
    let r = predict_superposed(&m, &a.time_scaled(c), &b.time_scaled(c)).unwrap();
    for i in 1..=5 {
        let unscaled = r.moment(i) / c.powi(i as i32);
        assert!((unscaled - p.moment(i)).abs() <= 1e-9 * p.moment(i));
    }
    for (x, y) in r.autocorr().iter().zip(p.autocorr()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn batch_matches_single() {
    let m = model();
    let pairs = vec![(desc(1.0, 0.7, 0.2), desc(0.4, 2.5, -0.1)), (desc(0.3, 1.0, 0.0), desc(0.9, 4.0, 0.3))];
    let batch = predict_superposed_batch(&m, &pairs).unwrap();
    for ((a, b), p) in pairs.iter().zip(&batch) {
        assert_eq!(&predict_superposed(&m, a, b).unwrap(), p);
    }
}

#[test]
fn grid_mismatch_is_rejected() {
    let d = DescriptorSet::new(Grid::new(2, 1, 1).unwrap(), vec![1.0, 2.0], vec![0.0]).unwrap();
    assert!(predict_superposed(&model(), &d, &d).is_err());
}

fn central_difference_check(model: &MlpModel, x: &[f64], y: &[f64], alpha: f64) -> Result<(), TestCaseError> {
    let (_, g) = loss_and_gradient(model, x, y, alpha).unwrap();
    let h = 1e-6;
    for k in 0..model.param_count() {
        let mut plus = model.clone();
        plus.params_mut()[k] += h;
        let mut minus = model.clone();
        minus.params_mut()[k] -= h;
        let lp = loss(&plus.forward_batch(x).unwrap(), y, alpha).unwrap().total;
        let lm = loss(&minus.forward_batch(x).unwrap(), y, alpha).unwrap().total;
        let fd = (lp - lm) / (2.0 * h);
        prop_assert!((fd - g[k]).abs() <= 1e-5 * fd.abs().max(1e-3), "param {}: {} vs {}", k, fd, g[k]);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_matches_central_differences(
        seed in any::<u64>(),
        hidden in 2usize..8,
        rows in 1usize..4,
        alpha in 0.0f64..=1.0,
        data in proptest::collection::vec(-2.0f64..2.0, 3 * (3 + 13)),
    ) {
        let mut model = init_model(&[3, hidden, 13], seed).unwrap();
        // Jitter the zero biases away from the ReLU kink.
        for (p, d) in model.params_mut().iter_mut().zip(data.iter().cycle()) {
            *p += 0.25 * d;
        }
        let x = &data[..3 * rows];
        let y = &data[3 * 3..3 * 3 + 13 * rows];
        central_difference_check(&model, x, y, alpha)?;
    }
}

fn samples(n: u64, split: DatasetSplit) -> TrainData {
    let seeds = SeedStream::new(17);
    let sampler = SamplerConfig {
        max_stream_dim: 20,
        ..SamplerConfig::default()
    };
    let s: Vec<_> = (0..n)
        .map(|i| generate_sample(&seeds, split, i, &sampler, Grid::TARGET).unwrap())
        .collect();
    TrainData::from_samples(&s).unwrap()
}

fn small_model() -> MlpModel {
    let mut m = init_model(&[26, 32, 13], 3).unwrap();
    m.with_grids(Some(Grid::TARGET), Grid::TARGET).unwrap();
    m
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let (tr, va) = (samples(128, DatasetSplit::Train), samples(32, DatasetSplit::Val));
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 30,
        batch_size: 16,
        patience: 0,
        ..TrainConfig::default()
    };
    let out = train(small_model(), &tr, &va, &cfg, &SerialExecutor).unwrap();
    let first = out.history.first().unwrap();
    let last = out.history.last().unwrap();
    assert_eq!(out.history.len(), 30);
    assert!(last.train_loss < 0.5 * first.train_loss, "{} -> {}", first.train_loss, last.train_loss);
    let best = out.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.best_epoch - 1].val_loss, best);

    let again = train(small_model(), &tr, &va, &cfg, &SerialExecutor).unwrap();
    assert_eq!(out.model, again.model);
    assert_eq!(out.history, again.history);
}

#[test]
fn early_stopping_honours_patience() {
    let (tr, va) = (samples(32, DatasetSplit::Train), samples(8, DatasetSplit::Val));
    let cfg = TrainConfig {
        learning_rate: 0.5,
        epochs: 200,
        batch_size: 8,
        patience: 3,
        ..TrainConfig::default()
    };
    let out = train(small_model(), &tr, &va, &cfg, &SerialExecutor);
    if let Ok(out) = out {
        assert!(out.history.len() <= out.best_epoch + 3);
    }
}

#[test]
fn mismatched_data_is_rejected() {
    let tr = samples(4, DatasetSplit::Train);
    let model = init_model(&[10, 4, 13], 0).unwrap();
    assert!(train(model, &tr, &tr, &TrainConfig::default(), &SerialExecutor).is_err());
    let bad = TrainConfig {
        alpha: 2.0,
        ..TrainConfig::default()
    };
    assert!(train(small_model(), &tr, &tr, &bad, &SerialExecutor).is_err());
}
