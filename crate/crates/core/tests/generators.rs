use proptest::prelude::*;
use supermap_core::generators::{
    build_regime_switching_map, gen_mild, gen_strong_negative, gen_strong_positive, generate, mild_stickiness,
    rescale_pair_member, sample_map_pair, GeneratorConfig, Method, RegimeSpec, SamplerConfig,
};
use supermap_core::ph::{erlang_ph, hyperexp2_ph};
use supermap_core::rng::SeedStream;
use supermap_core::{MarkovArrivalProcess, Matrix};

fn cfg(method: Method) -> GeneratorConfig {
    GeneratorConfig {
        method,
        ..GeneratorConfig::default()
    }
}

fn mean(map: &MarkovArrivalProcess) -> f64 {
    map.interarrival_moments(1).unwrap()[0]
}

#[test]
fn regime_spec_rejects_non_stochastic_rows() {
    let e = erlang_ph(1, 1.0).unwrap();
    let bad = Matrix::from_rows(&[[0.5, 0.4], [0.5, 0.5]]).unwrap();
    assert!(RegimeSpec::new(vec![e.clone(), e.clone()], bad).is_err());
    assert!(RegimeSpec::new(vec![], Matrix::zeros(0, 0)).is_err());
}

#[test]
fn single_regime_is_renewal() {
    let h = hyperexp2_ph(1.0, 0.4, 9.0).unwrap();
    let spec = RegimeSpec::new(vec![h], Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
    let map = build_regime_switching_map(&spec).unwrap();
    for (k, a1, a2) in [(1, 1, 1), (2, 2, 1), (1, 2, 2)] {
        assert!(map.lag_autocorrelation(k, a1, a2).unwrap().abs() < 1e-9);
    }
}

#[test]
fn alternating_and_sticky_signs() {
    let f = erlang_ph(1, 0.1).unwrap();
    let s = erlang_ph(1, 1.9).unwrap();
    let alt = RegimeSpec::new(vec![f.clone(), s.clone()], Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
    assert!(build_regime_switching_map(&alt).unwrap().lag_autocorrelation(1, 1, 1).unwrap() < 0.0);
    let sticky = RegimeSpec::symmetric(f, s, 0.95).unwrap();
    assert!(build_regime_switching_map(&sticky).unwrap().lag_autocorrelation(1, 1, 1).unwrap() > 0.0);
}

#[test]
fn strong_negative_example() {
    let map = gen_strong_negative(&cfg(Method::StrongNegative)).unwrap();
    let rho = map.lag_autocorrelation(1, 1, 1).unwrap();
    assert!(rho > -0.99 && rho < 0.0, "{rho}");
    assert!((mean(&map) - 1.0).abs() < 1e-10);
}

#[test]
fn strong_positive_example() {
    let c = GeneratorConfig {
        method: Method::StrongPositive,
        mean_fast: 0.05,
        mean_slow: 1.95,
        p_stay: 0.95,
        ..GeneratorConfig::default()
    };
    let map = gen_strong_positive(&c).unwrap();
    let rho = map.lag_autocorrelation(1, 1, 1).unwrap();
    assert!(rho > 0.0 && rho < 0.99, "{rho}");
    assert!((mean(&map) - 1.0).abs() < 1e-10);
}

#[test]
fn stickiness_formula() {
    assert_eq!(mild_stickiness(0.0), 0.5);
    assert!((mild_stickiness(0.4) - 0.798_807).abs() < 1e-5);
    assert!((mild_stickiness(0.99) - 0.933_164).abs() < 1e-5);
    assert!(mild_stickiness(-0.99) > 0.05);
}

#[test]
fn mild_is_deterministic_per_seed() {
    let c = GeneratorConfig {
        seed: 11,
        rho_target: 0.2,
        ..cfg(Method::Mild)
    };
    let a = gen_mild(&c).unwrap();
    let b = gen_mild(&c).unwrap();
    assert_eq!(a, b);
    assert!((mean(&a) - 1.0).abs() < 1e-10);
    let other = gen_mild(&GeneratorConfig { seed: 12, ..c }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn wrong_method_is_rejected() {
    assert!(gen_mild(&cfg(Method::StrongNegative)).is_err());
    let bad = GeneratorConfig {
        mean_fast: 2.0,
        ..cfg(Method::StrongNegative)
    };
    assert!(gen_strong_negative(&bad).is_err());
}

#[test]
fn pair_normalization() {
    let config = SamplerConfig::default();
    for seed in 0..20 {
        let pair = sample_map_pair(seed, &config).unwrap();
        let (m1, m2) = (mean(&pair.first), mean(&pair.second));
        assert!((m1.max(m2) - 1.0).abs() < 1e-10);
        assert!((m2 - pair.scale).abs() < 1e-10 && m2 > 0.0 && m2 <= 1.0);
    }
}

#[test]
fn rescale_bookkeeping() {
    let p = MarkovArrivalProcess::poisson(1.0).unwrap();
    let q = rescale_pair_member(&p, 0.4).unwrap();
    assert!((mean(&q) - 0.4).abs() < 1e-12);
}

#[test]
fn sampler_config_validation() {
    let mut c = SamplerConfig::default();
    assert!(c.validate().is_ok());
    c.method_mix = [0.5, 0.5, 0.5];
    assert!(c.validate().is_err());
}

#[test]
fn method_mix_frequencies() {
    let config = SamplerConfig::default();
    let mut rng = SeedStream::new(21).rng(0);
    let mut counts = [0usize; 3];
    let n = 30_000;
    for _ in 0..n {
        let m = config.pick_method(&mut rng);
        counts[Method::ALL.iter().position(|x| *x == m).unwrap()] += 1;
    }
    for (c, w) in counts.iter().zip(config.method_mix) {
        assert!((*c as f64 / n as f64 - w).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn oversized_streams_exhaust_redraws() {
    let config = SamplerConfig {
        max_stream_dim: 1,
        max_redraws: 3,
        ..SamplerConfig::default()
    };
    assert!(matches!(
        sample_map_pair(0, &config),
        Err(supermap_core::Error::Capacity { cap: 1, .. })
    ));
}

fn sampler() -> SamplerConfig {
    SamplerConfig {
        max_stream_dim: 30,
        ..SamplerConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strong_negative_is_negative(seed in any::<u64>()) {
        let mut rng = SeedStream::new(seed).rng(0);
        let c = sampler().draw_config(Method::StrongNegative, &mut rng);
        let map = gen_strong_negative(&c).unwrap();
        prop_assert!(map.lag_autocorrelation(1, 1, 1).unwrap() < 0.0);
        prop_assert!((mean(&map) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strong_positive_is_positive(seed in any::<u64>()) {
        let mut rng = SeedStream::new(seed).rng(0);
        let c = sampler().draw_config(Method::StrongPositive, &mut rng);
        let map = gen_strong_positive(&c).unwrap();
        prop_assert!(map.lag_autocorrelation(1, 1, 1).unwrap() > 0.0);
        prop_assert!((mean(&map) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mild_stays_in_envelope(seed in any::<u64>()) {
        let mut rng = SeedStream::new(seed).rng(0);
        let c = sampler().draw_config(Method::Mild, &mut rng);
        let map = generate(&c).unwrap();
        let rho = map.lag_autocorrelation(1, 1, 1).unwrap();
        prop_assert!(rho.abs() < 0.5, "{rho}");
        prop_assert!((mean(&map) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_pairs_respect_budget(seed in any::<u64>()) {
        let config = sampler();
        let pair = sample_map_pair(seed, &config).unwrap();
        prop_assert!(pair.first.dim() <= 30 && pair.second.dim() <= 30);
        prop_assert!((mean(&pair.first) - 1.0).abs() < 1e-9);
        prop_assert!((mean(&pair.second) - pair.scale).abs() < 1e-9 * pair.scale.max(1.0));
        prop_assert!(config.scale.lo <= pair.scale && pair.scale <= config.scale.hi);
        let again = sample_map_pair(seed, &config).unwrap();
        prop_assert_eq!(pair.first, again.first);
        prop_assert_eq!(pair.second, again.second);
    }

    #[test]
    fn stickiness_is_monotone(a in -0.99f64..0.99, b in -0.99f64..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(mild_stickiness(lo) <= mild_stickiness(hi));
        prop_assert!((0.05..=0.95).contains(&mild_stickiness(a)));
    }
}
