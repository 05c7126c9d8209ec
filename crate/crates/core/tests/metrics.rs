use proptest::prelude::*;
use supermap_core::metrics::{
    mae, mape, partition_regimes, rem, sae, PairFeatures, RegimeKey, RhoBand, Scheme, Split, HIST_LEN, SCV_THRESHOLD,
};

#[test]
fn mape_examples() {
    assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(mape(&[2.0], &[1.0]).unwrap(), 50.0);
    assert!((mape(&[1.0, 2.0, 4.0], &[1.1, 1.8, 4.4]).unwrap() - 10.0).abs() < 1e-12);
    assert!(mape(&[0.0], &[1.0]).is_err());
    assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn mae_examples() {
    assert_eq!(mae(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
    assert!((mae(&[0.1, -0.1], &[0.0, 0.0]).unwrap() - 0.1).abs() < 1e-15);
}

fn point_mass(i: usize) -> Vec<f64> {
    let mut p = vec![0.0; HIST_LEN];
    p[i] = 1.0;
    p
}

#[test]
fn sae_and_rem_examples() {
    assert_eq!(sae(&point_mass(0), &point_mass(0)).unwrap(), 0.0);
    assert_eq!(sae(&point_mass(0), &point_mass(1)).unwrap(), 2.0);
    let mut bad = point_mass(0);
    bad[3] = -0.1;
    assert!(sae(&bad, &point_mass(0)).is_err());
    assert!(sae(&[1.0], &[1.0]).is_err());

    assert_eq!(rem(&point_mass(3), &point_mass(3)).unwrap(), 0.0);
    // mean 2.0 against mean 2.2 as a two-point mixture
    let mut pred = vec![0.0; HIST_LEN];
    pred[2] = 0.8;
    pred[3] = 0.2;
    let r = rem(&point_mass(2), &pred).unwrap();
    assert!((r - 100.0 * 0.2 / 2.2).abs() < 1e-9, "{r}");
    assert!(rem(&point_mass(1), &point_mass(0)).is_err());
}

#[test]
fn key_indices_are_bijective() {
    for scheme in [Scheme::Scv, Scheme::Rho, Scheme::System] {
        for (i, k) in scheme.keys().iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(k.labels().len(), scheme.columns().len());
        }
    }
}

#[test]
fn regime_examples() {
    let f = PairFeatures {
        scv1: 2.0,
        scv2: 5.0,
        rho1: -0.3,
        rho2: 0.1,
        mean_ratio: 0.3,
    };
    assert_eq!(
        f.scv_key(),
        RegimeKey::Scv {
            scv1: Split::Below,
            scv2: Split::AtLeast,
            ratio: Split::Below
        }
    );
    assert_eq!(f.scv_key().index(), 2);
    let g = PairFeatures { mean_ratio: 0.7, ..f };
    assert_eq!(
        g.rho_key(),
        RegimeKey::Rho {
            rho1: RhoBand::StrongNegative,
            rho2: RhoBand::WeakPositive,
            ratio: Split::AtLeast
        }
    );
    assert_eq!(g.rho_key().index(), 5);
}

#[test]
fn boundaries_are_half_open() {
    assert_eq!(Split::of(3.0, SCV_THRESHOLD), Split::AtLeast);
    assert_eq!(RhoBand::of(-0.25), RhoBand::WeakNegative);
    assert_eq!(RhoBand::of(0.0), RhoBand::WeakPositive);
    assert_eq!(RhoBand::of(0.25), RhoBand::StrongPositive);
    assert_eq!(RhoBand::of(-1.0), RhoBand::StrongNegative);
}

#[test]
fn system_key_row_order() {
    let f = PairFeatures {
        scv1: 1.0,
        scv2: 1.0,
        rho1: -0.1,
        rho2: 0.1,
        mean_ratio: 0.5,
    };
    // row 4 of the system table: all SCVs below 3, signs (-, +), utilization above 0.7
    assert_eq!(f.system_key(1.0, 0.8).index(), 3);
}

#[test]
fn scheme_sizes() {
    assert_eq!(Scheme::Scv.len(), 8);
    assert_eq!(Scheme::Rho.len(), 32);
    assert_eq!(Scheme::System.len(), 64);
}

fn arb_features() -> impl Strategy<Value = PairFeatures> {
    (0.0f64..10.0, 0.0f64..10.0, -1.0f64..=1.0, -1.0f64..=1.0, 0.01f64..=1.0).prop_map(
        |(scv1, scv2, rho1, rho2, mean_ratio)| PairFeatures {
            scv1,
            scv2,
            rho1,
            rho2,
            mean_ratio,
        },
    )
}

proptest! {
    #[test]
    fn partitions_cover_every_item_once(
        items in proptest::collection::vec((arb_features(), 0.0f64..10.0, 0.0f64..1.0), 0..200),
    ) {
        for scheme in [Scheme::Scv, Scheme::Rho, Scheme::System] {
            let key = |(f, s, u): &(PairFeatures, f64, f64)| match scheme {
                Scheme::Scv => f.scv_key(),
                Scheme::Rho => f.rho_key(),
                Scheme::System => f.system_key(*s, *u),
            };
            let parts = partition_regimes(&items, key);
            let mut seen: Vec<usize> = parts.values().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..items.len()).collect::<Vec<_>>());
            for k in parts.keys() {
                prop_assert_eq!(k.scheme(), scheme);
                prop_assert!(k.index() < scheme.len());
            }
        }
    }

    #[test]
    fn index_round_trips(i in 0usize..64) {
        for scheme in [Scheme::Scv, Scheme::Rho, Scheme::System] {
            if i < scheme.len() {
                prop_assert_eq!(RegimeKey::from_index(scheme, i).index(), i);
            }
        }
    }

    #[test]
    fn mape_is_scale_invariant(
        truth in proptest::collection::vec(0.1f64..10.0, 1..20),
        noise in proptest::collection::vec(0.5f64..1.5, 20),
        c in 0.01f64..100.0,
    ) {
        let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, n)| t * n).collect();
        let scaled_t: Vec<f64> = truth.iter().map(|t| t * c).collect();
        let scaled_p: Vec<f64> = pred.iter().map(|p| p * c).collect();
        let a = mape(&truth, &pred).unwrap();
        prop_assert!((a - mape(&scaled_t, &scaled_p).unwrap()).abs() <= 1e-9 * a.max(1.0));
        prop_assert!(mae(&truth, &pred).unwrap() >= 0.0);
    }

    #[test]
    fn sae_is_a_bounded_metric(
        a in proptest::collection::vec(0.0f64..1.0, HIST_LEN),
        b in proptest::collection::vec(0.0f64..1.0, HIST_LEN),
    ) {
        let norm = |v: Vec<f64>| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (a, b) = (norm(a), norm(b));
        let d = sae(&a, &b).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&d));
        prop_assert!((d - sae(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(sae(&a, &a).unwrap(), 0.0);
    }
}
