//! Property-based invariants for the distribution functionals and the
//! ensemble statistics.

use bhgen_core::distributions::{LifetimeDistribution, OffspringDistribution};
use bhgen_core::rng::RngStream;
use bhgen_core::stats::{ks_two_sample, pearson};
use proptest::prelude::*;

fn lifetime_strategy() -> impl Strategy<Value = LifetimeDistribution> {
    prop_oneof![
        (0.1f64..5.0).prop_map(|rate| LifetimeDistribution::Exponential { rate }),
        ((2.0f64..20.0), (0.2f64..3.0))
            .prop_map(|(mean, sd)| LifetimeDistribution::LogNormal { mean, sd }),
        ((0.5f64..6.0), (0.5f64..6.0))
            .prop_map(|(shape, scale)| LifetimeDistribution::Gamma { shape, scale }),
        (0.1f64..10.0).prop_map(|value| LifetimeDistribution::Deterministic { value }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplace_is_one_at_zero_and_decreasing(dist in lifetime_strategy()) {
        prop_assert_eq!(dist.laplace(0.0).unwrap(), 1.0);
        let mut prev = 1.0;
        for i in 1..=6 {
            let s = i as f64 * 0.12;
            let value = dist.laplace(s).unwrap();
            prop_assert!(value > 0.0 && value < prev,
                "laplace not strictly decreasing at s = {}: {} !< {}", s, value, prev);
            prev = value;
        }
    }

    #[test]
    fn weighted_transform_is_negative_derivative(dist in lifetime_strategy(), s in 0.05f64..1.5) {
        // E(L e^{-sL}) = -d/ds E(e^{-sL}), central difference with step 1e-5
        let h = 1e-5;
        let derivative = (dist.laplace(s - h).unwrap() - dist.laplace(s + h).unwrap()) / (2.0 * h);
        let weighted = dist.laplace_weighted(s).unwrap();
        prop_assert!((weighted - derivative).abs() <= 1e-6 * weighted.abs().max(1e-12),
            "weighted {} vs central difference {}", weighted, derivative);
    }

    #[test]
    fn exponential_laplace_closed_form_band(rate in 0.2f64..4.0, frac in 0.0f64..1.0) {
        let dist = LifetimeDistribution::Exponential { rate };
        let s = 10.0 * rate * frac;
        let closed = rate / (rate + s);
        prop_assert!((dist.laplace(s).unwrap() - closed).abs() <= 1e-10);
    }

    #[test]
    fn sampling_replays_bit_for_bit(dist in lifetime_strategy(), seed in any::<u64>(), stream in 0u64..1000) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(dist.sample(&mut a).to_bits(), dist.sample(&mut b).to_bits());
        }
    }

    #[test]
    fn ks_zero_on_self_and_symmetric(
        a in prop::collection::vec(-50.0f64..50.0, 1..40),
        b in prop::collection::vec(-50.0f64..50.0, 1..40),
    ) {
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn pearson_affine_invariance(
        xs in prop::collection::vec(-10.0f64..10.0, 3..30),
        scale_a in 0.01f64..100.0,
        shift_a in -50.0f64..50.0,
        scale_b in 0.01f64..100.0,
        shift_b in -50.0f64..50.0,
    ) {
        // pair xs with a fixed nonlinear companion to avoid degenerate variance
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + (i as f64) * 0.1).collect();
        prop_assume!(pearson(&xs, &ys).is_ok());
        let r = pearson(&xs, &ys).unwrap();
        let xs2: Vec<f64> = xs.iter().map(|x| scale_a * x + shift_a).collect();
        let ys2: Vec<f64> = ys.iter().map(|y| scale_b * y + shift_b).collect();
        let r2 = pearson(&xs2, &ys2).unwrap();
        prop_assert!((r - r2).abs() <= 1e-12, "{} vs {}", r, r2);
    }

    #[test]
    fn offspring_weights_must_sum_to_one(leak in 1e-6f64..0.5) {
        let result = OffspringDistribution::new(vec![0, 2], vec![0.2, 0.8 - leak]);
        prop_assert!(result.is_err());
    }
}
