//! Null distributions, p-values and the noise grid.

use fpp::data::{shuffle_response, standardize, synth_noise};
use fpp::optimizer::{fit, HyperParams};
use fpp::rng::derive_seed;
use fpp::significance::{
    grid_study, null_distribution, p_value_empirical, p_value_parametric, spearman, GridConfig, MetricKind,
    NullDistribution,
};
use proptest::prelude::*;

/// A fit small enough to repeat thousands of times.
fn tiny() -> HyperParams {
    HyperParams {
        batch_size: 20,
        epochs: 5,
        degree: 1,
        restarts: 1,
        ..HyperParams::default()
    }
}

fn null_of(samples: Vec<f64>, kind: MetricKind) -> NullDistribution {
    let seeds = (0..samples.len() as u64).collect();
    NullDistribution::new(kind, samples, seeds, HyperParams::default()).unwrap()
}

/// Kolmogorov–Smirnov distance of `p` from Uniform(0, 1).
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

#[test]
fn empirical_p_is_uniform_under_the_null() {
    let hp = tiny();
    let reps = 200;
    let p: Vec<f64> = (0..reps as u64)
        .map(|r| {
            let data = standardize(&synth_noise(20, 3, r).unwrap()).0;
            let data = shuffle_response(&data, 0, derive_seed(r, 1)).unwrap();
            let observed = fit(
                &data,
                &HyperParams {
                    seed: derive_seed(r, 2),
                    ..hp.clone()
                },
            )
            .unwrap()
            .final_train_loss;
            let null = null_distribution(&data, &hp, 99, derive_seed(r, 3)).unwrap();
            p_value_empirical(observed, &null)
        })
        .collect();
    let ks = ks_uniform(p);
    // asymptotic 1% critical value of the one-sample statistic
    let critical = 1.628 / (reps as f64).sqrt();
    assert!(ks < critical, "KS statistic {ks:.4} exceeds {critical:.4}");
}

#[test]
fn null_distribution_is_reproducible() {
    let data = standardize(&synth_noise(60, 4, 5).unwrap()).0;
    let a = null_distribution(&data, &tiny(), 8, 17).unwrap();
    let b = null_distribution(&data, &tiny(), 8, 17).unwrap();
    assert_eq!(a, b);
    let c = null_distribution(&data, &tiny(), 8, 18).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn null_losses_are_finite_and_non_negative() {
    let data = standardize(&synth_noise(80, 5, 6).unwrap()).0;
    let null = null_distribution(&data, &HyperParams::default(), 10, 3).unwrap();
    assert_eq!(null.trials(), 10);
    assert!(null.samples.iter().all(|s| s.is_finite() && *s >= 0.0));
}

#[test]
fn pure_noise_sits_inside_its_null() {
    let hp = HyperParams {
        batch_size: 40,
        epochs: 10,
        restarts: 1,
        ..HyperParams::default()
    };
    let seeds = 10;
    let inside = (0..seeds)
        .filter(|&s| {
            let data = standardize(&synth_noise(120, 4, 100 + s).unwrap()).0;
            let observed = fit(&data, &HyperParams { seed: s, ..hp.clone() }).unwrap().final_train_loss;
            let null = null_distribution(&data, &hp, 39, 200 + s).unwrap();
            let below = null.samples.iter().filter(|&&v| v < observed).count() as f64;
            let rank = below / null.trials() as f64;
            (0.05..=0.95).contains(&rank)
        })
        .count();
    assert!(inside >= 7, "observed loss inside the central 90% in only {inside}/{seeds} seeds");
}

#[test]
fn too_few_trials_are_rejected() {
    let data = synth_noise(30, 3, 0).unwrap();
    assert!(null_distribution(&data, &tiny(), 1, 0).is_err());
    assert!(NullDistribution::new(MetricKind::Loss, vec![1.0, f64::NAN], vec![0, 1], tiny()).is_err());
}

#[test]
fn spearman_matches_hand_computed_values() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]), -1.0);
    // ranks (1,2,3,4) and (2,1,4,3): 1 − 6·4 / (4·15) = 0.6
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]) - 0.6).abs() < 1e-12);
    assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_nan());
}

#[test]
fn grid_matrices_match_the_grid_shape() {
    let cfg = GridConfig {
        dims: vec![2, 6],
        sizes: vec![40, 120, 400],
        trials_per_cell: 3,
        min_steps: 100,
        ..GridConfig::default()
    };
    let r = grid_study(&cfg).unwrap();
    for m in [&r.mean_r2, &r.std_r2, &r.p_at_reference] {
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|row| row.len() == 3));
    }
    assert!(r.samples.iter().flatten().all(|c| c.len() == 3));
    assert!(r.p_at_reference.iter().flatten().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(r, grid_study(&cfg).unwrap());
    let csv = r.matrix_csv(&r.mean_r2);
    assert_eq!(csv.lines().next(), Some("dim,n=40,n=120,n=400"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn grid_rejects_degenerate_settings() {
    for cfg in [
        GridConfig {
            dims: vec![],
            ..GridConfig::default()
        },
        GridConfig {
            trials_per_cell: 1,
            ..GridConfig::default()
        },
        GridConfig {
            dims: vec![1],
            ..GridConfig::default()
        },
    ] {
        assert!(grid_study(&cfg).is_err());
    }
}

proptest! {
    #[test]
    fn empirical_p_is_in_range_and_monotone(
        samples in prop::collection::vec(-10.0f64..10.0, 2..40),
        a in -12.0f64..12.0,
        b in -12.0f64..12.0,
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let loss = null_of(samples.clone(), MetricKind::Loss);
        let (p_lo, p_hi) = (p_value_empirical(lo, &loss), p_value_empirical(hi, &loss));
        prop_assert!(p_lo > 0.0 && p_hi <= 1.0);
        prop_assert!(p_lo <= p_hi);
        let r2 = null_of(samples, MetricKind::R2);
        prop_assert!(p_value_empirical(lo, &r2) >= p_value_empirical(hi, &r2));
    }

    #[test]
    fn parametric_p_is_strictly_monotone(
        samples in prop::collection::vec(-10.0f64..10.0, 3..40),
        a in -3.0f64..3.0,
        gap in 1e-3f64..3.0,
    ) {
        let null = null_of(samples, MetricKind::Loss);
        prop_assume!(null.std_dev() > 1e-3);
        let (m, sd) = (null.mean(), null.std_dev());
        let lo = p_value_parametric(m + a * sd, &null).unwrap();
        let hi = p_value_parametric(m + (a + gap) * sd, &null).unwrap();
        prop_assert!(lo < hi);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        // continuity: a tiny move changes p by a tiny amount
        let near = p_value_parametric(m + (a + 1e-9) * sd, &null).unwrap();
        prop_assert!((near - lo).abs() < 1e-8);
    }
}
