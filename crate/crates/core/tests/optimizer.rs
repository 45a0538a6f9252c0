//! Optimizer behaviour: manifold constraint, reproducibility, symmetry and
//! the worked fitting examples.

use approx::assert_abs_diff_eq;
use fpp::data::{
    shuffle_response, standardize, synth_circle, synth_multi, train_test_split, Dataset, Response,
};
use fpp::linalg::orthonormality_error;
use fpp::models::{mse_loss, ols_fit, Head};
use fpp::optimizer::{
    fit, fit_with_observer, principal_angles, random_orthonormal, retract, rotate_embedding, HyperParams,
    LrSchedule, OptimizerKind, ProjectionMatrix, RetractionMode, StepInfo,
};
use fpp::pipeline::{run_fit, PipelineConfig};
use fpp::rng::seeded;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn truth(d: &Dataset) -> ProjectionMatrix {
    ProjectionMatrix::new(d.ground_truth().unwrap().basis.clone()).unwrap()
}

fn largest_angle_deg(p: &ProjectionMatrix, q: &ProjectionMatrix) -> f64 {
    principal_angles(p, q).unwrap().1.to_degrees()
}

#[test]
fn every_step_stays_orthonormal() {
    let d = standardize(&synth_circle(400, 8, 0.05, 1).unwrap()).0;
    for (optimizer, retraction) in [
        (OptimizerKind::Sgd, RetractionMode::PolarFactor),
        (OptimizerKind::Adam, RetractionMode::PolarFactor),
        (OptimizerKind::Adam, RetractionMode::PaperU),
    ] {
        let hp = HyperParams {
            epochs: 10,
            optimizer,
            retraction,
            restarts: 2,
            ..Default::default()
        };
        let mut steps = 0;
        let mut worst = 0.0f64;
        let mut obs = |s: &StepInfo| {
            steps += 1;
            worst = worst.max(s.orthonormality_error);
        };
        let r = fit_with_observer(&d, &hp, Some(&mut obs)).unwrap();
        // a halving restart repeats steps, so this is a lower bound
        assert!(steps >= 2 * 10 * 8, "only {steps} steps observed");
        assert!(worst < 1e-8, "{optimizer:?}/{retraction:?}: {worst:e}");
        assert!(orthonormality_error(r.projection.matrix().view()) < 1e-8);
    }
}

#[test]
fn fit_is_bit_reproducible() {
    let d = standardize(&synth_multi(600, 6, 3, 2).unwrap()).0;
    for hp in [HyperParams::default(), HyperParams::plain_sgd()] {
        let a = serde_json::to_string(&fit(&d, &hp).unwrap()).unwrap();
        let b = serde_json::to_string(&fit(&d, &hp).unwrap()).unwrap();
        assert_eq!(a, b);
    }
    let other = HyperParams {
        seed: 1,
        ..Default::default()
    };
    assert_ne!(fit(&d, &other).unwrap().projection, fit(&d, &HyperParams::default()).unwrap().projection);
}

#[test]
fn restarts_keep_the_lowest_loss() {
    let d = standardize(&synth_circle(300, 6, 0.05, 3).unwrap()).0;
    let best = fit(
        &d,
        &HyperParams {
            restarts: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let single = fit(
        &d,
        &HyperParams {
            restarts: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(best.final_train_loss <= single.final_train_loss);
}

#[test]
fn full_batch_loss_is_monotone_on_a_linear_instance() {
    let mut rng = seeded(4);
    let n = 200;
    let x = Array2::from_shape_fn((n, 4), |_| rng.sample::<f64, _>(StandardNormal));
    let f: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| 1.5 * r[0] - 0.5 * r[2] + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let d = Dataset::new(x, vec![Response::continuous("f", f).unwrap()]).unwrap();
    let hp = HyperParams {
        degree: 1,
        batch_size: n,
        epochs: 200,
        ..HyperParams::plain_sgd()
    };
    let r = fit(&d, &hp).unwrap();
    assert_eq!(r.halvings, 0);
    for w in r.loss_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "loss rose from {} to {}", w[0], w[1]);
    }
    assert!(r.final_train_loss < 0.05);
}

#[test]
fn response_order_does_not_matter() {
    let d = standardize(&synth_multi(800, 5, 3, 5).unwrap()).0;
    let hp = HyperParams {
        epochs: 20,
        restarts: 1,
        ..Default::default()
    };
    let forward = fit(&d, &hp).unwrap();
    let reversed: Vec<Response> = d.responses().iter().rev().cloned().collect();
    let backward = fit(&d.with_responses(reversed).unwrap(), &hp).unwrap();
    assert_abs_diff_eq!(forward.final_train_loss, backward.final_train_loss, epsilon = 1e-9);
    for (a, b) in forward.projection.matrix().iter().zip(backward.projection.matrix()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-7);
    }
}

#[test]
fn planar_cubic_is_fitted_almost_exactly() {
    let mut rng = seeded(6);
    let n = 3000;
    let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0f64..1.0));
    let f: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| 0.5 + r[0] - 2.0 * r[0] * r[1] + 0.7 * r[1].powi(3) - r[0].powi(2))
        .collect();
    let d = Dataset::new(x, vec![Response::continuous("f", f).unwrap()]).unwrap();
    let d = standardize(&d).0;
    let r = fit(&d, &HyperParams::default()).unwrap();
    assert!(r.scores[0].train >= 0.999, "train R² {}", r.scores[0].train);
}

#[test]
fn noiseless_circle_is_recovered() {
    let mut hits = 0;
    for seed in 0..10 {
        let d = standardize(&synth_circle(3000, 5, 0.0, seed).unwrap()).0;
        let r = fit(
            &d,
            &HyperParams {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        if largest_angle_deg(&r.projection, &truth(&d)) < 5.0 {
            hits += 1;
        }
    }
    assert!(hits >= 8, "{hits}/10 seeds recovered the plane");
}

#[test]
fn shuffled_circle_has_no_structure_to_find() {
    let d = standardize(&synth_circle(3000, 5, 0.0, 7).unwrap()).0;
    let shuffled = shuffle_response(&d, 0, 99).unwrap();
    let r = fit(&shuffled, &HyperParams::default()).unwrap();
    assert!(r.scores[0].train < 0.1, "train R² {}", r.scores[0].train);
}

#[test]
fn pre_projection_keeps_enough_of_the_circle() {
    let mut good = 0;
    let mut kept = 0.0;
    for seed in 0..10 {
        let d = synth_circle(3000, 200, 0.0, seed).unwrap();
        let cfg = PipelineConfig {
            hyperparams: HyperParams {
                seed,
                ..Default::default()
            },
            pre_dim: Some(20),
            test_fraction: None,
        };
        let (report, prepared) = run_fit(&d, &cfg).unwrap();
        assert!(orthonormality_error(report.composite_projection.matrix().view()) < 1e-10);
        // share of the signal plane's energy that survives the random map
        let r = prepared.pre_projection.as_ref().unwrap();
        kept += r.slice(ndarray::s![0..2, ..]).iter().map(|v| v * v).sum::<f64>() / 2.0 / 10.0;
        if report.mean_train_score() >= 0.8 {
            good += 1;
        }
    }
    assert!(
        good > 5,
        "{good}/10 seeds reached training R² 0.8; the pre-projection kept {:.3} of the signal plane on average",
        kept
    );
}

#[test]
fn pre_projection_must_reduce_the_dimension() {
    let d = synth_circle(100, 6, 0.0, 0).unwrap();
    let cfg = PipelineConfig {
        pre_dim: Some(6),
        ..Default::default()
    };
    assert!(run_fit(&d, &cfg).is_err());
}

#[test]
fn least_squares_head_dominates_the_trained_head() {
    let d = standardize(&synth_circle(1000, 6, 0.05, 8).unwrap()).0;
    let split = train_test_split(&d, 0.2, 8).unwrap();
    for hp in [HyperParams::default(), HyperParams::plain_sgd()] {
        let r = fit(&split.train, &hp).unwrap();
        let y = r.projection.project(split.train.features().view()).unwrap();
        let t = split.train.responses()[0].as_continuous().unwrap();
        let Head::Polynomial(trained) = &r.heads[0] else {
            panic!("continuous response must have a polynomial head")
        };
        let trained_loss = mse_loss(&trained.predict_batch(y.view()), t).unwrap().value;
        let ols = ols_fit(y.view(), t, hp.degree).unwrap();
        let ols_loss = mse_loss(&ols.predict_batch(y.view()), t).unwrap().value;
        assert!(ols_loss <= trained_loss + 1e-9, "{ols_loss} > {trained_loss}");
    }
}

#[test]
fn random_planes_are_not_aligned() {
    let mut small = 0;
    for k in 0..100u64 {
        let p = random_orthonormal(50, 2 * k).unwrap();
        let q = random_orthonormal(50, 2 * k + 1).unwrap();
        if principal_angles(&p, &q).unwrap().0 < 0.5 {
            small += 1;
        }
    }
    assert!(small <= 2, "{small} of 100 random pairs nearly share a direction");
}

fn matrix_strategy() -> impl Strategy<Value = Array2<f64>> {
    (2usize..10).prop_flat_map(|d| {
        prop::collection::vec(-3.0f64..3.0, 2 * d)
            .prop_map(move |v| Array2::from_shape_vec((d, 2), v).unwrap())
    })
}

fn points_strategy() -> impl Strategy<Value = (Array2<f64>, Vec<f64>)> {
    (12usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, 2 * n).prop_map(move |v| Array2::from_shape_vec((n, 2), v).unwrap()),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #[test]
    fn retraction_is_idempotent(p in matrix_strategy()) {
        let once = retract(p.view(), RetractionMode::PolarFactor).unwrap().projection;
        let twice = retract(once.matrix().view(), RetractionMode::PolarFactor).unwrap().projection;
        prop_assert!(orthonormality_error(once.matrix().view()) < 1e-10);
        for (a, b) in once.matrix().iter().zip(twice.matrix()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn u_factor_retraction_spans_the_same_plane(p in matrix_strategy()) {
        let polar = retract(p.view(), RetractionMode::PolarFactor).unwrap();
        let u_factor = retract(p.view(), RetractionMode::PaperU).unwrap();
        prop_assume!(!polar.recovered && !u_factor.recovered);
        let (_, largest) = principal_angles(&polar.projection, &u_factor.projection).unwrap();
        prop_assert!(largest < 1e-6);
    }

    #[test]
    fn projection_is_linear_and_non_expansive(
        p in matrix_strategy(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let p = retract(p.view(), RetractionMode::PolarFactor).unwrap().projection;
        let mut rng = seeded(seed);
        let d = p.dim();
        let x1 = Array2::from_shape_fn((5, d), |_| rng.sample::<f64, _>(StandardNormal));
        let x2 = Array2::from_shape_fn((5, d), |_| rng.sample::<f64, _>(StandardNormal));
        let combined = p.project((&x1 * a + &x2 * b).view()).unwrap();
        let separate = p.project(x1.view()).unwrap() * a + p.project(x2.view()).unwrap() * b;
        for (u, v) in combined.iter().zip(&separate) {
            prop_assert!((u - v).abs() < 1e-12);
        }
        let y = p.project(x1.view()).unwrap();
        for (xr, yr) in x1.rows().into_iter().zip(y.rows()) {
            prop_assert!(yr.dot(&yr) <= xr.dot(&xr) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn polynomial_fit_quality_is_rotation_invariant(
        (y, t) in points_strategy(),
        degree in 1usize..4,
        angle in -360.0f64..360.0,
    ) {
        let m = (degree + 1) * (degree + 2) / 2;
        prop_assume!(y.nrows() >= 2 * m);
        let loss = |c: &Array2<f64>| {
            let h = ols_fit(c.view(), &t, degree).unwrap();
            mse_loss(&h.predict_batch(c.view()), &t).unwrap().value
        };
        let before = loss(&y);
        let after = loss(&rotate_embedding(y.view(), angle));
        prop_assert!((before - after).abs() < 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn rotating_the_plane_keeps_its_span(p in matrix_strategy(), angle in -720.0f64..720.0) {
        let p = retract(p.view(), RetractionMode::PolarFactor).unwrap().projection;
        let (a, b) = principal_angles(&p, &p.rotated(angle)).unwrap();
        prop_assert!(a < 1e-7 && b < 1e-7);
    }
}

#[test]
fn constant_schedule_keeps_the_step() {
    let d = standardize(&synth_circle(200, 4, 0.05, 9).unwrap()).0;
    let hp = HyperParams {
        epochs: 3,
        schedule: LrSchedule::Constant,
        restarts: 1,
        ..HyperParams::plain_sgd()
    };
    let mut rates = Vec::new();
    let mut obs = |s: &StepInfo| rates.push(s.learning_rate);
    fit_with_observer(&d, &hp, Some(&mut obs)).unwrap();
    assert!(rates.iter().all(|&r| r == hp.learning_rate));
}
