//! Closed-loop checks of the angular regression pipeline on constructed
//! data with exact angular structure.

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tailcast::egp::{EgpParams, ThresholdedMarginal};
use tailcast::forest::ForestConfig;
use tailcast::preprocess::ObservationFrame;
use tailcast::roxane::{ols_fit, roxane_predict, roxane_train, FittedRegressor, Regressor, RegressorSpec};
use tailcast::transforms::{angular_invert, pareto_inverse, pareto_transform, MarginalSet};

fn marginals() -> MarginalSet {
    let m = |s, x, k| ThresholdedMarginal::from_params(EgpParams::new(s, x, k).unwrap()).unwrap();
    MarginalSet {
        covariates: vec![m(0.13, -0.092, 15.12), m(0.10, 0.004, 13.05)],
        target: m(0.09, -0.010, 38.68),
    }
}

/// Build an extreme frame whose target angle is exactly `a·Θ_{X,1} + b`,
/// returning the frame plus the true thetas for reference.
fn angular_linear_frame(
    ms: &MarginalSet,
    n: usize,
    a: f64,
    b: f64,
    noise_sd: f64,
    seed: u64,
) -> (ObservationFrame, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
    let mut covs = Vec::with_capacity(2 * n);
    let mut targets = Vec::with_capacity(n);
    let mut thetas = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    let mut i = 0usize;
    while targets.len() < n {
        i += 1;
        // random covariate angle and a radius large enough that both the
        // exceedance requirement and p(y) ≥ 1 hold
        let phi: f64 = rng.gen_range(0.1..(std::f64::consts::FRAC_PI_2 - 0.1));
        let radius: f64 = rng.gen_range(8.0..60.0);
        let px = [radius * phi.cos(), radius * phi.sin()];
        if px[0] < 1.0 || px[1] < 1.0 {
            continue;
        }
        let theta1 = px[0] / radius;
        let eps: f64 = if noise_sd > 0.0 {
            noise_sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
        } else {
            0.0
        };
        let theta_y = (a * theta1 + b + eps).clamp(0.05, 0.93);
        let py = angular_invert(theta_y, radius);
        if py < 1.0 {
            continue;
        }
        // back to meters; the row must be extreme
        let x0 = pareto_inverse(&ms.covariates[0], px[0]).unwrap();
        let x1 = pareto_inverse(&ms.covariates[1], px[1]).unwrap();
        if x0 <= ms.covariates[0].threshold && x1 <= ms.covariates[1].threshold {
            continue;
        }
        let y = pareto_inverse(&ms.target, py).unwrap();
        covs.push(x0);
        covs.push(x1);
        targets.push(y);
        thetas.push(theta_y);
        timestamps.push(t0 + Duration::hours(12 * i as i64));
    }
    (
        ObservationFrame::new(
            timestamps,
            covs,
            2,
            Some(targets),
            vec!["a".into(), "b".into(), "y".into()],
        ),
        thetas,
    )
}

#[test]
fn ols_recovers_exact_angular_coefficients() {
    let ms = marginals();
    let (frame, _) = angular_linear_frame(&ms, 400, 0.55, 0.25, 0.0, 3);
    let model = roxane_train(&frame, &ms, &RegressorSpec::Ols).unwrap();
    let FittedRegressor::Ols(ols) = &model.regressor else {
        panic!("expected OLS")
    };
    assert!((ols.coefficients[0] - 0.25).abs() < 1e-8, "{:?}", ols.coefficients);
    assert!((ols.coefficients[1] - 0.55).abs() < 1e-8, "{:?}", ols.coefficients);
    assert!(ols.coefficients[2].abs() < 1e-8, "{:?}", ols.coefficients);

    // closed loop: predictions reproduce the true targets through the
    // transform round-trip
    let targets = frame.target.as_ref().unwrap();
    for r in 0..frame.n_rows() {
        let yhat = roxane_predict(&model, frame.covariate_row(r)).unwrap();
        let y = targets[r];
        assert!(
            (yhat - y).abs() <= 1e-6 * y.abs().max(1e-3),
            "row {r}: {yhat} vs {y}"
        );
    }
}

#[test]
fn training_is_deterministic() {
    let ms = marginals();
    let (frame, _) = angular_linear_frame(&ms, 200, 0.5, 0.2, 0.03, 11);
    let spec = RegressorSpec::Forest(ForestConfig {
        n_trees: 40,
        ..ForestConfig::new(7)
    });
    let m1 = roxane_train(&frame, &ms, &spec).unwrap();
    let m2 = roxane_train(&frame, &ms, &spec).unwrap();
    for r in 0..frame.n_rows().min(20) {
        let x = frame.covariate_row(r);
        assert_eq!(
            roxane_predict(&m1, x).unwrap(),
            roxane_predict(&m2, x).unwrap()
        );
    }
}

#[test]
fn prediction_depends_only_on_angle_and_radius() {
    let ms = marginals();
    let (frame, _) = angular_linear_frame(&ms, 300, 0.5, 0.2, 0.02, 17);
    let model = roxane_train(&frame, &ms, &RegressorSpec::Ols).unwrap();

    // the regressor sees only the angle: scaling the Pareto vector leaves
    // its output unchanged
    let theta = [0.6, 0.8];
    let f1 = model.regressor.predict(&theta);
    for scale in [2.0, 10.0, 100.0] {
        let scaled = [theta[0] * scale, theta[1] * scale];
        let norm = (scaled[0] * scaled[0] + scaled[1] * scaled[1]).sqrt();
        let renorm = [scaled[0] / norm, scaled[1] / norm];
        assert_eq!(model.regressor.predict(&renorm), f1);
    }

    // equal angle and radius in meters gives bit-identical predictions
    let x = frame.covariate_row(0);
    let p1 = roxane_predict(&model, x).unwrap();
    let p2 = roxane_predict(&model, &x.to_vec()).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn ols_test_mse_tracks_the_noise_floor() {
    // angular-linear data with noise: held-out angle MSE ≤ 1.1 σ²
    let ms = marginals();
    let noise_sd = 0.02;
    let (train, _) = angular_linear_frame(&ms, 5000, 0.5, 0.2, noise_sd, 23);
    let (test, test_thetas) = angular_linear_frame(&ms, 5000, 0.5, 0.2, noise_sd, 24);
    let model = roxane_train(&train, &ms, &RegressorSpec::Ols).unwrap();

    let mut mse = 0.0;
    for r in 0..test.n_rows() {
        let px: Vec<f64> = test
            .covariate_row(r)
            .iter()
            .zip(&ms.covariates)
            .map(|(&z, m)| pareto_transform(m, z).unwrap())
            .collect();
        let norm = (px[0] * px[0] + px[1] * px[1]).sqrt();
        let theta = [px[0] / norm, px[1] / norm];
        let err = model.regressor.predict(&theta) - test_thetas[r];
        mse += err * err;
    }
    mse /= test.n_rows() as f64;
    assert!(
        mse <= 1.1 * noise_sd * noise_sd,
        "test MSE {mse} vs noise floor {}",
        noise_sd * noise_sd
    );
}

#[test]
fn forest_beats_the_mean_on_nonlinear_angles() {
    let ms = marginals();
    // a nonlinear angular response exercises the forest's splits
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let rows: Vec<Vec<f64>> = (0..600)
        .map(|_| {
            let phi: f64 = rng.gen_range(0.1..1.4);
            vec![phi.cos(), phi.sin()]
        })
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| if r[0] > 0.7 { 0.8 } else { 0.3 })
        .collect();
    let f = tailcast::forest::forest_fit(
        &rows,
        &y,
        &ForestConfig {
            n_trees: 60,
            ..ForestConfig::new(5)
        },
    )
    .unwrap();
    let mse: f64 = rows
        .iter()
        .zip(&y)
        .map(|(r, &t)| {
            let e = Regressor::predict(&f, r) - t;
            e * e
        })
        .sum::<f64>()
        / rows.len() as f64;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var: f64 = y.iter().map(|&t| (t - mean) * (t - mean)).sum::<f64>() / y.len() as f64;
    assert!(mse < 0.2 * var, "forest MSE {mse} vs variance {var}");
}

#[test]
fn ols_example_from_the_module_contract() {
    let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
    let fit = ols_fit(&rows, &[1.0, 3.0, 5.0]).unwrap();
    assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
    assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
}
