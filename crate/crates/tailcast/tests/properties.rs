//! Property tests for the distribution functions, transforms and metrics.

use proptest::prelude::*;

use tailcast::egp::{
    egp_cdf, egp_pdf, egp_pdf_second_derivative, egp_quantile, select_threshold, EgpParams,
    ThresholdedMarginal,
};
use tailcast::metrics::{mae_ase, rmse_sse};
use tailcast::transforms::{
    angular_decompose, angular_invert, expo_transform, pareto_transform,
};

fn params_strategy() -> impl Strategy<Value = EgpParams> {
    (0.02f64..3.0, -0.45f64..0.9, 0.2f64..40.0)
        .prop_map(|(sigma, xi, kappa)| EgpParams { sigma, xi, kappa })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quantile_cdf_round_trip(p in params_strategy(), u in 1e-6f64..=0.999999) {
        let z = egp_quantile(&p, u).unwrap();
        let back = egp_cdf(&p, z).unwrap();
        prop_assert!((back - u).abs() < 1e-10, "u={u} back={back}");
    }

    #[test]
    fn cdf_derivative_matches_pdf(p in params_strategy(), u in 0.05f64..0.95) {
        // interior grid point chosen through the quantile map
        let z = egp_quantile(&p, u).unwrap();
        let h = 1e-6 * (1.0 + z);
        let hi = (z + h).min(p.support_upper() * (1.0 - 1e-12));
        let lo = (z - h).max(0.0);
        let num = (egp_cdf(&p, hi).unwrap() - egp_cdf(&p, lo).unwrap()) / (hi - lo);
        let pdf = egp_pdf(&p, z).unwrap();
        prop_assert!((num - pdf).abs() <= 1e-6 * pdf.max(1e-12) + 1e-9,
            "z={z} num={num} pdf={pdf}");
    }

    #[test]
    fn threshold_is_the_convexity_changepoint(p in params_strategy()) {
        // κ near 1 puts the changepoint at 0 where the below-side probe
        // leaves the support; require a clear interior root
        prop_assume!(p.kappa > 1.05);
        let t = select_threshold(&p).unwrap();
        prop_assume!(t > 1e-8);
        let d2_at = egp_pdf_second_derivative(&p, t).unwrap();
        // the analytic factored form vanishes at t
        prop_assert!(d2_at.abs() < 1e-8, "d2(t)={d2_at}");
        // numeric second differences change sign across t
        let below = egp_pdf_second_derivative(&p, t * (1.0 - 1e-3)).unwrap();
        let above_z = (t * (1.0 + 1e-3)).min(0.5 * (t + p.support_upper()));
        let above = egp_pdf_second_derivative(&p, above_z).unwrap();
        prop_assert!(below <= 1e-8, "below={below}");
        prop_assert!(above >= -1e-8, "above={above}");
    }

    #[test]
    fn transforms_are_strictly_increasing(p in params_strategy()) {
        // small κ with negative ξ can lack a convexity changepoint, which
        // from_params reports as an error by contract
        let Ok(m) = ThresholdedMarginal::from_params(p) else {
            return Ok(());
        };
        let grid: Vec<f64> = (1..40)
            .map(|i| egp_quantile(&p, i as f64 / 40.0).unwrap())
            .collect();
        for w in grid.windows(2) {
            prop_assert!(pareto_transform(&m, w[0]).unwrap() < pareto_transform(&m, w[1]).unwrap());
            prop_assert!(expo_transform(&m, w[0]).unwrap() < expo_transform(&m, w[1]).unwrap());
        }
    }

    #[test]
    fn angular_round_trip(px in prop::collection::vec(1.0f64..50.0, 1..5), py in 1.0f64..50.0) {
        let s = angular_decompose(&px, py);
        let norm: f64 = s.theta_x.iter().map(|v| v * v).sum::<f64>();
        prop_assert!((norm.sqrt() - 1.0).abs() < 1e-12);
        prop_assert!(s.theta_y >= 0.0 && s.theta_y < 1.0);
        let back = angular_invert(s.theta_y, s.radius);
        prop_assert!((back - py).abs() < 1e-9 * py, "py={py} back={back}");
    }

    #[test]
    fn rmse_dominates_mae(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..200)
    ) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let yhat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (rmse, _) = rmse_sse(&y, &yhat).unwrap();
        let (mae, _) = mae_ase(&y, &yhat).unwrap();
        prop_assert!(rmse >= mae - 1e-12);
        prop_assert!(mae >= 0.0);
    }

    #[test]
    fn metrics_invariant_under_common_shift(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..50),
        shift in -100.0f64..100.0
    ) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let yhat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let yhs: Vec<f64> = yhat.iter().map(|v| v + shift).collect();
        let (a, _) = rmse_sse(&y, &yhat).unwrap();
        let (b, _) = rmse_sse(&ys, &yhs).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        let (a, _) = mae_ase(&y, &yhat).unwrap();
        let (b, _) = mae_ase(&ys, &yhs).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn xi_continuity_across_the_switch() {
    // results at ξ = ±1e-7 agree with the ξ = 0 branch within 1e-5 relative
    for &(sigma, kappa) in &[(0.5, 2.0), (1.3, 17.0)] {
        let at = |xi: f64| EgpParams { sigma, xi, kappa };
        for &u in &[0.1, 0.5, 0.9, 0.999] {
            let z0 = egp_quantile(&at(0.0), u).unwrap();
            for &xi in &[1e-7, -1e-7] {
                let z = egp_quantile(&at(xi), u).unwrap();
                assert!((z - z0).abs() < 1e-5 * z0.max(1e-6), "u={u} xi={xi}");
            }
        }
        let t0 = select_threshold(&at(0.0)).unwrap();
        for &xi in &[1e-7, -1e-7] {
            let t = select_threshold(&at(xi)).unwrap();
            assert!((t - t0).abs() < 1e-5 * t0.max(1e-6));
        }
    }
}
