//! Simulation-based checks of the EGP and GP fitters.

use tailcast::egp::{
    egp_pdf, egp_survival, fit_egp, fit_gp_above, gp_pdf, select_threshold, simulate_egp,
    EgpParams,
};

#[test]
fn egp_fit_recovers_a_published_triple() {
    let truth = EgpParams {
        sigma: 0.13,
        xi: -0.092,
        kappa: 15.12,
    };
    let sample = simulate_egp(&truth, 50_000, 21);
    let fit = fit_egp(&sample).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    assert!(rel(fit.params.sigma, truth.sigma) < 0.10, "{:?}", fit.params);
    assert!(
        (fit.params.xi - truth.xi).abs() < 0.10 * truth.xi.abs().max(0.1),
        "{:?}",
        fit.params
    );
    assert!(rel(fit.params.kappa, truth.kappa) < 0.10, "{:?}", fit.params);
}

#[test]
fn gp_fit_above_threshold_tracks_the_renormalized_egp_tail() {
    // EGP sample thresholded at its own convexity threshold: the fitted GP
    // density stays within 10% sup-distance of the renormalized EGP density
    let truth = EgpParams {
        sigma: 0.10,
        xi: 0.004,
        kappa: 13.05,
    };
    let t = select_threshold(&truth).unwrap();
    let sample = simulate_egp(&truth, 200_000, 5);
    let gp = fit_gp_above(&sample, t).unwrap();

    let tail_mass = egp_survival(&truth, t).unwrap();
    let q_hi = tailcast::egp::egp_quantile(&truth, 1.0 - 1e-3 * tail_mass).unwrap();
    let mut sup = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..400 {
        let z = t + (q_hi - t) * (i as f64 + 0.5) / 400.0;
        let egp_renorm = egp_pdf(&truth, z).unwrap() / tail_mass;
        let gp_dens = gp_pdf(&gp.params, z - t);
        sup = sup.max((egp_renorm - gp_dens).abs());
        scale = scale.max(egp_renorm);
    }
    assert!(sup / scale < 0.10, "sup-distance ratio {}", sup / scale);
}
