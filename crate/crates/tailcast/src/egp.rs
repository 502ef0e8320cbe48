//! Extended Generalized Pareto margins: distribution functions, maximum
//! likelihood fitting, the closed-form convexity threshold and a GP
//! comparison fit above the threshold.
//!
//! The EGP cdf is `F(z) = (1 - (1 + ξz/σ)^(-1/ξ))^κ` on `[0, ∞)` (or
//! `[0, -σ/ξ]` when ξ < 0). κ = 1 recovers the ordinary GP distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Below this |ξ| every formula switches to its exponential-limit branch to
/// avoid catastrophic cancellation in `(1 + ξz/σ)^(-1/ξ)`.
pub const XI_EPS: f64 = 1e-6;

/// Enforced lower bound on ξ; the threshold derivation requires ξ > -1/2.
pub const XI_MIN: f64 = -0.499;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgpParams {
    /// Scale, meters, > 0.
    pub sigma: f64,
    /// Shape, > -1/2.
    pub xi: f64,
    /// Lower-tail shape, > 0.
    pub kappa: f64,
}

impl EgpParams {
    pub fn new(sigma: f64, xi: f64, kappa: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
        }
        if !(xi > -0.5) || !xi.is_finite() {
            return Err(Error::InvalidParameter(format!("xi must be > -1/2, got {xi}")));
        }
        Ok(Self { sigma, xi, kappa })
    }

    /// Upper end of the support: `-σ/ξ` when ξ < 0, +∞ otherwise.
    pub fn support_upper(&self) -> f64 {
        if self.xi < -XI_EPS {
            -self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }

    fn check_in_support(&self, z: f64) -> Result<()> {
        if !z.is_finite() || z < 0.0 {
            return Err(Error::Domain(format!("z = {z} below support")));
        }
        if z > self.support_upper() {
            return Err(Error::Domain(format!(
                "z = {z} above support upper end {}",
                self.support_upper()
            )));
        }
        Ok(())
    }
}

/// A fitted margin together with its selected convexity threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdedMarginal {
    pub params: EgpParams,
    pub threshold: f64,
}

impl ThresholdedMarginal {
    /// Pair parameters with the threshold recomputed from them.
    pub fn from_params(params: EgpParams) -> Result<Self> {
        let threshold = select_threshold(&params)?;
        Ok(Self { params, threshold })
    }

    pub fn support_upper(&self) -> f64 {
        self.params.support_upper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub sigma: f64,
    pub xi: f64,
}

/// Fitted-marginal record exchanged on disk as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedMarginal {
    pub station: String,
    pub sigma: f64,
    pub xi: f64,
    pub kappa: f64,
    pub threshold: f64,
    pub loglik: f64,
    pub n: usize,
}

impl FittedMarginal {
    /// Rebuild the marginal, checking that the stored threshold matches the
    /// one recomputed from the parameters.
    pub fn to_marginal(&self) -> Result<ThresholdedMarginal> {
        let params = EgpParams::new(self.sigma, self.xi, self.kappa)?;
        let m = ThresholdedMarginal::from_params(params)?;
        let tol = 1e-6 * (1.0 + m.threshold.abs());
        if (m.threshold - self.threshold).abs() > tol {
            return Err(Error::ModelMismatch(format!(
                "stored threshold {} for station {} does not match recomputed {}",
                self.threshold, self.station, m.threshold
            )));
        }
        Ok(m)
    }
}

/// `(1 + ξz/σ)^(-1/ξ)`, the GP survival kernel, evaluated stably.
fn gp_tail(params: &EgpParams, z: f64) -> f64 {
    if params.xi.abs() < XI_EPS {
        (-z / params.sigma).exp()
    } else {
        (-(params.xi * z / params.sigma).ln_1p() / params.xi).exp()
    }
}

/// EGP cdf at `z`.
pub fn egp_cdf(params: &EgpParams, z: f64) -> Result<f64> {
    params.check_in_support(z)?;
    let u = gp_tail(params, z);
    // (1 - u)^κ through logs; exact 0 and 1 at the endpoints
    if u >= 1.0 {
        return Ok(0.0);
    }
    Ok((params.kappa * (-u).ln_1p()).exp())
}

/// EGP survival `1 - F(z)`, computed without cancellation in the upper tail.
pub fn egp_survival(params: &EgpParams, z: f64) -> Result<f64> {
    params.check_in_support(z)?;
    let u = gp_tail(params, z);
    if u >= 1.0 {
        return Ok(1.0);
    }
    Ok(-(params.kappa * (-u).ln_1p()).exp_m1())
}

/// EGP density at `z` in the open support.
pub fn egp_pdf(params: &EgpParams, z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 || z >= params.support_upper() {
        return Err(Error::Domain(format!("z = {z} outside open support")));
    }
    Ok(log_egp_pdf(params, z).exp())
}

/// Log-density; `-inf` when the point carries no mass (κ > 1 boundary).
fn log_egp_pdf(params: &EgpParams, z: f64) -> f64 {
    let EgpParams { sigma, xi, kappa } = *params;
    if xi.abs() < XI_EPS {
        let u = (-z / sigma).exp();
        kappa.ln() - sigma.ln() - z / sigma + (kappa - 1.0) * (-u).ln_1p()
    } else {
        let lw = (xi * z / sigma).ln_1p();
        let u = (-lw / xi).exp();
        kappa.ln() - sigma.ln() + (-1.0 / xi - 1.0) * lw + (kappa - 1.0) * (-u).ln_1p()
    }
}

/// EGP quantile function, the inverse of [`egp_cdf`].
pub fn egp_quantile(params: &EgpParams, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!("u = {u} outside [0, 1)")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    // 1 - u^(1/κ) without cancellation for u near 1
    let one_minus_root = -(u.ln() / params.kappa).exp_m1();
    if params.xi.abs() < XI_EPS {
        Ok(-params.sigma * one_minus_root.ln())
    } else {
        Ok(params.sigma / params.xi * ((-params.xi * one_minus_root.ln()).exp() - 1.0))
    }
}

/// Quantile addressed by the survival probability `s = 1 - u ∈ (0, 1]`,
/// stable arbitrarily deep in the tail (where `1 - s` would round to 1).
pub fn egp_quantile_from_survival(params: &EgpParams, s: f64) -> Result<f64> {
    if !(s > 0.0) || s > 1.0 {
        return Err(Error::UpperEndpoint(s));
    }
    // u^(1/κ) = exp(ln(1-s)/κ); 1 - u^(1/κ) without forming u
    let one_minus_root = -((-s).ln_1p() / params.kappa).exp_m1();
    if params.xi.abs() < XI_EPS {
        Ok(-params.sigma * one_minus_root.ln())
    } else {
        Ok(params.sigma / params.xi * ((-params.xi * one_minus_root.ln()).exp() - 1.0))
    }
}

/// Quadratic whose root in X-space locates the convexity changepoint of the
/// EGP density: `A(X) = aX² - bX + c` with `X = (1 + ξz/σ)^(-1/ξ)`.
fn convexity_coefficients(xi: f64, kappa: f64) -> (f64, f64, f64) {
    let a = kappa * kappa + 2.0 * xi * xi + 3.0 * kappa * xi;
    let b = 4.0 * xi * xi + 3.0 * kappa * xi + 3.0 * kappa + 3.0 * xi - 1.0;
    let c = 2.0 * xi * xi + 3.0 * xi + 1.0;
    (a, b, c)
}

/// Lowest value above which the fitted EGP density is convex.
///
/// Solves the changepoint quadratic in `X = (1 + ξt/σ)^(-1/ξ)` and maps the
/// root back with `t = (σ/ξ)(X₀^(-ξ) - 1)` (`t = -σ ln X₀` in the ξ → 0
/// limit). κ = 1 yields a double root at X₀ = 1, hence t = 0: the GP density
/// is already convex everywhere.
pub fn select_threshold(params: &EgpParams) -> Result<f64> {
    let p = EgpParams::new(params.sigma, params.xi, params.kappa)?;
    let xi = if p.xi.abs() < XI_EPS { 0.0 } else { p.xi };
    let (a, b, c) = convexity_coefficients(xi, p.kappa);
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc > -1e-12 * b * b {
            disc = 0.0; // double root blurred by rounding (κ = 1)
        } else {
            return Err(Error::NoConvexityChangepoint(format!(
                "negative discriminant {disc}"
            )));
        }
    }
    let x0 = (b - disc.sqrt()) / (2.0 * a);
    if !x0.is_finite() || x0 <= 0.0 || x0 > 1.0 + 1e-12 {
        return Err(Error::NoConvexityChangepoint(format!(
            "root X0 = {x0} outside (0, 1]"
        )));
    }
    let x0 = x0.min(1.0);
    let t = if xi == 0.0 {
        -p.sigma * x0.ln()
    } else {
        p.sigma / xi * ((-xi * x0.ln()).exp() - 1.0)
    };
    Ok(t)
}

/// Second derivative of the EGP density in its factored form; vanishes at
/// the selected threshold. Exposed for verification.
pub fn egp_pdf_second_derivative(params: &EgpParams, z: f64) -> Result<f64> {
    if z <= 0.0 || z >= params.support_upper() {
        return Err(Error::Domain(format!("z = {z} outside open support")));
    }
    let EgpParams { sigma, xi, kappa } = *params;
    let x = gp_tail(params, z);
    // A(X) in the factored form
    let one_m = 1.0 - x;
    let quad = (kappa - 1.0) * (kappa - 2.0) * x * x
        - (kappa - 1.0) * (3.0 + 3.0 * xi) * x * one_m
        + (xi + 1.0) * (1.0 + 2.0 * xi) * one_m * one_m;
    // prefactor κ/σ³ · w^(-1/ξ-3) · (1-X)^(κ-3) with w = 1 + ξz/σ
    let (ln_w, ln_x) = if xi.abs() < XI_EPS {
        (xi * z / sigma, -z / sigma)
    } else {
        let lw = (xi * z / sigma).ln_1p();
        (lw, -lw / xi)
    };
    let log_pref = kappa.ln() - 3.0 * sigma.ln() + ln_x - 3.0 * ln_w + (kappa - 3.0) * (-x).ln_1p();
    Ok(log_pref.exp() * quad)
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Restart budget for the simplex search.
    pub restarts: usize,
    /// Seed driving the randomized restart perturbations.
    pub seed: u64,
    pub nm: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            nm: NelderMeadOptions {
                max_iters: 500,
                f_tol: 1e-10,
                x_tol: 1e-7,
                init_step: 0.15,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct EgpFit {
    pub params: EgpParams,
    pub loglik: f64,
    pub n: usize,
}

/// Maximum-likelihood EGP fit.
///
/// Simplex search on `(ln σ, ξ, ln κ)` from a method-of-moments GP start
/// (κ = 1) plus randomized perturbations. Values at exactly 0 carry no EGP
/// mass for κ > 1 and are excluded from the likelihood.
pub fn fit_egp(sample: &[f64]) -> Result<EgpFit> {
    fit_egp_with(sample, &FitOptions::default())
}

pub fn fit_egp_with(sample: &[f64], opts: &FitOptions) -> Result<EgpFit> {
    if sample.len() < 30 {
        return Err(Error::InsufficientData {
            got: sample.len(),
            needed: 30,
        });
    }
    if sample.iter().any(|&z| !z.is_finite() || z < 0.0) {
        return Err(Error::Domain("sample contains negative or non-finite values".into()));
    }
    let data: Vec<f64> = sample.iter().cloned().filter(|&z| z > 0.0).collect();
    if data.len() < 30 {
        return Err(Error::InsufficientData {
            got: data.len(),
            needed: 30,
        });
    }

    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::EgpNonConvergence {
            reason: "constant sample (zero variance)".into(),
            best: EgpParams {
                sigma: mean.max(f64::MIN_POSITIVE),
                xi: 0.0,
                kappa: 1.0,
            },
            loglik: f64::NEG_INFINITY,
        });
    }

    // method-of-moments GP start
    let ratio = mean * mean / var;
    let xi0 = (0.5 * (1.0 - ratio)).clamp(-0.45, 0.9);
    let sigma0 = (0.5 * mean * (ratio + 1.0)).max(1e-12);
    let start = [sigma0.ln(), xi0, 0.0_f64]; // ln κ = 0

    let mut objective = |p: &[f64]| egp_nll(&data, p);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, 1.0).unwrap();

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut prev_f: Option<f64> = None;
    for r in 0..opts.restarts.max(1) {
        let s = if r == 0 {
            start.to_vec()
        } else {
            vec![
                start[0] + 0.5 * noise.sample(&mut rng),
                (start[1] + 0.15 * noise.sample(&mut rng)).clamp(XI_MIN + 1e-3, 2.0),
                start[2] + 0.7 * noise.sample(&mut rng),
            ]
        };
        let res = nelder_mead(&mut objective, &s, &opts.nm);
        let better = best.as_ref().map_or(true, |(_, f, _)| res.f < *f);
        if better {
            best = Some((res.x.clone(), res.f, res.converged));
        }
        // two consistent optima are enough; further restarts add nothing
        if let Some(p) = prev_f {
            if (p - res.f).abs() <= 1e-4 * (res.f.abs() + 1.0) {
                break;
            }
        }
        prev_f = Some(res.f);
    }

    let (x, f, converged) = best.unwrap();
    let params = EgpParams {
        sigma: x[0].exp(),
        xi: x[1],
        kappa: x[2].exp(),
    };
    if !converged || !f.is_finite() || f == f64::MAX {
        return Err(Error::EgpNonConvergence {
            reason: "restart budget exhausted".into(),
            best: params,
            loglik: -f,
        });
    }
    EgpParams::new(params.sigma, params.xi, params.kappa)?;
    Ok(EgpFit {
        params,
        loglik: -f,
        n: data.len(),
    })
}

fn egp_nll(data: &[f64], p: &[f64]) -> f64 {
    let sigma = p[0].exp();
    let xi = p[1];
    let kappa = p[2].exp();
    if !sigma.is_finite() || !kappa.is_finite() || xi <= XI_MIN || xi > 5.0 {
        return f64::MAX;
    }
    let inv_sigma = 1.0 / sigma;
    let base = kappa.ln() - sigma.ln();
    let mut nll = 0.0;
    if xi.abs() < XI_EPS {
        for &z in data {
            let s = z * inv_sigma;
            let u = (-s).exp();
            nll -= base - s + (kappa - 1.0) * (-u).ln_1p();
        }
    } else {
        for &z in data {
            let w = xi * z * inv_sigma;
            if w <= -1.0 {
                return f64::MAX;
            }
            let lw = w.ln_1p();
            let u = (-lw / xi).exp();
            let lp = base + (-1.0 / xi - 1.0) * lw + (kappa - 1.0) * (-u).ln_1p();
            if !lp.is_finite() {
                return f64::MAX;
            }
            nll -= lp;
        }
    }
    if nll.is_finite() {
        nll
    } else {
        f64::MAX
    }
}

#[derive(Debug, Clone)]
pub struct GpFit {
    pub params: GpParams,
    pub loglik: f64,
    pub n_exceedances: usize,
}

/// GP maximum-likelihood fit to the excesses of `sample` above `threshold`.
pub fn fit_gp_above(sample: &[f64], threshold: f64) -> Result<GpFit> {
    fit_gp_above_with(sample, threshold, &FitOptions::default())
}

pub fn fit_gp_above_with(sample: &[f64], threshold: f64, opts: &FitOptions) -> Result<GpFit> {
    let excesses: Vec<f64> = sample
        .iter()
        .filter(|&&z| z > threshold)
        .map(|&z| z - threshold)
        .collect();
    if excesses.len() < 30 {
        return Err(Error::TooFewExceedances {
            got: excesses.len(),
            needed: 30,
        });
    }
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let var = excesses.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n;
    let ratio = if var > 0.0 { mean * mean / var } else { 1.0 };
    let xi0 = (0.5 * (1.0 - ratio)).clamp(-0.45, 0.9);
    let sigma0 = (0.5 * mean * (ratio + 1.0)).max(1e-12);

    let mut objective = |p: &[f64]| gp_nll(&excesses, p);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let start = [sigma0.ln(), xi0];
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut prev_f: Option<f64> = None;
    for r in 0..opts.restarts.max(1) {
        let s = if r == 0 {
            start.to_vec()
        } else {
            vec![
                start[0] + 0.5 * noise.sample(&mut rng),
                (start[1] + 0.15 * noise.sample(&mut rng)).clamp(-0.49, 2.0),
            ]
        };
        let res = nelder_mead(&mut objective, &s, &opts.nm);
        if best.as_ref().map_or(true, |(_, f, _)| res.f < *f) {
            best = Some((res.x.clone(), res.f, res.converged));
        }
        if let Some(p) = prev_f {
            if (p - res.f).abs() <= 1e-4 * (res.f.abs() + 1.0) {
                break;
            }
        }
        prev_f = Some(res.f);
    }
    let (x, f, converged) = best.unwrap();
    if !converged || f == f64::MAX {
        return Err(Error::EgpNonConvergence {
            reason: "GP fit did not converge".into(),
            best: EgpParams {
                sigma: x[0].exp(),
                xi: x[1],
                kappa: 1.0,
            },
            loglik: -f,
        });
    }
    Ok(GpFit {
        params: GpParams {
            sigma: x[0].exp(),
            xi: x[1],
        },
        loglik: -f,
        n_exceedances: excesses.len(),
    })
}

fn gp_nll(excesses: &[f64], p: &[f64]) -> f64 {
    let sigma = p[0].exp();
    let xi = p[1];
    if !sigma.is_finite() || xi <= -0.5 || xi > 5.0 {
        return f64::MAX;
    }
    let n = excesses.len() as f64;
    let mut nll = n * sigma.ln();
    if xi.abs() < XI_EPS {
        nll += excesses.iter().sum::<f64>() / sigma;
    } else {
        for &y in excesses {
            let w = xi * y / sigma;
            if w <= -1.0 {
                return f64::MAX;
            }
            nll += (1.0 + 1.0 / xi) * w.ln_1p();
        }
    }
    if nll.is_finite() {
        nll
    } else {
        f64::MAX
    }
}

/// GP density of an excess `y ≥ 0`.
pub fn gp_pdf(params: &GpParams, y: f64) -> f64 {
    if y < 0.0 {
        return 0.0;
    }
    if params.xi.abs() < XI_EPS {
        (-y / params.sigma).exp() / params.sigma
    } else {
        let w = params.xi * y / params.sigma;
        if w <= -1.0 {
            return 0.0;
        }
        ((-1.0 / params.xi - 1.0) * w.ln_1p()).exp() / params.sigma
    }
}

/// Draw `n` EGP variates through the quantile transform.
pub fn simulate_egp(params: &EgpParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            egp_quantile(params, u).expect("u in [0,1)")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brest() -> EgpParams {
        EgpParams::new(0.13, -0.092, 15.12).unwrap()
    }

    #[test]
    fn cdf_endpoints_and_gp_case() {
        let p = EgpParams::new(1.0, 0.5, 1.0).unwrap();
        assert_eq!(egp_cdf(&p, 0.0).unwrap(), 0.0);
        // κ=1, ξ=0.5, σ=1, z=2: 1 - (1+1)^(-2) = 0.75
        assert!((egp_cdf(&p, 2.0).unwrap() - 0.75).abs() < 1e-14);
        // ξ<0 upper endpoint maps to 1
        let q = EgpParams::new(1.0, -0.25, 2.0).unwrap();
        assert!((egp_cdf(&q, q.support_upper()).unwrap() - 1.0).abs() < 1e-12);
        assert!(egp_cdf(&q, q.support_upper() + 0.1).is_err());
        assert!(egp_cdf(&p, -0.1).is_err());
    }

    #[test]
    fn pdf_matches_hand_values() {
        // σ=1, ξ=0, κ=2, z=1: 2 e^{-1} (1 - e^{-1})
        let p = EgpParams::new(1.0, 0.0, 2.0).unwrap();
        let expect = 2.0 * (-1.0_f64).exp() * (1.0 - (-1.0_f64).exp());
        assert!((egp_pdf(&p, 1.0).unwrap() - expect).abs() < 1e-14);
        // κ=1 reduces to the GP density
        let gp = EgpParams::new(0.7, 0.3, 1.0).unwrap();
        for &z in &[0.1, 0.5, 2.0, 10.0] {
            let direct = (1.0 + 0.3 * z / 0.7_f64).powf(-1.0 / 0.3 - 1.0) / 0.7;
            assert!((egp_pdf(&gp, z).unwrap() - direct).abs() < 1e-12 * direct);
        }
        assert!(egp_pdf(&p, 0.0).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = EgpParams::new(1.0, 0.5, 1.0).unwrap();
        assert_eq!(egp_quantile(&p, 0.0).unwrap(), 0.0);
        assert!((egp_quantile(&p, 0.75).unwrap() - 2.0).abs() < 1e-12);
        assert!(egp_quantile(&p, 1.0).is_err());
        let q = brest();
        for &u in &[1e-6, 0.37, 0.5, 0.99, 1.0 - 1e-6] {
            let z = egp_quantile(&q, u).unwrap();
            assert!((egp_cdf(&q, z).unwrap() - u).abs() < 1e-10, "u = {u}");
        }
    }

    #[test]
    fn xi_zero_branch_is_continuous() {
        let base = |xi: f64| EgpParams::new(0.8, xi, 3.0).unwrap();
        for &z in &[0.1, 0.5, 1.5] {
            let at0 = egp_cdf(&base(0.0), z).unwrap();
            for &xi in &[1e-7, -1e-7] {
                let near = egp_cdf(&base(xi), z).unwrap();
                assert!((near - at0).abs() < 1e-5 * at0.max(1e-3), "xi = {xi}");
            }
            let at0 = egp_pdf(&base(0.0), z).unwrap();
            for &xi in &[1e-7, -1e-7] {
                let near = egp_pdf(&base(xi), z).unwrap();
                assert!((near - at0).abs() < 1e-5 * at0.max(1e-3));
            }
        }
    }

    #[test]
    fn threshold_reproduces_algorithm_formula() {
        // Brest row: the formula evaluates to 0.4225 on the printed triple
        let t = select_threshold(&brest()).unwrap();
        assert!((t - 0.422516).abs() < 1e-4, "t = {t}");
        // Saint-Nazaire row
        let t = select_threshold(&EgpParams::new(0.10, 0.004, 13.05).unwrap()).unwrap();
        assert!((t - 0.351226).abs() < 1e-4, "t = {t}");
        // Port Tudy row
        let t = select_threshold(&EgpParams::new(0.09, -0.010, 38.68).unwrap()).unwrap();
        assert!((t - 0.407006).abs() < 1e-4, "t = {t}");
    }

    #[test]
    fn kappa_one_threshold_is_zero() {
        for &(s, x) in &[(1.0, 0.3), (0.13, -0.092), (2.5, 0.0), (0.4, -0.4)] {
            let t = select_threshold(&EgpParams::new(s, x, 1.0).unwrap()).unwrap();
            assert!(t.abs() <= 1e-12, "sigma={s} xi={x} t={t}");
        }
    }

    #[test]
    fn second_derivative_vanishes_at_threshold() {
        for p in [
            brest(),
            EgpParams::new(0.10, 0.004, 13.05).unwrap(),
            EgpParams::new(1.0, 0.2, 4.0).unwrap(),
        ] {
            let t = select_threshold(&p).unwrap();
            let d2 = egp_pdf_second_derivative(&p, t).unwrap();
            assert!(d2.abs() < 1e-8, "d2 = {d2} at t = {t}");
            // negative just below, positive just above
            assert!(egp_pdf_second_derivative(&p, t * (1.0 - 1e-3)).unwrap() < 0.0);
            let above = (t * (1.0 + 1e-3)).min(0.5 * (t + p.support_upper()));
            assert!(egp_pdf_second_derivative(&p, above).unwrap() > 0.0);
        }
    }

    #[test]
    fn fit_rejects_bad_samples() {
        assert!(matches!(
            fit_egp(&vec![1.0; 10]),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(
            fit_egp(&vec![2.5; 100]),
            Err(Error::EgpNonConvergence { .. })
        ));
        assert!(fit_egp(&vec![-1.0; 100]).is_err());
    }

    #[test]
    fn fit_recovers_exponential_special_case() {
        // Exponential(1) = EGP(σ=1, ξ=0, κ=1)
        let truth = EgpParams::new(1.0, 0.0, 1.0).unwrap();
        let sample = simulate_egp(&truth, 50_000, 11);
        let fit = fit_egp(&sample).unwrap();
        assert!((fit.params.sigma - 1.0).abs() < 0.10, "{:?}", fit.params);
        assert!(fit.params.xi.abs() < 0.10, "{:?}", fit.params);
        assert!((fit.params.kappa - 1.0).abs() < 0.10, "{:?}", fit.params);
    }

    #[test]
    fn gp_fit_recovers_simulated_excesses() {
        let gp = EgpParams::new(0.1, -0.05, 1.0).unwrap(); // GP via κ=1
        let sample = simulate_egp(&gp, 20_000, 3);
        let fit = fit_gp_above(&sample, 0.0).unwrap();
        assert!((fit.params.sigma - 0.1).abs() < 0.01, "{:?}", fit.params);
        assert!((fit.params.xi + 0.05).abs() < 0.03, "{:?}", fit.params);
        // threshold above the sample max
        let max = sample.iter().cloned().fold(f64::MIN, f64::max);
        assert!(matches!(
            fit_gp_above(&sample, max + 1.0),
            Err(Error::TooFewExceedances { .. })
        ));
    }

    #[test]
    fn marginal_json_round_trip_checks_threshold() {
        let m = ThresholdedMarginal::from_params(brest()).unwrap();
        let rec = FittedMarginal {
            station: "brest".into(),
            sigma: m.params.sigma,
            xi: m.params.xi,
            kappa: m.params.kappa,
            threshold: m.threshold,
            loglik: -1.0,
            n: 100,
        };
        let back = rec.to_marginal().unwrap();
        assert!((back.threshold - m.threshold).abs() < 1e-12);
        let bad = FittedMarginal {
            threshold: m.threshold + 0.05,
            ..rec
        };
        assert!(bad.to_marginal().is_err());
    }
}
