//! Marginal standardization to Pareto and exponential scales, angular
//! decomposition, and extraction of the extreme subset `{X ≰ t_X}`.

use serde::{Deserialize, Serialize};

use crate::egp::{egp_quantile, egp_quantile_from_survival, egp_survival, ThresholdedMarginal};
use crate::error::{Error, Result};
use crate::preprocess::ObservationFrame;

/// Predicted angles are clamped to `[0, 1 - 1e-6]` before inversion; the
/// back-transform is singular at 1.
pub const THETA_CLAMP: f64 = 1.0 - 1e-6;

/// One fitted margin per coordinate: covariates in column order, then the
/// target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalSet {
    pub covariates: Vec<ThresholdedMarginal>,
    pub target: ThresholdedMarginal,
}

impl MarginalSet {
    pub fn dim(&self) -> usize {
        self.covariates.len()
    }

    pub fn covariate_thresholds(&self) -> Vec<f64> {
        self.covariates.iter().map(|m| m.threshold).collect()
    }
}

/// Angular training row on the Pareto scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularSample {
    /// Unit-norm covariate angle (nonnegative entries).
    pub theta_x: Vec<f64>,
    /// Target angle in [0, 1).
    pub theta_y: f64,
    /// ‖p(X)‖₂, covariates only.
    pub radius: f64,
}

/// `p(z) = 1 / (1 - F(z)) ∈ [1, ∞)`.
pub fn pareto_transform(m: &ThresholdedMarginal, z: f64) -> Result<f64> {
    let s = egp_survival(&m.params, z)?;
    if s <= 0.0 {
        return Err(Error::UpperEndpoint(z));
    }
    Ok(1.0 / s)
}

/// Inverse of [`pareto_transform`]: `p⁻¹(v) = Q(1 - 1/v)` for `v ≥ 1`,
/// evaluated through the survival probability `1/v` so values deep in the
/// tail do not collapse onto the quantile's domain boundary.
pub fn pareto_inverse(m: &ThresholdedMarginal, v: f64) -> Result<f64> {
    if !(v >= 1.0) {
        return Err(Error::Domain(format!("pareto value {v} below 1")));
    }
    egp_quantile_from_survival(&m.params, 1.0 / v)
}

/// `e(z) = -log(1 - F(z)) = log p(z) ∈ [0, ∞)`.
pub fn expo_transform(m: &ThresholdedMarginal, z: f64) -> Result<f64> {
    let s = egp_survival(&m.params, z)?;
    if s <= 0.0 {
        return Err(Error::UpperEndpoint(z));
    }
    Ok(-s.ln())
}

/// Inverse of [`expo_transform`]: `e⁻¹(w) = Q(1 - exp(-w))` for `w ≥ 0`,
/// evaluated through the survival probability `exp(-w)`.
pub fn expo_inverse(m: &ThresholdedMarginal, w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::Domain(format!("exponential value {w} below 0")));
    }
    egp_quantile_from_survival(&m.params, (-w).exp())
}

/// Rows where at least one covariate strictly exceeds its threshold; the
/// target column is untouched.
pub fn extract_extremes(frame: &ObservationFrame, ms: &MarginalSet) -> ObservationFrame {
    let thresholds = ms.covariate_thresholds();
    let rows: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| {
            frame
                .covariate_row(r)
                .iter()
                .zip(&thresholds)
                .any(|(v, t)| v > t)
        })
        .collect();
    frame.select_rows(&rows)
}

/// Complement of [`extract_extremes`]; the two partition the frame.
pub fn extract_body(frame: &ObservationFrame, ms: &MarginalSet) -> ObservationFrame {
    let thresholds = ms.covariate_thresholds();
    let rows: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| {
            frame
                .covariate_row(r)
                .iter()
                .zip(&thresholds)
                .all(|(v, t)| v <= t)
        })
        .collect();
    frame.select_rows(&rows)
}

/// Split a Pareto-scale row into covariate angle, target angle and radius:
/// `Θ_X = p(X)/‖p(X)‖`, `Θ_Y = p(Y)/‖(p(X), p(Y))‖`, radius `‖p(X)‖`.
pub fn angular_decompose(pareto_x: &[f64], pareto_y: f64) -> AngularSample {
    let radius = pareto_x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let theta_x = pareto_x.iter().map(|v| v / radius).collect();
    let full_norm = (radius * radius + pareto_y * pareto_y).sqrt();
    AngularSample {
        theta_x,
        theta_y: pareto_y / full_norm,
        radius,
    }
}

/// Recover `p(Y) = Θ_Y ‖p(X)‖ / √(1 - Θ_Y²)`; the angle is clamped to
/// `[0, THETA_CLAMP]` first.
pub fn angular_invert(theta_y: f64, radius: f64) -> f64 {
    let th = theta_y.clamp(0.0, THETA_CLAMP);
    th * radius / (1.0 - th * th).sqrt()
}
