//! Angular regression: train a pluggable regressor on (covariate angle,
//! target angle) pairs from the extreme observations, predict the target
//! angle for new extreme covariates and back-transform through the radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{forest_fit, ForestConfig, ForestRegressor};
use crate::preprocess::ObservationFrame;
use crate::transforms::{
    angular_decompose, angular_invert, pareto_inverse, pareto_transform, MarginalSet, THETA_CLAMP,
};

/// A fitted angle regressor. Inputs live on the nonnegative orthant of the
/// unit sphere; implementations must be usable from multiple threads.
pub trait Regressor: Send + Sync {
    fn predict(&self, input: &[f64]) -> f64;
    fn name(&self) -> &'static str;
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsRegressor {
    /// `[intercept, coef_1, ..., coef_d]`
    pub coefficients: Vec<f64>,
}

impl Regressor for OlsRegressor {
    fn predict(&self, input: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(input)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    fn name(&self) -> &'static str {
        "ols"
    }
}

impl Regressor for ForestRegressor {
    fn predict(&self, input: &[f64]) -> f64 {
        ForestRegressor::predict(self, input)
    }

    fn name(&self) -> &'static str {
        "forest"
    }
}

/// Least-squares fit of `targets` on `rows` with an intercept, through the
/// normal equations. A zero pivot names the collinear design column
/// (0 = intercept, j = covariate j-1).
pub fn ols_fit(rows: &[Vec<f64>], targets: &[f64]) -> Result<OlsRegressor> {
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    let d = rows.first().map_or(0, |r| r.len());
    if rows.len() <= d + 1 {
        return Err(Error::InsufficientData {
            got: rows.len(),
            needed: d + 2,
        });
    }
    let k = d + 1;
    // X'X and X'y with the implicit leading 1-column
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    for (row, &y) in rows.iter().zip(targets) {
        let design = |j: usize| if j == 0 { 1.0 } else { row[j - 1] };
        for i in 0..k {
            xty[i] += design(i) * y;
            for j in 0..k {
                xtx[i * k + j] += design(i) * design(j);
            }
        }
    }
    solve_spd(&mut xtx, &mut xty, k)?;
    Ok(OlsRegressor { coefficients: xty })
}

/// Gaussian elimination with partial pivoting on the (symmetric) normal
/// matrix; `b` is overwritten with the solution.
fn solve_spd(a: &mut [f64], b: &mut [f64], k: usize) -> Result<()> {
    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let mut perm: Vec<usize> = (0..k).collect();
    for col in 0..k {
        let (pivot_row, pivot) = (col..k)
            .map(|r| (r, a[r * k + col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pivot < 1e-12 * scale {
            return Err(Error::RankDeficient { column: perm[col] });
        }
        if pivot_row != col {
            for j in 0..k {
                a.swap(col * k + j, pivot_row * k + j);
            }
            b.swap(col, pivot_row);
            perm.swap(col, pivot_row);
        }
        for r in col + 1..k {
            let factor = a[r * k + col] / a[col * k + col];
            for j in col..k {
                a[r * k + j] -= factor * a[col * k + j];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..k).rev() {
        let mut v = b[col];
        for j in col + 1..k {
            v -= a[col * k + j] * b[j];
        }
        b[col] = v / a[col * k + col];
    }
    Ok(())
}

/// Choice of angle regressor; the built-ins are OLS and the random forest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegressorSpec {
    Ols,
    Forest(ForestConfig),
}

impl RegressorSpec {
    pub fn fit(&self, rows: &[Vec<f64>], targets: &[f64]) -> Result<FittedRegressor> {
        match self {
            RegressorSpec::Ols => Ok(FittedRegressor::Ols(ols_fit(rows, targets)?)),
            RegressorSpec::Forest(cfg) => Ok(FittedRegressor::Forest(forest_fit(rows, targets, cfg)?)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedRegressor {
    Ols(OlsRegressor),
    Forest(ForestRegressor),
}

impl Regressor for FittedRegressor {
    fn predict(&self, input: &[f64]) -> f64 {
        match self {
            FittedRegressor::Ols(r) => r.predict(input),
            FittedRegressor::Forest(r) => Regressor::predict(r, input),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            FittedRegressor::Ols(r) => r.name(),
            FittedRegressor::Forest(r) => Regressor::name(r),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoxaneModel {
    pub format_version: u32,
    pub station_ids: Vec<String>,
    pub marginals: MarginalSet,
    pub regressor: FittedRegressor,
    pub theta_clamp: f64,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Train on an extreme frame (output of `extract_extremes`, target present,
/// ≥ 20 rows): Pareto-transform each row, decompose into angles and fit the
/// regressor on `(Θ_X, Θ_Y)` pairs.
pub fn roxane_train(
    frame_ext: &ObservationFrame,
    ms: &MarginalSet,
    spec: &RegressorSpec,
) -> Result<RoxaneModel> {
    let targets = frame_ext.target.as_ref().ok_or(Error::MissingTarget)?;
    if frame_ext.n_rows() < 20 {
        return Err(Error::InsufficientData {
            got: frame_ext.n_rows(),
            needed: 20,
        });
    }
    if frame_ext.n_covariates() != ms.dim() {
        return Err(Error::ModelMismatch(format!(
            "frame has {} covariates, marginal set has {}",
            frame_ext.n_covariates(),
            ms.dim()
        )));
    }
    let mut inputs = Vec::with_capacity(frame_ext.n_rows());
    let mut outputs = Vec::with_capacity(frame_ext.n_rows());
    for r in 0..frame_ext.n_rows() {
        let px: Vec<f64> = frame_ext
            .covariate_row(r)
            .iter()
            .zip(&ms.covariates)
            .map(|(&z, m)| pareto_transform(m, z))
            .collect::<Result<_>>()?;
        let py = pareto_transform(&ms.target, targets[r])?;
        let ang = angular_decompose(&px, py);
        inputs.push(ang.theta_x);
        outputs.push(ang.theta_y);
    }
    let regressor = spec.fit(&inputs, &outputs)?;
    Ok(RoxaneModel {
        format_version: MODEL_FORMAT_VERSION,
        station_ids: frame_ext.station_ids.clone(),
        marginals: ms.clone(),
        regressor,
        theta_clamp: THETA_CLAMP,
    })
}

/// Predict the target (on the shifted scale) for an extreme covariate
/// vector; errors with [`Error::NotExtreme`] when no coordinate exceeds its
/// threshold.
pub fn roxane_predict(model: &RoxaneModel, x: &[f64]) -> Result<f64> {
    let ms = &model.marginals;
    if x.len() != ms.dim() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: ms.dim(),
        });
    }
    if !x.iter().zip(&ms.covariates).any(|(&v, m)| v > m.threshold) {
        return Err(Error::NotExtreme);
    }
    let px: Vec<f64> = x
        .iter()
        .zip(&ms.covariates)
        .map(|(&z, m)| pareto_transform(m, z))
        .collect::<Result<_>>()?;
    let radius = px.iter().map(|v| v * v).sum::<f64>().sqrt();
    let theta_x: Vec<f64> = px.iter().map(|v| v / radius).collect();
    let theta_hat = model.regressor.predict(&theta_x).clamp(0.0, model.theta_clamp);
    let pareto_y = angular_invert(theta_hat, radius);
    // angles small enough to land below the Pareto floor map to the
    // support's lower end
    pareto_inverse(&ms.target, pareto_y.max(1.0))
}

impl RoxaneModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RoxaneModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelMismatch(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}
