//! Prediction error and coverage metrics, including the extreme-subset
//! variants and QQ data with bootstrap bands.
//!
//! The SSE and ASE spread measures are implemented exactly as printed in
//! their defining expressions — including the squared-mean inner terms —
//! rather than as textbook standard errors:
//!
//! `SSE = n^(-1/2) ( n^(-1) Σ_i ((Y_i-Ŷ_i)² - (n^(-1) Σ_j (Y_j-Ŷ_j)²)²) )^(1/4)`
//! `ASE = n^(-1/2) ( n^(-1) Σ_i (|Y_i-Ŷ_i| - (n^(-1) Σ_j |Y_j-Ŷ_j|)²) )^(1/2)`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{median, quantile_sorted};

/// Error summary matching the reporting layout: RMSE(SSE), MAE(ASE), the
/// extreme-subset variants, and the interval coverage when available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: f64,
    pub sse: f64,
    pub mae: f64,
    pub ase: f64,
    pub rmse_ext: Option<f64>,
    pub sse_ext: Option<f64>,
    pub mae_ext: Option<f64>,
    pub ase_ext: Option<f64>,
    pub n: usize,
    pub n_ext: usize,
    pub coverage_95: Option<f64>,
}

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    Ok(())
}

/// Root mean squared error and the printed SSE spread.
pub fn rmse_sse(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    check_lengths(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::InsufficientData { got: y.len(), needed: 2 });
    }
    let n = y.len() as f64;
    let sq: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).collect();
    let mse = sq.iter().sum::<f64>() / n;
    let rmse = mse.sqrt();
    let inner = sq.iter().map(|&s| s - mse * mse).sum::<f64>() / n;
    let sse = inner.powf(0.25) / n.sqrt();
    Ok((rmse, sse))
}

/// Mean absolute error and the printed ASE spread.
pub fn mae_ase(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    check_lengths(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::InsufficientData { got: y.len(), needed: 2 });
    }
    let n = y.len() as f64;
    let abs: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).collect();
    let mean_abs = abs.iter().sum::<f64>() / n;
    let mae = mean_abs;
    let inner = abs.iter().map(|&a| a - mean_abs * mean_abs).sum::<f64>() / n;
    let ase = inner.sqrt() / n.sqrt();
    Ok((mae, ase))
}

/// Keep the pairs whose observed value is at or above the median of the
/// observed values (midpoint convention for even lengths).
pub fn extreme_subset(y: &[f64], yhat: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(y, yhat)?;
    if y.is_empty() {
        return Err(Error::InsufficientData { got: 0, needed: 1 });
    }
    let med = median(y);
    let mut ys = Vec::new();
    let mut yh = Vec::new();
    for (&a, &b) in y.iter().zip(yhat) {
        if a >= med {
            ys.push(a);
            yh.push(b);
        }
    }
    Ok((ys, yh))
}

/// Fraction of observations inside their `[lo, hi]` interval (inclusive).
pub fn coverage_95(y: &[f64], intervals: &[(f64, f64)]) -> Result<f64> {
    if y.len() != intervals.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: intervals.len(),
        });
    }
    for (i, &(lo, hi)) in intervals.iter().enumerate() {
        if lo > hi {
            return Err(Error::InvalidInterval { index: i });
        }
    }
    let hits = y
        .iter()
        .zip(intervals)
        .filter(|(&v, &(lo, hi))| lo <= v && v <= hi)
        .count();
    Ok(hits as f64 / y.len().max(1) as f64)
}

/// Assemble the full report: whole-set errors, extreme-subset errors
/// (observed value at or above the observed median), and interval coverage
/// when intervals are supplied.
pub fn error_report(
    y: &[f64],
    yhat: &[f64],
    intervals: Option<&[(f64, f64)]>,
) -> Result<ErrorReport> {
    let (rmse, sse) = rmse_sse(y, yhat)?;
    let (mae, ase) = mae_ase(y, yhat)?;
    let (y_ext, yhat_ext) = extreme_subset(y, yhat)?;
    let (rmse_ext, sse_ext, mae_ext, ase_ext) = if y_ext.len() >= 2 {
        let (r, s) = rmse_sse(&y_ext, &yhat_ext)?;
        let (m, a) = mae_ase(&y_ext, &yhat_ext)?;
        (Some(r), Some(s), Some(m), Some(a))
    } else {
        (None, None, None, None)
    };
    let coverage = match intervals {
        Some(iv) => Some(coverage_95(y, iv)?),
        None => None,
    };
    Ok(ErrorReport {
        rmse,
        sse,
        mae,
        ase,
        rmse_ext,
        sse_ext,
        mae_ext,
        ase_ext,
        n: y.len(),
        n_ext: y_ext.len(),
        coverage_95: coverage,
    })
}

/// QQ data: sorted observed vs sorted predicted, with per-rank bootstrap
/// envelopes of the predicted quantiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QqData {
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
}

pub fn qq_data(y: &[f64], yhat: &[f64], n_boot: usize, seed: u64) -> Result<QqData> {
    check_lengths(y, yhat)?;
    let n = y.len();
    if n < 10 {
        return Err(Error::InsufficientData { got: n, needed: 10 });
    }
    let mut observed = y.to_vec();
    observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut predicted = yhat.to_vec();
    predicted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // pairs bootstrap: resample (y, yhat) pairs, sort the predicted side,
    // envelope each rank at 0.025/0.975
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rank_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_boot); n];
    let mut resample = vec![0.0; n];
    for _ in 0..n_boot {
        for slot in resample.iter_mut() {
            *slot = yhat[rng.gen_range(0..n)];
        }
        resample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (rank, &v) in resample.iter().enumerate() {
            rank_samples[rank].push(v);
        }
    }
    let mut band_lo = Vec::with_capacity(n);
    let mut band_hi = Vec::with_capacity(n);
    for rs in rank_samples.iter_mut() {
        rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        band_lo.push(quantile_sorted(rs, 0.025));
        band_hi.push(quantile_sorted(rs, 0.975));
    }
    Ok(QqData {
        observed,
        predicted,
        band_lo,
        band_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_cases() {
        let y = [1.0, 2.0, 3.0];
        let (rmse, sse) = rmse_sse(&y, &y).unwrap();
        assert_eq!(rmse, 0.0);
        assert_eq!(sse, 0.0);
        let (mae, ase) = mae_ase(&y, &y).unwrap();
        assert_eq!(mae, 0.0);
        assert_eq!(ase, 0.0);
    }

    #[test]
    fn simple_hand_values() {
        let (rmse, _) = rmse_sse(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((rmse - 1.0).abs() < 1e-15);
        let (mae, _) = mae_ase(&[0.0, 0.0], &[1.0, 3.0]).unwrap();
        assert!((mae - 2.0).abs() < 1e-15);
        let (rmse, _) = rmse_sse(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((rmse - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(rmse_sse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn printed_formulas_on_a_three_point_case() {
        // e = (0.1, 0.2, 0.3); hand evaluation of the printed expressions:
        // mse = 14/300, sse = 3^(-1/2)·((0.0098 - 3·mse²)/3)^(1/4)
        let y = [0.0, 0.0, 0.0];
        let yhat = [0.1, 0.2, 0.3];
        let sq = [0.01_f64, 0.04, 0.09];
        let mse: f64 = sq.iter().sum::<f64>() / 3.0;
        let sse_hand =
            (sq.iter().map(|s| s - mse * mse).sum::<f64>() / 3.0).powf(0.25) / 3.0_f64.sqrt();
        let (rmse, sse) = rmse_sse(&y, &yhat).unwrap();
        assert!((rmse - mse.sqrt()).abs() < 1e-15);
        assert!((sse - sse_hand).abs() < 1e-15);

        let abs = [0.1_f64, 0.2, 0.3];
        let mean_abs: f64 = abs.iter().sum::<f64>() / 3.0;
        let ase_hand =
            (abs.iter().map(|a| a - mean_abs * mean_abs).sum::<f64>() / 3.0).sqrt() / 3.0_f64.sqrt();
        let (mae, ase) = mae_ase(&y, &yhat).unwrap();
        assert!((mae - mean_abs).abs() < 1e-15);
        assert!((ase - ase_hand).abs() < 1e-15);
    }

    #[test]
    fn extreme_subset_median_convention() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let yhat = [10.0, 20.0, 30.0, 40.0];
        let (ys, yh) = extreme_subset(&y, &yhat).unwrap();
        assert_eq!(ys, vec![3.0, 4.0]);
        assert_eq!(yh, vec![30.0, 40.0]);
        // ties are kept
        let (ys, _) = extreme_subset(&[2.0, 2.0, 2.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(ys.len(), 3);
        let (ys, _) = extreme_subset(&[5.0], &[1.0]).unwrap();
        assert_eq!(ys.len(), 1);
    }

    #[test]
    fn coverage_bounds_and_errors() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(coverage_95(&y, &[(0.0, 5.0); 3]).unwrap(), 1.0);
        assert_eq!(coverage_95(&y, &[(10.0, 11.0); 3]).unwrap(), 0.0);
        // boundaries are inclusive
        assert_eq!(coverage_95(&[1.0], &[(1.0, 1.0)]).unwrap(), 1.0);
        assert!(matches!(
            coverage_95(&y, &[(2.0, 1.0); 3]),
            Err(Error::InvalidInterval { index: 0 })
        ));
    }

    #[test]
    fn qq_is_sort_invariant_and_diagonal_for_identity() {
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let q = qq_data(&y, &y, 50, 1).unwrap();
        assert_eq!(q.observed, q.predicted);
        let mut permuted = y.clone();
        permuted.reverse();
        let q2 = qq_data(&y, &permuted, 50, 1).unwrap();
        assert_eq!(q2.predicted, q.predicted);
    }

    #[test]
    fn band_width_shrinks_with_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut width_at = |n: usize| {
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let q = qq_data(&y, &y, 200, 9).unwrap();
            let mid = n / 2;
            q.band_hi[mid] - q.band_lo[mid]
        };
        let w_small = width_at(50);
        let w_big = width_at(5000);
        assert!(w_big < w_small, "{w_big} !< {w_small}");
    }
}
