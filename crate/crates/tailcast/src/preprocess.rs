//! Ingestion and alignment of per-station series into multivariate frames,
//! median pre-selection, origin shifting and date-based train/test splits.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::median;

/// Raw per-station time series of (tide timestamp, value in meters).
#[derive(Debug, Clone)]
pub struct StationSeries {
    pub station_id: String,
    pub records: Vec<(DateTime<Utc>, f64)>,
}

/// Aligned multivariate records. Coordinate order is fixed: covariate
/// columns in their original order, then the target when present; `shift`
/// follows the same order, so an original value is `value + shift[col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationFrame {
    pub timestamps: Vec<DateTime<Utc>>,
    /// Row-major `n_rows × n_covariates`.
    covariates: Vec<f64>,
    n_covariates: usize,
    pub target: Option<Vec<f64>>,
    pub shift: Vec<f64>,
    pub station_ids: Vec<String>,
}

impl ObservationFrame {
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        covariates: Vec<f64>,
        n_covariates: usize,
        target: Option<Vec<f64>>,
        station_ids: Vec<String>,
    ) -> Self {
        debug_assert_eq!(covariates.len(), timestamps.len() * n_covariates);
        if let Some(t) = &target {
            debug_assert_eq!(t.len(), timestamps.len());
        }
        let shift = vec![0.0; n_covariates + usize::from(target.is_some())];
        Self {
            timestamps,
            covariates,
            n_covariates,
            target,
            shift,
            station_ids,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn covariate_row(&self, row: usize) -> &[f64] {
        &self.covariates[row * self.n_covariates..(row + 1) * self.n_covariates]
    }

    pub fn covariate_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows())
            .map(|r| self.covariates[r * self.n_covariates + col])
            .collect()
    }

    /// Keep the rows at the given indices (ascending), preserving metadata.
    pub fn select_rows(&self, rows: &[usize]) -> ObservationFrame {
        let timestamps = rows.iter().map(|&r| self.timestamps[r]).collect();
        let mut covariates = Vec::with_capacity(rows.len() * self.n_covariates);
        for &r in rows {
            covariates.extend_from_slice(self.covariate_row(r));
        }
        let target = self
            .target
            .as_ref()
            .map(|t| rows.iter().map(|&r| t[r]).collect());
        ObservationFrame {
            timestamps,
            covariates,
            n_covariates: self.n_covariates,
            target,
            shift: self.shift.clone(),
            station_ids: self.station_ids.clone(),
        }
    }

    fn apply_shift(&mut self, offsets: &[f64]) {
        for r in 0..self.n_rows() {
            for c in 0..self.n_covariates {
                self.covariates[r * self.n_covariates + c] -= offsets[c];
            }
        }
        if let Some(t) = self.target.as_mut() {
            let off = offsets[self.n_covariates];
            for v in t.iter_mut() {
                *v -= off;
            }
        }
        for (s, o) in self.shift.iter_mut().zip(offsets) {
            *s += o;
        }
    }
}

/// Intersect the series on exact tide timestamps and stack them into a
/// frame, chronologically ordered. `target_index` flags one series as the
/// target column.
pub fn align(series: &[StationSeries], target_index: Option<usize>) -> Result<ObservationFrame> {
    if series.len() < 2 {
        return Err(Error::InsufficientData {
            got: series.len(),
            needed: 2,
        });
    }
    if let Some(t) = target_index {
        if t >= series.len() {
            return Err(Error::Domain(format!("target index {t} out of range")));
        }
    }

    // per-series timestamp -> value maps; duplicates are rejected here
    let mut maps: Vec<BTreeMap<DateTime<Utc>, f64>> = Vec::with_capacity(series.len());
    for s in series {
        let mut m = BTreeMap::new();
        for &(ts, v) in &s.records {
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite value at {ts} in series {}",
                    s.station_id
                )));
            }
            if m.insert(ts, v).is_some() {
                return Err(Error::DuplicateTimestamp {
                    station: s.station_id.clone(),
                    timestamp: ts,
                });
            }
        }
        maps.push(m);
    }

    let (smallest, _) = maps
        .iter()
        .enumerate()
        .min_by_key(|(_, m)| m.len())
        .unwrap();
    let common: Vec<DateTime<Utc>> = maps[smallest]
        .keys()
        .cloned()
        .filter(|ts| maps.iter().all(|m| m.contains_key(ts)))
        .collect();
    if common.is_empty() {
        return Err(Error::NoCommonRecords);
    }

    let covariate_order: Vec<usize> = (0..series.len())
        .filter(|&i| Some(i) != target_index)
        .collect();
    let n_cov = covariate_order.len();
    let mut covariates = Vec::with_capacity(common.len() * n_cov);
    for ts in &common {
        for &i in &covariate_order {
            covariates.push(maps[i][ts]);
        }
    }
    let target = target_index.map(|i| common.iter().map(|ts| maps[i][ts]).collect());
    let mut station_ids: Vec<String> = covariate_order
        .iter()
        .map(|&i| series[i].station_id.clone())
        .collect();
    if let Some(i) = target_index {
        station_ids.push(series[i].station_id.clone());
    }
    Ok(ObservationFrame::new(
        common, covariates, n_cov, target, station_ids,
    ))
}

/// Retain rows where at least one covariate is ≥ its own empirical median
/// (computed over this frame; ties kept). Returns the kept frame and the
/// medians for the run report.
pub fn median_preselect(frame: &ObservationFrame) -> (ObservationFrame, Vec<f64>) {
    let medians: Vec<f64> = (0..frame.n_covariates())
        .map(|c| median(&frame.covariate_column(c)))
        .collect();
    let rows: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| {
            frame
                .covariate_row(r)
                .iter()
                .zip(&medians)
                .any(|(v, m)| v >= m)
        })
        .collect();
    (frame.select_rows(&rows), medians)
}

/// Subtract the componentwise minimum from every column (covariates and
/// target), recording the offsets in `shift`; afterwards every column has
/// minimum exactly 0.
pub fn origin_shift(frame: &ObservationFrame) -> Result<ObservationFrame> {
    if frame.n_rows() == 0 {
        return Err(Error::InsufficientData { got: 0, needed: 1 });
    }
    let mut out = frame.clone();
    let offsets = column_minima(frame);
    out.apply_shift(&offsets);
    Ok(out)
}

fn column_minima(frame: &ObservationFrame) -> Vec<f64> {
    let mut offsets: Vec<f64> = (0..frame.n_covariates())
        .map(|c| {
            frame
                .covariate_column(c)
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    if let Some(t) = &frame.target {
        offsets.push(t.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    offsets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainSide {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftScope {
    /// The input frame was origin-shifted as a whole before splitting; the
    /// split only partitions rows.
    Pooled,
    /// Offsets are estimated on the training rows only and applied to both
    /// halves, avoiding leakage from the test period.
    Train,
}

/// Partition rows at `cut` (rows ≤ cut on the `Before` side, rows > cut on
/// the `After` side); `train_side` selects which half trains. Returns
/// `(train, test)`.
pub fn split_by_date(
    frame: &ObservationFrame,
    cut: DateTime<Utc>,
    train_side: TrainSide,
    shift_scope: ShiftScope,
) -> Result<(ObservationFrame, ObservationFrame)> {
    let before: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| frame.timestamps[r] <= cut)
        .collect();
    let after: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| frame.timestamps[r] > cut)
        .collect();
    let (train_rows, test_rows) = match train_side {
        TrainSide::Before => (before, after),
        TrainSide::After => (after, before),
    };
    if train_rows.is_empty() {
        return Err(Error::DegenerateSplit);
    }
    let mut train = frame.select_rows(&train_rows);
    let mut test = frame.select_rows(&test_rows);
    if shift_scope == ShiftScope::Train {
        let offsets = column_minima(&train);
        train.apply_shift(&offsets);
        test.apply_shift(&offsets);
    }
    Ok((train, test))
}
