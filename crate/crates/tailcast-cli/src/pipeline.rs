//! Shared preprocessing and marginal-fitting steps used by every command.

use serde::{Deserialize, Serialize};
use tailcast::egp::{fit_egp_with, FitOptions, FittedMarginal, ThresholdedMarginal};
use tailcast::exec::map_indexed;
use tailcast::io::read_station_csv;
use tailcast::numeric::derive_seed;
use tailcast::preprocess::{
    align, median_preselect, origin_shift, split_by_date, ObservationFrame, ShiftScope,
};
use tailcast::transforms::MarginalSet;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug)]
pub struct PipelineData {
    pub train: ObservationFrame,
    pub test: ObservationFrame,
    pub medians: Vec<f64>,
    pub dropped: Vec<(String, usize)>,
    pub n_aligned: usize,
    pub n_preselected: usize,
}

/// Ingest, align, pre-select, shift and split according to the config.
pub fn run_preprocess(config: &RunConfig) -> Result<PipelineData, CliError> {
    let mut series = Vec::new();
    let mut dropped = Vec::new();
    for entry in config.covariate_entries() {
        let read = read_station_csv(&entry.id, &entry.path)
            .map_err(|e| CliError::io(format!("{}: {e}", entry.path.display())))?;
        dropped.push((entry.id.clone(), read.dropped));
        series.push(read.series);
    }
    let target = config.target_entry();
    let read = read_station_csv(&target.id, &target.path)
        .map_err(|e| CliError::io(format!("{}: {e}", target.path.display())))?;
    dropped.push((target.id.clone(), read.dropped));
    series.push(read.series);

    let frame = align(&series, Some(series.len() - 1))?;
    let n_aligned = frame.n_rows();

    let (frame, medians) = if config.preprocess.median_preselect {
        median_preselect(&frame)
    } else {
        (frame, Vec::new())
    };
    let n_preselected = frame.n_rows();

    let (train, test) = match config.preprocess.shift_scope {
        ShiftScope::Pooled => {
            let shifted = origin_shift(&frame)?;
            split_by_date(&shifted, config.split.cut, config.split.train_side, ShiftScope::Pooled)?
        }
        ShiftScope::Train => {
            split_by_date(&frame, config.split.cut, config.split.train_side, ShiftScope::Train)?
        }
    };

    Ok(PipelineData {
        train,
        test,
        medians,
        dropped,
        n_aligned,
        n_preselected,
    })
}

#[derive(Debug)]
pub struct FittedColumns {
    pub set: MarginalSet,
    pub records: Vec<FittedMarginal>,
}

/// Fit one EGP margin per column of the training frame (covariates then
/// target) and select each threshold. Per-station fits run data-parallel.
pub fn fit_margins(train: &ObservationFrame, seed: u64) -> Result<FittedColumns, CliError> {
    let target = train.target.as_ref().ok_or_else(|| {
        CliError::from(tailcast::Error::MissingTarget)
    })?;
    let d = train.n_covariates();
    let columns: Vec<(String, Vec<f64>)> = (0..d)
        .map(|c| (train.station_ids[c].clone(), train.covariate_column(c)))
        .chain(std::iter::once((
            train.station_ids[d].clone(),
            target.clone(),
        )))
        .collect();

    let fits = map_indexed(columns.len(), |i| {
        let (station, values) = &columns[i];
        let opts = FitOptions {
            seed: derive_seed(seed, format!("egp:{station}").as_bytes()),
            ..Default::default()
        };
        fit_egp_with(values, &opts).and_then(|fit| {
            let marginal = ThresholdedMarginal::from_params(fit.params)?;
            Ok(FittedMarginal {
                station: station.clone(),
                sigma: fit.params.sigma,
                xi: fit.params.xi,
                kappa: fit.params.kappa,
                threshold: marginal.threshold,
                loglik: fit.loglik,
                n: fit.n,
            })
        })
    });

    let mut records = Vec::with_capacity(columns.len());
    for fit in fits {
        records.push(fit?);
    }
    let mut margins: Vec<ThresholdedMarginal> = records
        .iter()
        .map(|r| r.to_marginal())
        .collect::<Result<_, _>>()?;
    let target_margin = margins.pop().expect("target margin present");
    Ok(FittedColumns {
        set: MarginalSet {
            covariates: margins,
            target: target_margin,
        },
        records,
    })
}

/// Frame metadata persisted by `train` and reused by `reconstruct`.
#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessMeta {
    pub station_ids: Vec<String>,
    pub shift: Vec<f64>,
    pub medians: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
}
