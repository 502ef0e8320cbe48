//! The five batch commands: fit-marginals, train, evaluate, reconstruct
//! and synth. Every command is deterministic given (config, seed).

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::Serialize;
use serde_json::json;

use tailcast::egp::{egp_pdf, egp_quantile, egp_survival, fit_gp_above, gp_pdf, FitOptions};
use tailcast::exec::map_indexed;
use tailcast::io::{read_station_csv, write_station_csv};
use tailcast::metrics::{error_report, qq_data, ErrorReport, QqData};
use tailcast::mgpred::{
    fit_censored_with, mgpred_predict, MgpFitOptions, MgpModel, Prediction, PredictionRecord,
};
use tailcast::numeric::derive_seed;
use tailcast::preprocess::{align, ObservationFrame};
use tailcast::roxane::{roxane_predict, roxane_train, RoxaneModel};
use tailcast::synth::{generate, SynthConfig};
use tailcast::transforms::extract_extremes;

use crate::config::{RunConfig, StationEntry, StationRole};
use crate::error::CliError;
use crate::pipeline::{fit_margins, run_preprocess, FittedColumns, PipelineData, PreprocessMeta};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Clamp a covariate vector into the open support of its fitted margins;
/// test values can exceed a negative-shape margin's upper endpoint.
fn clamp_to_support(x: &[f64], model_margins: &tailcast::transforms::MarginalSet) -> Vec<f64> {
    x.iter()
        .zip(&model_margins.covariates)
        .map(|(&v, m)| {
            let hi = m.support_upper();
            if hi.is_finite() {
                v.min(hi * (1.0 - 1e-9))
            } else {
                v
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// fit-marginals
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct FitMarginalsOutcome {
    pub pipeline: PipelineData,
    pub fitted: FittedColumns,
}

pub fn cmd_fit_marginals(config: &RunConfig, seed: u64) -> Result<FitMarginalsOutcome, CliError> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let pipeline = run_preprocess(config)?;
    let fitted = fit_margins(&pipeline.train, seed)?;

    for record in &fitted.records {
        write_json(&out.join(format!("marginal_{}.json", record.station)), record)?;
    }
    write_json(&out.join("marginals_summary.json"), &fitted.records)?;

    // EGP-vs-GP density grids above each threshold
    let mut w = csv::Writer::from_path(out.join("egp_vs_gp.csv"))?;
    w.write_record(["station", "z", "egp_density", "gp_density"])?;
    let margins: Vec<_> = fitted
        .fitted_margins_with_columns(&pipeline.train)
        .collect();
    for (record, marginal, values) in &margins {
        let gp = fit_gp_above_column(values, marginal.threshold, seed, &record.station)?;
        let tail = egp_survival(&marginal.params, marginal.threshold)?;
        let hi = egp_quantile(&marginal.params, 1.0 - 1e-3 * tail)?;
        for i in 0..200 {
            let z = marginal.threshold + (hi - marginal.threshold) * (i as f64 + 0.5) / 200.0;
            let egp = egp_pdf(&marginal.params, z)? / tail;
            let gpd = gp_pdf(&gp, z - marginal.threshold);
            w.write_record([
                record.station.clone(),
                format!("{z}"),
                format!("{egp}"),
                format!("{gpd}"),
            ])?;
        }
    }
    w.flush()?;

    // histogram data with the fitted density overlaid
    let mut w = csv::Writer::from_path(out.join("histograms.csv"))?;
    w.write_record(["station", "bin_lo", "bin_hi", "count", "empirical_density", "egp_density"])?;
    for (record, marginal, values) in &margins {
        let max = values.iter().cloned().fold(0.0f64, f64::max);
        let bins = 60usize;
        let width = max / bins as f64;
        if width <= 0.0 {
            continue;
        }
        let mut counts = vec![0usize; bins];
        for &v in values.iter() {
            let b = ((v / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = values.len() as f64;
        for (b, &c) in counts.iter().enumerate() {
            let lo = b as f64 * width;
            let mid = lo + 0.5 * width;
            let dens = egp_pdf(&marginal.params, mid).unwrap_or(0.0);
            w.write_record([
                record.station.clone(),
                format!("{lo}"),
                format!("{}", lo + width),
                format!("{c}"),
                format!("{}", c as f64 / (n * width)),
                format!("{dens}"),
            ])?;
        }
    }
    w.flush()?;

    write_run_report(config, seed, &pipeline, out)?;
    Ok(FitMarginalsOutcome { pipeline, fitted })
}

impl FittedColumns {
    /// Iterate (record, marginal, column values) over covariates then target.
    fn fitted_margins_with_columns<'a>(
        &'a self,
        frame: &'a ObservationFrame,
    ) -> impl Iterator<Item = (&'a tailcast::egp::FittedMarginal, &'a tailcast::egp::ThresholdedMarginal, Vec<f64>)> + 'a
    {
        let d = frame.n_covariates();
        (0..=d).map(move |i| {
            let marginal = if i < d {
                &self.set.covariates[i]
            } else {
                &self.set.target
            };
            let values = if i < d {
                frame.covariate_column(i)
            } else {
                frame.target.as_ref().expect("target fitted").clone()
            };
            (&self.records[i], marginal, values)
        })
    }
}

fn fit_gp_above_column(
    values: &[f64],
    threshold: f64,
    seed: u64,
    station: &str,
) -> Result<tailcast::egp::GpParams, CliError> {
    let opts = FitOptions {
        seed: derive_seed(seed, format!("gp:{station}").as_bytes()),
        ..Default::default()
    };
    Ok(fit_gp_above(values, threshold)
        .or_else(|_| tailcast::egp::fit_gp_above_with(values, threshold, &opts))?
        .params)
}

fn write_run_report(
    config: &RunConfig,
    seed: u64,
    pipeline: &PipelineData,
    out: &Path,
) -> Result<(), CliError> {
    let dropped: serde_json::Map<String, serde_json::Value> = pipeline
        .dropped
        .iter()
        .map(|(s, n)| (s.clone(), json!(n)))
        .collect();
    write_json(
        &out.join("run_report.json"),
        &json!({
            "seed": seed,
            "stations": config.frame_station_ids(),
            "dropped_rows": dropped,
            "n_aligned": pipeline.n_aligned,
            "n_after_preselect": pipeline.n_preselected,
            "medians": pipeline.medians,
            "shift": pipeline.train.shift,
            "n_train": pipeline.train.n_rows(),
            "n_test": pipeline.test.n_rows(),
        }),
    )
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct TrainOutcome {
    pub roxane: RoxaneModel,
    pub mgp: MgpModel,
    pub n_extreme: usize,
    pub n_uncensored: usize,
}

pub fn cmd_train(config: &RunConfig, seed: u64) -> Result<TrainOutcome, CliError> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let pipeline = run_preprocess(config)?;
    let fitted = fit_margins(&pipeline.train, seed)?;
    for record in &fitted.records {
        write_json(&out.join(format!("marginal_{}.json", record.station)), record)?;
    }

    let extreme = extract_extremes(&pipeline.train, &fitted.set);
    let spec = config.regressor.to_spec(derive_seed(seed, b"forest"));
    let roxane = roxane_train(&extreme, &fitted.set, &spec)?;

    let mgp_opts = MgpFitOptions {
        seed: derive_seed(seed, b"mgp-fit"),
        ..Default::default()
    };
    let censored = fit_censored_with(&extreme, &fitted.set, &config.mgp.families, &mgp_opts)?;

    fs::write(out.join("roxane_model.json"), roxane.to_json()?)?;
    fs::write(out.join("mgp_model.json"), censored.model.to_json()?)?;
    write_json(
        &out.join("preprocess.json"),
        &PreprocessMeta {
            station_ids: pipeline.train.station_ids.clone(),
            shift: pipeline.train.shift.clone(),
            medians: pipeline.medians.clone(),
            n_train: pipeline.train.n_rows(),
            n_test: pipeline.test.n_rows(),
        },
    )?;
    write_json(
        &out.join("training_log.json"),
        &json!({
            "seed": seed,
            "n_train": pipeline.train.n_rows(),
            "n_extreme": extreme.n_rows(),
            "n_uncensored": censored.model.n_uncensored,
            "regressor": regressor_name(&roxane),
            "families": censored.candidates.iter().map(|c| json!({
                "family": c.family.name(),
                "loglik": c.loglik,
                "aic": c.aic,
            })).collect::<Vec<_>>(),
            "skipped_families": censored.skipped.iter().map(|(f, why)| json!({
                "family": f.name(),
                "reason": why,
            })).collect::<Vec<_>>(),
            "selected_family": censored.model.family.name(),
        }),
    )?;
    write_run_report(config, seed, &pipeline, out)?;
    Ok(TrainOutcome {
        roxane,
        n_extreme: extreme.n_rows(),
        n_uncensored: censored.model.n_uncensored,
        mgp: censored.model,
    })
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct EvaluateOutcome {
    pub n_test_extreme: usize,
    pub roxane_report: Option<ErrorReport>,
    pub mgpred_report: Option<ErrorReport>,
}

fn load_models(
    config: &RunConfig,
    models_dir: &Path,
) -> Result<(RoxaneModel, MgpModel), CliError> {
    let rox_path = models_dir.join("roxane_model.json");
    let mgp_path = models_dir.join("mgp_model.json");
    let rox_text = fs::read_to_string(&rox_path)
        .map_err(|e| CliError::io(format!("{}: {e}", rox_path.display())))?;
    let mgp_text = fs::read_to_string(&mgp_path)
        .map_err(|e| CliError::io(format!("{}: {e}", mgp_path.display())))?;
    let roxane = RoxaneModel::from_json(&rox_text)
        .map_err(|e| CliError::config(format!("{}: {e}", rox_path.display())))?;
    let mgp = MgpModel::from_json(&mgp_text)
        .map_err(|e| CliError::config(format!("{}: {e}", mgp_path.display())))?;
    let expected = config.frame_station_ids();
    for (name, ids) in [("roxane", &roxane.station_ids), ("mgp", &mgp.station_ids)] {
        if ids != &expected {
            return Err(CliError::config(format!(
                "{name} model stations {ids:?} do not match config stations {expected:?}"
            )));
        }
    }
    Ok((roxane, mgp))
}

pub fn cmd_evaluate(
    config: &RunConfig,
    seed: u64,
    models_dir: &Path,
) -> Result<EvaluateOutcome, CliError> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let (roxane, mgp) = load_models(config, models_dir)?;
    let pipeline = run_preprocess(config)?;
    let test_extreme = extract_extremes(&pipeline.test, &roxane.marginals);
    let y_true = test_extreme
        .target
        .as_ref()
        .ok_or(CliError::Data("test frame has no target column".into()))?
        .clone();
    let n = test_extreme.n_rows();

    if n < 2 {
        // nothing predictable: emit the null report
        write_json(
            &out.join("evaluation_report.json"),
            &json!({
                "n_test_extreme": n,
                "roxane": null,
                "mgpred": null,
            }),
        )?;
        return Ok(EvaluateOutcome {
            n_test_extreme: n,
            roxane_report: None,
            mgpred_report: None,
        });
    }

    let rows: Vec<(DateTime<Utc>, Vec<f64>)> = (0..n)
        .map(|r| (test_extreme.timestamps[r], test_extreme.covariate_row(r).to_vec()))
        .collect();
    let l = config.mgp.mc_samples;
    let predictions: Vec<Result<(f64, Prediction), CliError>> = map_indexed(n, |r| {
        let (ts, x) = &rows[r];
        let x = clamp_to_support(x, &roxane.marginals);
        let rox = roxane_predict(&roxane, &x)?;
        let row_seed = derive_seed(seed, ts.to_rfc3339().as_bytes());
        let mgp_pred = mgpred_predict(&mgp, &x, l, row_seed)?;
        Ok((rox, mgp_pred))
    });
    let mut rox_points = Vec::with_capacity(n);
    let mut mgp_records: Vec<PredictionRecord> = Vec::with_capacity(n);
    for (r, p) in predictions.into_iter().enumerate() {
        let (rox, mgp_pred) = p?;
        rox_points.push(rox);
        mgp_records.push(PredictionRecord {
            timestamp: rows[r].0,
            point: mgp_pred.point,
            mc_sample: mgp_pred.mc_sample,
            interval_95: mgp_pred.interval_95,
        });
    }

    let mgp_points: Vec<f64> = mgp_records.iter().map(|p| p.point).collect();
    let intervals: Vec<(f64, f64)> = mgp_records.iter().map(|p| p.interval_95).collect();
    let rox_report = error_report(&y_true, &rox_points, None)?;
    let mgp_report = error_report(&y_true, &mgp_points, Some(&intervals))?;

    let mut report = json!({
        "n_test_extreme": n,
        "roxane": rox_report,
        "mgpred": mgp_report,
    });
    if config.output.paper_format {
        report["table2"] = json!([
            table2_row(&format!("rox {}", regressor_name(&roxane)), &rox_report),
            table2_row("mgpred", &mgp_report),
        ]);
    }
    write_json(&out.join("evaluation_report.json"), &report)?;

    // QQ data (Figure-6 analogue) for both methods
    if n >= 10 {
        write_qq_csv(&out.join("qq_roxane.csv"), &qq_data(&y_true, &rox_points, 200, derive_seed(seed, b"qq-rox"))?)?;
        write_qq_csv(&out.join("qq_mgpred.csv"), &qq_data(&y_true, &mgp_points, 200, derive_seed(seed, b"qq-mgp"))?)?;
    }

    // prediction series (Figure-5/7 analogue), original scale restored
    let shift_y = *pipeline.test.shift.last().unwrap_or(&0.0);
    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    w.write_record(["timestamp", "observed", "rox_point", "mgp_point", "mgp_lo95", "mgp_hi95"])?;
    for (i, rec) in mgp_records.iter().enumerate() {
        w.write_record([
            rec.timestamp.to_rfc3339(),
            format!("{}", y_true[i] + shift_y),
            format!("{}", rox_points[i] + shift_y),
            format!("{}", rec.point + shift_y),
            format!("{}", rec.interval_95.0 + shift_y),
            format!("{}", rec.interval_95.1 + shift_y),
        ])?;
    }
    w.flush()?;

    if config.output.dump_mc {
        let mut w = csv::Writer::from_path(out.join("mc_samples.csv"))?;
        w.write_record(["timestamp", "draw", "value"])?;
        for rec in &mgp_records {
            for (k, &v) in rec.mc_sample.iter().enumerate() {
                w.write_record([rec.timestamp.to_rfc3339(), format!("{k}"), format!("{}", v + shift_y)])?;
            }
        }
        w.flush()?;
    }

    Ok(EvaluateOutcome {
        n_test_extreme: n,
        roxane_report: Some(rox_report),
        mgpred_report: Some(mgp_report),
    })
}

/// Table-2 style row: values ×10² with one decimal, spread in parentheses.
fn table2_row(method: &str, report: &ErrorReport) -> serde_json::Value {
    let fmt = |v: f64, s: f64| format!("{:.1}({:.1})", v * 100.0, s * 100.0);
    let opt = |v: Option<f64>, s: Option<f64>| match (v, s) {
        (Some(v), Some(s)) => json!(fmt(v, s)),
        _ => json!(null),
    };
    json!({
        "method": method,
        "rmse": fmt(report.rmse, report.sse),
        "mae": fmt(report.mae, report.ase),
        "rmse_ext": opt(report.rmse_ext, report.sse_ext),
        "mae_ext": opt(report.mae_ext, report.ase_ext),
    })
}

fn write_qq_csv(path: &Path, qq: &QqData) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["observed", "predicted", "band_lo", "band_hi"])?;
    for i in 0..qq.observed.len() {
        w.write_record([
            format!("{}", qq.observed[i]),
            format!("{}", qq.predicted[i]),
            format!("{}", qq.band_lo[i]),
            format!("{}", qq.band_hi[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn regressor_name(model: &RoxaneModel) -> &'static str {
    use tailcast::roxane::Regressor;
    model.regressor.name()
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ReconstructOutcome {
    pub n_input: usize,
    pub n_extreme: usize,
}

pub fn cmd_reconstruct(
    config: &RunConfig,
    seed: u64,
    models_dir: &Path,
) -> Result<ReconstructOutcome, CliError> {
    let out = &config.output.dir;
    fs::create_dir_all(out)?;
    let (roxane, mgp) = load_models(config, models_dir)?;
    let meta_path = models_dir.join("preprocess.json");
    let meta: PreprocessMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path)
            .map_err(|e| CliError::io(format!("{}: {e}", meta_path.display())))?,
    )
    .map_err(|e| CliError::config(format!("{}: {e}", meta_path.display())))?;

    // covariate-only frame over the reconstruction window
    let mut series = Vec::new();
    for entry in config.covariate_entries() {
        let read = read_station_csv(&entry.id, &entry.path)
            .map_err(|e| CliError::io(format!("{}: {e}", entry.path.display())))?;
        series.push(read.series);
    }
    let frame = align(&series, None)?;
    let window: Vec<usize> = (0..frame.n_rows())
        .filter(|&r| {
            let ts = frame.timestamps[r];
            config.reconstruct.from.map_or(true, |lo| ts >= lo)
                && config.reconstruct.to.map_or(true, |hi| ts <= hi)
        })
        .collect();
    let frame = frame.select_rows(&window);
    let n_input = frame.n_rows();

    // shift covariates onto the training scale
    let d = frame.n_covariates();
    if meta.shift.len() != d + 1 {
        return Err(CliError::config(format!(
            "saved shift has {} entries, expected {}",
            meta.shift.len(),
            d + 1
        )));
    }
    let shift_y = meta.shift[d];
    let extreme_rows: Vec<(DateTime<Utc>, Vec<f64>)> = (0..frame.n_rows())
        .filter_map(|r| {
            let shifted: Vec<f64> = frame
                .covariate_row(r)
                .iter()
                .zip(&meta.shift[..d])
                .map(|(&v, &s)| v - s)
                .collect();
            let extreme = shifted
                .iter()
                .zip(&roxane.marginals.covariates)
                .any(|(&v, m)| v > m.threshold);
            extreme.then_some((frame.timestamps[r], shifted))
        })
        .collect();
    let n_extreme = extreme_rows.len();
    if n_extreme == 0 {
        eprintln!("warning: no extreme rows in the reconstruction window; output is empty");
    }

    let l = config.mgp.mc_samples;
    let predicted: Vec<Result<(f64, Prediction), CliError>> = map_indexed(n_extreme, |i| {
        let (ts, x) = &extreme_rows[i];
        let x = clamp_to_support(x, &roxane.marginals);
        let rox = roxane_predict(&roxane, &x)?;
        let row_seed = derive_seed(seed, ts.to_rfc3339().as_bytes());
        let pred = mgpred_predict(&mgp, &x, l, row_seed)?;
        Ok((rox, pred))
    });

    let mut w = csv::Writer::from_path(out.join("reconstruction.csv"))?;
    w.write_record(["timestamp", "method", "point", "lo95", "hi95"])?;
    for (i, p) in predicted.into_iter().enumerate() {
        let (rox, pred) = p?;
        let ts = extreme_rows[i].0.to_rfc3339();
        w.write_record([ts.clone(), "roxane".into(), format!("{}", rox + shift_y), String::new(), String::new()])?;
        w.write_record([
            ts,
            "mgpred".into(),
            format!("{}", pred.point + shift_y),
            format!("{}", pred.interval_95.0 + shift_y),
            format!("{}", pred.interval_95.1 + shift_y),
        ])?;
    }
    w.flush()?;
    write_json(
        &out.join("reconstruction_report.json"),
        &json!({
            "n_input": n_input,
            "n_extreme": n_extreme,
            "n_omitted": n_input - n_extreme,
        }),
    )?;
    Ok(ReconstructOutcome { n_input, n_extreme })
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct SynthOutcome {
    pub config_path: PathBuf,
    pub truth_path: PathBuf,
    pub station_paths: Vec<PathBuf>,
}

/// Generate a synthetic dataset from the published EGP + Gumbel-MGP ground
/// truth, plus a ready-to-run config with a mid-range split.
pub fn cmd_synth(out_dir: &Path, n: usize, seed: u64) -> Result<SynthOutcome, CliError> {
    fs::create_dir_all(out_dir)?;
    let synth_cfg = SynthConfig::paper_defaults(n, seed);
    let data = generate(&synth_cfg);

    let mut station_paths = Vec::new();
    let mut entries = Vec::new();
    for (i, series) in data.series.iter().enumerate() {
        let path = out_dir.join(format!("{}.csv", series.station_id));
        write_station_csv(series, &path)?;
        entries.push(StationEntry {
            id: series.station_id.clone(),
            path: path.clone(),
            role: if i + 1 == data.series.len() {
                StationRole::Target
            } else {
                StationRole::Covariate
            },
        });
        station_paths.push(path);
    }
    let truth_path = out_dir.join("ground_truth.json");
    write_json(&truth_path, &data.truth)?;

    let cut = synth_cfg.start + Duration::hours(synth_cfg.step_hours * (n as i64 / 2));
    let run_config = RunConfig {
        seed: Some(seed),
        stations: entries,
        split: crate::config::SplitConfig {
            cut,
            train_side: tailcast::preprocess::TrainSide::After,
        },
        preprocess: Default::default(),
        regressor: Default::default(),
        mgp: Default::default(),
        output: crate::config::OutputConfig {
            dir: out_dir.join("out"),
            ..Default::default()
        },
        reconstruct: crate::config::ReconstructConfig {
            from: Some(Utc.with_ymd_and_hms(1970, 1, 1, 0, 0, 0).unwrap()),
            to: Some(cut),
        },
    };
    let config_path = out_dir.join("tailcast.toml");
    fs::write(
        &config_path,
        toml::to_string_pretty(&run_config).map_err(|e| CliError::io(e.to_string()))?,
    )?;
    Ok(SynthOutcome {
        config_path,
        truth_path,
        station_paths,
    })
}
