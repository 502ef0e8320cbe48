//! File formats: per-station input CSV (`timestamp,value`), aligned-frame
//! CSV with its JSON sidecar, and model JSON helpers.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{ObservationFrame, StationSeries};

/// Result of reading one station CSV: the parsed series plus the number of
/// rows dropped for missing or non-finite values.
#[derive(Debug)]
pub struct StationRead {
    pub series: StationSeries,
    pub dropped: usize,
}

/// Read a `timestamp,value` CSV (ISO-8601 timestamps, meters). Rows with an
/// absent or non-finite value are dropped and counted; records are sorted
/// chronologically.
pub fn read_station_csv<P: AsRef<Path>>(station_id: &str, path: P) -> Result<StationRead> {
    let file = std::fs::File::open(path)?;
    read_station(station_id, file)
}

pub fn read_station<R: Read>(station_id: &str, reader: R) -> Result<StationRead> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for row in rdr.records() {
        let row = row?;
        let ts_field = row.get(0).unwrap_or("");
        let ts = ts_field
            .parse::<DateTime<Utc>>()
            .map_err(|e| Error::Domain(format!("bad timestamp {ts_field:?}: {e}")))?;
        let value = row.get(1).and_then(|v| v.trim().parse::<f64>().ok());
        match value {
            Some(v) if v.is_finite() => records.push((ts, v)),
            _ => dropped += 1,
        }
    }
    records.sort_by_key(|&(ts, _)| ts);
    Ok(StationRead {
        series: StationSeries {
            station_id: station_id.to_string(),
            records,
        },
        dropped,
    })
}

pub fn write_station_csv<P: AsRef<Path>>(series: &StationSeries, path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "value"])?;
    for (ts, v) in &series.records {
        w.write_record([ts.to_rfc3339(), format!("{v}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar metadata written next to a frame CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub shift: Vec<f64>,
    pub medians: Vec<f64>,
    pub n_rows: usize,
}

/// Write a frame as `timestamp,<station1>,...,<stationd>[,target]` plus the
/// JSON sidecar at `<path>.json`.
pub fn write_frame_csv<P: AsRef<Path>>(
    frame: &ObservationFrame,
    medians: &[f64],
    path: P,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["timestamp".into()];
    header.extend(frame.station_ids.iter().cloned());
    w.write_record(&header)?;
    for r in 0..frame.n_rows() {
        let mut row: Vec<String> = vec![frame.timestamps[r].to_rfc3339()];
        row.extend(frame.covariate_row(r).iter().map(|v| format!("{v}")));
        if let Some(t) = &frame.target {
            row.push(format!("{}", t[r]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let sidecar = FrameSidecar {
        shift: frame.shift.clone(),
        medians: medians.to_vec(),
        n_rows: frame.n_rows(),
    };
    let json_path = path.with_extension(match path.extension() {
        Some(e) => format!("{}.json", e.to_string_lossy()),
        None => "json".into(),
    });
    let mut f = std::fs::File::create(json_path)?;
    f.write_all(serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    Ok(())
}
