//! Measurement records on disk: a `time_s,current_a,voltage_v` CSV plus a
//! sidecar JSON with the sampling metadata.
//!
//! Floats are written with `{:e}`, the shortest representation that parses
//! back to the same `f64`, so a write/read cycle is lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fracimp_core::signal::samples_per_period;
use fracimp_core::{SignalKind, TimeRecord};
use serde::{Deserialize, Serialize};

use crate::config::{check_schema, SCHEMA_VERSION};
use crate::error::{CliError, Result};

pub const RECORD_HEADER: [&str; 3] = ["time_s", "current_a", "voltage_v"];

/// Largest tolerated deviation of a time stamp from `n / fs`.
const TIME_TOLERANCE_S: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub schema_version: String,
    pub sample_rate_hz: f64,
    pub periods: usize,
    pub period_s: f64,
    /// State of charge at the first sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocv_v: Option<f64>,
}

impl RecordMeta {
    pub fn for_record(record: &TimeRecord) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            sample_rate_hz: record.sample_rate_hz(),
            periods: record.periods(),
            period_s: record.period_s(),
            soc_percent: None,
            ocv_v: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub current: TimeRecord,
    pub voltage: TimeRecord,
    pub meta: RecordMeta,
}

/// `record.csv` -> `record.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::json(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(CliError::json(path))
}

/// Writes rows of floats under `header`.
pub fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    let fail = |e: csv::Error| CliError::csv(path, e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:e}")))
            .map_err(fail)?;
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| CliError::csv(path, e.to_string()))?;
    inner.flush().map_err(CliError::io(path))
}

/// Reads a float table, checking the header exactly.
pub fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::csv(path, e.to_string()))?;
    let found = reader
        .headers()
        .map_err(|e| CliError::csv(path, e.to_string()))?
        .clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(CliError::csv(
            path,
            format!(
                "expected header {:?}, found {:?}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::csv(path, format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(CliError::csv(
                path,
                format!(
                    "row {row}: expected {} fields, found {}",
                    header.len(),
                    rec.len()
                ),
            ));
        }
        let values = rec
            .iter()
            .zip(header)
            .map(|(field, name)| {
                field
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| {
                        CliError::csv(path, format!("row {row}: bad {name} value {field:?}"))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(rows)
}

pub fn write_record(
    path: &Path,
    current: &TimeRecord,
    voltage: &TimeRecord,
    meta: &RecordMeta,
) -> Result<()> {
    if !current.same_geometry(voltage) {
        return Err(CliError::Usage(
            "current and voltage records differ in geometry".into(),
        ));
    }
    let fs = current.sample_rate_hz();
    let rows = current
        .samples()
        .iter()
        .zip(voltage.samples())
        .enumerate()
        .map(|(n, (&i, &v))| vec![n as f64 / fs, i, v]);
    write_table(path, &RECORD_HEADER, rows)?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_record(path: &Path) -> Result<RecordFile> {
    let meta_path = sidecar_path(path);
    let meta: RecordMeta = read_json(&meta_path)?;
    check_schema(&meta.schema_version)?;
    let per_period = samples_per_period(meta.period_s, meta.sample_rate_hz)?;
    let expected = per_period * meta.periods;
    let rows = read_table(path, &RECORD_HEADER)?;
    if rows.len() != expected {
        return Err(CliError::csv(
            path,
            format!(
                "{} data rows, but {} periods of {} samples are declared in {}",
                rows.len(),
                meta.periods,
                per_period,
                meta_path.display()
            ),
        ));
    }
    for (n, row) in rows.iter().enumerate() {
        let t = n as f64 / meta.sample_rate_hz;
        if (row[0] - t).abs() > TIME_TOLERANCE_S {
            return Err(CliError::csv(
                path,
                format!(
                    "row {}: time {} s, expected {} s (uniform sampling)",
                    n + 1,
                    row[0],
                    t
                ),
            ));
        }
    }
    let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let make = |samples, kind| {
        TimeRecord::new(
            samples,
            meta.sample_rate_hz,
            meta.periods,
            meta.period_s,
            kind,
        )
    };
    Ok(RecordFile {
        current: make(column(1), SignalKind::Current)?,
        voltage: make(column(2), SignalKind::Voltage)?,
        meta,
    })
}
