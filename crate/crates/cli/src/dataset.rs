//! Reading the ingestion CSV and the per-meter dataset store.
//!
//! Input files have the header `meter_id,timestamp,kwh`, with timestamps in
//! ISO-8601 UTC on the hour. An empty `kwh` marks a missing reading. The
//! store holds one file per meter with the same columns plus `filled`,
//! which is `true` for interpolated hours.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparseload::series::{format_timestamp, ingest_series, parse_timestamp, ConsumptionSeries, RawReading};

use crate::error::{CliError, CliResult};

pub const INPUT_COLUMNS: [&str; 3] = ["meter_id", "timestamp", "kwh"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRow {
    pub meter_id: String,
    pub timestamp: String,
    pub kwh: f64,
    pub filled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMeter {
    pub meter_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub meters: usize,
    pub hours: usize,
    pub gaps_filled: usize,
    pub skipped: Vec<SkippedMeter>,
}

fn column_positions(headers: &csv::StringRecord, wanted: &[&str]) -> CliResult<Vec<usize>> {
    wanted
        .iter()
        .map(|&name| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| CliError::MissingColumn(name.to_string()))
        })
        .collect()
}

/// Reads raw readings grouped by meter, in order of first appearance.
/// Row numbers in errors count the header as row 1.
pub fn read_input_csv(path: &Path) -> CliResult<Vec<(String, Vec<RawReading>)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let cols = column_positions(reader.headers()?, &INPUT_COLUMNS)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<RawReading>, HashMap<i64, u64>)> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let bad = |message: String| CliError::BadRow { row, message };
        let field = |i: usize| record.get(cols[i]).unwrap_or("");
        let meter = field(0);
        if meter.is_empty() {
            return Err(bad("empty meter_id".into()));
        }
        let hour = parse_timestamp(field(1)).map_err(|e| bad(e.to_string()))?;
        let kwh = match field(2) {
            "" => None,
            raw => {
                let v: f64 = raw.parse().map_err(|_| bad(format!("cannot parse kwh {raw:?}")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(bad(format!("negative or non-finite kwh {raw}")));
                }
                Some(v)
            }
        };
        let (rows, seen) = groups.entry(meter.to_string()).or_insert_with(|| {
            order.push(meter.to_string());
            Default::default()
        });
        if let Some(first) = seen.insert(hour, row) {
            return Err(bad(format!("duplicate timestamp for meter {meter} (first seen on row {first})")));
        }
        rows.push(RawReading {
            meter_id: meter.to_string(),
            hour,
            kwh,
        });
    }
    Ok(order
        .into_iter()
        .map(|m| {
            let rows = groups.remove(&m).map(|g| g.0).unwrap_or_default();
            (m, rows)
        })
        .collect())
}

/// File name for a meter: ASCII letters, digits and `-` are kept, every
/// other byte becomes `_xx` in hex, so distinct ids never collide.
pub fn meter_file_name(meter_id: &str) -> String {
    let mut out = String::new();
    for b in meter_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("_{b:02x}"));
        }
    }
    out.push_str(".csv");
    out
}

pub fn write_series(dir: &Path, series: &ConsumptionSeries) -> CliResult<PathBuf> {
    let path = dir.join(meter_file_name(&series.meter_id));
    let mut w = csv::Writer::from_path(&path)?;
    for (i, (&kwh, &filled)) in series.values.iter().zip(&series.gap_mask).enumerate() {
        w.serialize(StoreRow {
            meter_id: series.meter_id.clone(),
            timestamp: format_timestamp(series.start + i as i64),
            kwh,
            filled,
        })?;
    }
    w.flush()?;
    Ok(path)
}

pub fn read_series(path: &Path) -> CliResult<ConsumptionSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    column_positions(reader.headers()?, &["meter_id", "timestamp", "kwh", "filled"])?;
    let mut meter = None;
    let mut start = 0;
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (i, row) in reader.deserialize::<StoreRow>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let hour = parse_timestamp(&row.timestamp).map_err(|e| CliError::BadRow {
            row: line,
            message: e.to_string(),
        })?;
        match &meter {
            None => {
                meter = Some(row.meter_id.clone());
                start = hour;
            }
            Some(m) if *m != row.meter_id => {
                return Err(CliError::BadRow {
                    row: line,
                    message: format!("meter {} in the file of {m}", row.meter_id),
                })
            }
            Some(_) => {}
        }
        if hour != start + i as i64 {
            return Err(CliError::BadRow {
                row: line,
                message: format!("expected hour {}", format_timestamp(start + i as i64)),
            });
        }
        values.push(row.kwh);
        mask.push(row.filled);
    }
    let meter = meter.ok_or_else(|| CliError::NotFound(format!("{} holds no readings", path.display())))?;
    Ok(ConsumptionSeries::with_mask(meter, start, values, mask)?)
}

/// Every meter in the store, ordered by meter id.
pub fn load_dataset(dir: &Path) -> CliResult<Vec<ConsumptionSeries>> {
    if !dir.is_dir() {
        return Err(CliError::NotFound(format!("dataset directory {} does not exist", dir.display())));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut by_id = BTreeMap::new();
    for p in paths {
        let s = read_series(&p)?;
        by_id.insert(s.meter_id.clone(), s);
    }
    if by_id.is_empty() {
        return Err(CliError::NotFound(format!("no meters in {}", dir.display())));
    }
    Ok(by_id.into_values().collect())
}

/// Repairs each meter and writes it to the store. Meters whose holes are
/// too long to fill are left out and listed in the summary.
pub fn ingest(input: &Path, dataset_dir: &Path, max_gap_fill: usize) -> CliResult<IngestSummary> {
    let groups = read_input_csv(input)?;
    std::fs::create_dir_all(dataset_dir)?;
    let mut summary = IngestSummary {
        meters: 0,
        hours: 0,
        gaps_filled: 0,
        skipped: Vec::new(),
    };
    for (meter_id, rows) in groups {
        match ingest_series(&rows, max_gap_fill) {
            Ok(series) => {
                write_series(dataset_dir, &series)?;
                summary.meters += 1;
                summary.hours += series.len();
                summary.gaps_filled += series.gaps_filled();
            }
            Err(e) => summary.skipped.push(SkippedMeter {
                meter_id,
                error: e.to_string(),
            }),
        }
    }
    Ok(summary)
}

/// Writes series in the ingestion format, one row per hour.
pub fn write_input_csv(path: &Path, panel: &[ConsumptionSeries]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(INPUT_COLUMNS)?;
    for s in panel {
        for (i, v) in s.values.iter().enumerate() {
            w.write_record([s.meter_id.clone(), format_timestamp(s.start + i as i64), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
