//! Hourly consumption series: ingestion, gap repair, calendar filtering and
//! daily-profile removal.

use std::ops::Range;

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hours since the Unix epoch, UTC.
pub type HourIndex = i64;

pub const HOURS_PER_DAY: usize = 24;

/// Parse an ISO-8601 UTC timestamp that falls exactly on an hour boundary.
pub fn parse_timestamp(raw: &str) -> Result<HourIndex> {
    let s = raw.trim();
    let dt: NaiveDateTime = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.with_timezone(&Utc).naive_utc()
    } else {
        let trimmed = s.trim_end_matches('Z');
        ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(trimmed, fmt).ok())
            .ok_or_else(|| Error::BadTimestamp(raw.to_string()))?
    };
    if dt.minute() != 0 || dt.second() != 0 || dt.nanosecond() != 0 {
        return Err(Error::BadTimestamp(raw.to_string()));
    }
    Ok(dt.and_utc().timestamp().div_euclid(3600))
}

pub fn format_timestamp(hour: HourIndex) -> String {
    let dt = DateTime::<Utc>::from_timestamp(hour * 3600, 0).expect("hour index in range");
    dt.format("%Y-%m-%dT%H:00:00Z").to_string()
}

pub fn weekday_of(hour: HourIndex) -> Weekday {
    DateTime::<Utc>::from_timestamp(hour * 3600, 0)
        .expect("hour index in range")
        .weekday()
}

pub fn is_weekend(hour: HourIndex) -> bool {
    matches!(weekday_of(hour), Weekday::Sat | Weekday::Sun)
}

/// How positions in a series map onto wall-clock hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Calendar {
    /// Every hour present.
    #[default]
    Hourly,
    /// Weekend days removed; remaining weekday hours re-indexed contiguously.
    WeekdayContiguous,
}

impl Calendar {
    /// Offset in positions that corresponds to "same hour last week".
    pub fn week_offset(self) -> usize {
        match self {
            Calendar::Hourly => 168,
            Calendar::WeekdayContiguous => 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionSeries {
    pub meter_id: String,
    /// Hour index of the first value.
    pub start: HourIndex,
    pub values: Vec<f64>,
    /// `true` where the value was interpolated during ingestion.
    pub gap_mask: Vec<bool>,
    #[serde(default)]
    pub calendar: Calendar,
}

impl ConsumptionSeries {
    /// Builds a series without gap flags. Values must be finite; non-negativity
    /// is only enforced for ingested meter data since synthetic fixtures are
    /// allowed to be zero-mean.
    pub fn new(meter_id: impl Into<String>, start: HourIndex, values: Vec<f64>) -> Result<Self> {
        let gap_mask = vec![false; values.len()];
        Self::with_mask(meter_id, start, values, gap_mask)
    }

    pub fn with_mask(
        meter_id: impl Into<String>,
        start: HourIndex,
        values: Vec<f64>,
        gap_mask: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != gap_mask.len() {
            return Err(Error::InvalidSeries(format!(
                "{} values but {} gap flags",
                values.len(),
                gap_mask.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("value {v} at position {i} is not finite")));
        }
        Ok(Self {
            meter_id: meter_id.into(),
            start,
            values,
            gap_mask,
            calendar: Calendar::Hourly,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hour_of_day(&self, position: usize) -> usize {
        (self.start + position as i64).rem_euclid(HOURS_PER_DAY as i64) as usize
    }

    pub fn gaps_filled(&self) -> usize {
        self.gap_mask.iter().filter(|&&g| g).count()
    }

    /// Drops weekend hours and re-indexes the remaining weekday hours as one
    /// contiguous sequence. Whole days are removed, so the hour-of-day phase
    /// is preserved.
    pub fn weekdays_only(&self) -> ConsumptionSeries {
        if self.calendar == Calendar::WeekdayContiguous {
            return self.clone();
        }
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| !is_weekend(self.start + i as i64))
            .collect();
        let start = keep.first().map_or(self.start, |&i| self.start + i as i64);
        ConsumptionSeries {
            meter_id: self.meter_id.clone(),
            start,
            values: keep.iter().map(|&i| self.values[i]).collect(),
            gap_mask: keep.iter().map(|&i| self.gap_mask[i]).collect(),
            calendar: Calendar::WeekdayContiguous,
        }
    }
}

/// One raw reading prior to ingestion. A missing `kwh` marks a hole.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub meter_id: String,
    pub hour: HourIndex,
    pub kwh: Option<f64>,
}

impl RawReading {
    pub fn new(meter_id: impl Into<String>, hour: HourIndex, kwh: f64) -> Self {
        Self {
            meter_id: meter_id.into(),
            hour,
            kwh: Some(kwh),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub max_lag: usize,
    pub detrend: bool,
    pub weekday_only: bool,
    pub max_gap_fill: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_lag: 240,
            detrend: true,
            weekday_only: false,
            max_gap_fill: 3,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_lag == 0 {
            return Err(Error::InvalidConfig("max_lag must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sorts one meter's readings by time and linearly fills holes of at most
/// `max_gap_fill` hours.
pub fn ingest_series(rows: &[RawReading], max_gap_fill: usize) -> Result<ConsumptionSeries> {
    let first = rows.first().ok_or(Error::EmptySeries)?;
    if let Some(other) = rows.iter().find(|r| r.meter_id != first.meter_id) {
        return Err(Error::MixedMeters(first.meter_id.clone(), other.meter_id.clone()));
    }

    let mut sorted: Vec<&RawReading> = rows.iter().collect();
    sorted.sort_by_key(|r| r.hour);
    for pair in sorted.windows(2) {
        if pair[0].hour == pair[1].hour {
            return Err(Error::DuplicateTimestamp(pair[0].hour));
        }
    }
    for r in &sorted {
        if let Some(v) = r.kwh {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeReading { hour: r.hour, value: v });
            }
        }
    }

    let present: Vec<(HourIndex, f64)> = sorted
        .iter()
        .filter_map(|r| r.kwh.map(|v| (r.hour, v)))
        .collect();
    let &(start, first_value) = present.first().ok_or(Error::EmptySeries)?;

    let mut values = vec![first_value];
    let mut gap_mask = vec![false];
    for pair in present.windows(2) {
        let (h0, v0) = pair[0];
        let (h1, v1) = pair[1];
        let missing = h1 - h0 - 1;
        if missing > max_gap_fill as i64 {
            return Err(Error::GapTooLarge {
                after: h0,
                hours: missing,
                limit: max_gap_fill,
            });
        }
        let span = (h1 - h0) as f64;
        for k in 1..=missing {
            let w = k as f64 / span;
            values.push(v0 + w * (v1 - v0));
            gap_mask.push(true);
        }
        values.push(v1);
        gap_mask.push(false);
    }

    ConsumptionSeries::with_mask(first.meter_id.clone(), start, values, gap_mask)
}

/// Mean consumption for each hour of the day, estimated on a training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub hourly_means: Vec<f64>,
    /// Hour of day of position 0 of the series the profile belongs to.
    pub phase: usize,
}

impl DailyProfile {
    pub fn zero(phase: usize) -> Self {
        Self {
            hourly_means: vec![0.0; HOURS_PER_DAY],
            phase,
        }
    }

    pub fn at(&self, position: usize) -> f64 {
        self.hourly_means[(self.phase + position) % HOURS_PER_DAY]
    }

    pub fn remove(&self, values: &[f64]) -> Vec<f64> {
        values.iter().enumerate().map(|(i, v)| v - self.at(i)).collect()
    }

    pub fn retrend(&self, values: &[f64]) -> Vec<f64> {
        values.iter().enumerate().map(|(i, v)| v + self.at(i)).collect()
    }
}

/// Per-hour-of-day means over `training_range`.
pub fn daily_profile(series: &ConsumptionSeries, training_range: Range<usize>) -> Result<DailyProfile> {
    let len = training_range.len();
    if len < HOURS_PER_DAY || training_range.end > series.len() {
        return Err(Error::RangeTooShort {
            len: len.min(series.len().saturating_sub(training_range.start)),
            need: HOURS_PER_DAY,
        });
    }
    let mut sums = [0.0f64; HOURS_PER_DAY];
    let mut counts = [0usize; HOURS_PER_DAY];
    for i in training_range {
        let h = series.hour_of_day(i);
        sums[h] += series.values[i];
        counts[h] += 1;
    }
    let hourly_means = sums
        .iter()
        .zip(counts.iter())
        .map(|(s, &c)| s / c as f64)
        .collect();
    Ok(DailyProfile {
        hourly_means,
        phase: series.hour_of_day(0),
    })
}

/// Subtracts the per-hour-of-day mean computed on `training_range` from the
/// whole series.
pub fn detrend_daily(
    series: &ConsumptionSeries,
    training_range: Range<usize>,
) -> Result<(Vec<f64>, DailyProfile)> {
    let profile = daily_profile(series, training_range)?;
    Ok((profile.remove(&series.values), profile))
}
