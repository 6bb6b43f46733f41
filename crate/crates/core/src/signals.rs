//! Hourly incentive signals: marginal/average emissions factors and day-ahead
//! prices.
//!
//! A [`SignalSeries`] is a uniform hourly trace anchored at a UTC start
//! instant. Local clock time is derived from the region label's fixed UTC
//! offset; daylight saving is not modelled.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest run of missing hours that is filled by linear interpolation.
pub const MAX_INTERPOLATED_GAP_HOURS: i64 = 2;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("expected header `timestamp,value`, found `{found}`")]
    BadHeader { found: String },
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("line {line}: timestamp does not increase")]
    NonMonotone { line: usize },
    #[error("line {line}: spacing of {minutes} minutes is not a whole number of hours")]
    NonHourly { line: usize, minutes: i64 },
    #[error("line {line}: gap of {missing} missing hours exceeds the interpolation limit")]
    GapTooLarge { line: usize, missing: i64 },
    #[error("negative emissions factor {value} at index {index}")]
    NegativeEmissions { index: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("signal has no rows")]
    Empty,
    #[error("month {0} is outside 1..=12")]
    BadMonth(u32),
    #[error("month {month} is absent from the series")]
    MonthAbsent { month: u32 },
    #[error("month {month}: hour-of-day {hour} has no samples")]
    MissingHourSlot { month: u32, hour: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Mef,
    Aef,
    DamPrice,
    Generic,
}

impl SignalKind {
    pub fn is_emissions(self) -> bool {
        matches!(self, SignalKind::Mef | SignalKind::Aef)
    }

    pub fn default_units(self) -> Units {
        match self {
            SignalKind::Mef | SignalKind::Aef => Units::KgCo2PerMwh,
            SignalKind::DamPrice | SignalKind::Generic => Units::DollarsPerMwh,
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SignalKind::Mef => "mef",
            SignalKind::Aef => "aef",
            SignalKind::DamPrice => "dam-price",
            SignalKind::Generic => "generic",
        };
        f.write_str(s)
    }
}

impl FromStr for SignalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mef" => Ok(SignalKind::Mef),
            "aef" => Ok(SignalKind::Aef),
            "dam" | "dam-price" | "dam_price" => Ok(SignalKind::DamPrice),
            "generic" => Ok(SignalKind::Generic),
            other => Err(format!(
                "unknown signal kind `{other}` (mef, aef, dam, generic)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "$/MWh")]
    DollarsPerMwh,
    #[serde(rename = "kgCO2/MWh")]
    KgCo2PerMwh,
    #[serde(rename = "MW")]
    Megawatts,
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Units::DollarsPerMwh => "$/MWh",
            Units::KgCo2PerMwh => "kgCO2/MWh",
            Units::Megawatts => "MW",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    Csv,
    Json,
}

/// Fixed UTC offset, in hours, used for local hour-of-day of a region label.
///
/// Known ISO labels map to their standard-time offsets; `UTC+h` / `UTC-h`
/// labels are parsed; anything else is treated as UTC.
pub fn region_utc_offset_hours(region: &str) -> i32 {
    let label = region.trim().to_ascii_uppercase();
    match label.as_str() {
        "CAISO" | "BPA" => -8,
        "ERCOT" | "SPP" | "MISO" => -6,
        "PJM" | "NYISO" | "ISONE" | "ISO-NE" => -5,
        _ => label
            .strip_prefix("UTC")
            .and_then(|rest| rest.parse::<i32>().ok())
            .filter(|h| (-12..=14).contains(h))
            .unwrap_or(0),
    }
}

/// Uniform hourly trace of an incentive signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub kind: SignalKind,
    pub region: String,
    pub units: Units,
    pub start: DateTime<Utc>,
    pub values: Vec<f64>,
}

impl SignalSeries {
    pub fn new(
        kind: SignalKind,
        region: impl Into<String>,
        units: Units,
        start: DateTime<Utc>,
        values: Vec<f64>,
    ) -> Result<Self, SignalError> {
        let series = SignalSeries {
            kind,
            region: region.into(),
            units,
            start,
            values,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.values.is_empty() {
            return Err(SignalError::Empty);
        }
        for (index, &value) in self.values.iter().enumerate() {
            if !value.is_finite() {
                return Err(SignalError::NonFinite { index });
            }
            if self.kind.is_emissions() && value < 0.0 {
                return Err(SignalError::NegativeEmissions { index, value });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.values.len()).map(|i| self.timestamp(i))
    }

    pub fn utc_offset_hours(&self) -> i32 {
        region_utc_offset_hours(&self.region)
    }

    /// Local wall-clock time of sample `index`.
    pub fn local_time(&self, index: usize) -> NaiveDateTime {
        (self.timestamp(index) + Duration::hours(self.utc_offset_hours() as i64)).naive_utc()
    }

    /// True when every local hour of `year`-`month` has a sample.
    pub fn covers_month(&self, year: i32, month: u32) -> bool {
        let Some(first) = NaiveDate::from_ymd_opt(year, month, 1) else {
            return false;
        };
        let local_start = first.and_hms_opt(0, 0, 0).unwrap();
        let offset = Duration::hours(self.utc_offset_hours() as i64);
        let utc_start = Utc.from_utc_datetime(&(local_start - offset));
        let hours = days_in_month(year, month) as i64 * 24;
        let first_index = (utc_start - self.start).num_hours();
        first_index >= 0
            && (utc_start - self.start).num_minutes() % 60 == 0
            && first_index + hours <= self.values.len() as i64
    }

    pub fn to_json(&self) -> Result<String, SignalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SignalError> {
        let series: SignalSeries = serde_json::from_str(text)?;
        series.validate()?;
        Ok(series)
    }

    /// Writes the `timestamp,value` CSV form; values use the shortest
    /// representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SignalError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["timestamp", "value"])?;
        for (i, value) in self.values.iter().enumerate() {
            let ts = self.timestamp(i).format("%Y-%m-%dT%H:%M:%SZ").to_string();
            out.write_record([ts, value.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A loaded series plus the instants that were filled by interpolation.
#[derive(Debug, Clone)]
pub struct LoadedSignal {
    pub series: SignalSeries,
    pub interpolated: Vec<DateTime<Utc>>,
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    const NAIVE: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    NAIVE
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|naive| Utc.from_utc_datetime(&naive))
}

/// Reads a signal from `source`.
///
/// CSV input must carry a `timestamp,value` header. Runs of up to
/// [`MAX_INTERPOLATED_GAP_HOURS`] missing hours are filled linearly and
/// reported in [`LoadedSignal::interpolated`]. JSON input is the serialized
/// [`SignalSeries`]; `kind`, `units` and `region` then come from the document.
pub fn load_signal<R: Read>(
    source: R,
    format: SignalFormat,
    kind: SignalKind,
    units: Units,
    region: &str,
) -> Result<LoadedSignal, SignalError> {
    match format {
        SignalFormat::Json => {
            let mut text = String::new();
            let mut source = source;
            source.read_to_string(&mut text)?;
            Ok(LoadedSignal {
                series: SignalSeries::from_json(&text)?,
                interpolated: Vec::new(),
            })
        }
        SignalFormat::Csv => load_csv(source, kind, units, region),
    }
}

fn load_csv<R: Read>(
    source: R,
    kind: SignalKind,
    units: Units,
    region: &str,
) -> Result<LoadedSignal, SignalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.len() != 2
        || !header[0].eq_ignore_ascii_case("timestamp")
        || !header[1].eq_ignore_ascii_case("value")
    {
        return Err(SignalError::BadHeader {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut start: Option<DateTime<Utc>> = None;
    let mut last: Option<(DateTime<Utc>, f64)> = None;
    let mut values = Vec::new();
    let mut interpolated = Vec::new();

    for (row, record) in reader.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let record = record?;
        if record.len() != 2 {
            return Err(SignalError::BadRow {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| SignalError::BadRow {
            line,
            reason: format!("unparseable timestamp `{}`", &record[0]),
        })?;
        let value: f64 = record[1].parse().map_err(|_| SignalError::BadRow {
            line,
            reason: format!("unparseable value `{}`", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(SignalError::BadRow {
                line,
                reason: "value is not finite".into(),
            });
        }
        if kind.is_emissions() && value < 0.0 {
            return Err(SignalError::NegativeEmissions {
                index: values.len(),
                value,
            });
        }

        if let Some((prev_ts, prev_value)) = last {
            let minutes = (ts - prev_ts).num_minutes();
            let exact = (ts - prev_ts).num_seconds() % 3600 == 0;
            if minutes <= 0 {
                return Err(SignalError::NonMonotone { line });
            }
            if !exact || minutes % 60 != 0 {
                return Err(SignalError::NonHourly { line, minutes });
            }
            let missing = minutes / 60 - 1;
            if missing > MAX_INTERPOLATED_GAP_HOURS {
                return Err(SignalError::GapTooLarge { line, missing });
            }
            for j in 1..=missing {
                let frac = j as f64 / (missing + 1) as f64;
                values.push(prev_value + (value - prev_value) * frac);
                interpolated.push(prev_ts + Duration::hours(j));
            }
        } else {
            start = Some(ts);
        }
        values.push(value);
        last = Some((ts, value));
    }

    let start = start.ok_or(SignalError::Empty)?;
    Ok(LoadedSignal {
        series: SignalSeries::new(kind, region, units, start, values)?,
        interpolated,
    })
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid month");
    (next - first).num_days() as u32
}

/// Average of a signal by local hour-of-day within one calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub month: u32,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl HourlyProfile {
    /// Repeats the 24 slot values for `days` consecutive days.
    pub fn broadcast(&self, days: usize) -> Vec<f64> {
        self.values
            .iter()
            .copied()
            .cycle()
            .take(days * 24)
            .collect()
    }

    /// Expands the profile into an hourly series covering the whole month of
    /// `year`, starting at local midnight on the first.
    pub fn to_series(
        &self,
        year: i32,
        kind: SignalKind,
        region: &str,
        units: Units,
    ) -> Result<SignalSeries, SignalError> {
        let first = NaiveDate::from_ymd_opt(year, self.month, 1)
            .ok_or(SignalError::BadMonth(self.month))?
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let offset = Duration::hours(region_utc_offset_hours(region) as i64);
        let start = Utc.from_utc_datetime(&(first - offset));
        let days = days_in_month(year, self.month) as usize;
        SignalSeries::new(kind, region, units, start, self.broadcast(days))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Averages every sample whose local month is `month` into 24 hour-of-day
/// slots.
pub fn month_hour_average(series: &SignalSeries, month: u32) -> Result<HourlyProfile, SignalError> {
    if !(1..=12).contains(&month) {
        return Err(SignalError::BadMonth(month));
    }
    let mut sums = [0.0f64; 24];
    let mut counts = [0usize; 24];
    for (i, &value) in series.values.iter().enumerate() {
        let local = series.local_time(i);
        if local.month() == month {
            let h = local.hour() as usize;
            sums[h] += value;
            counts[h] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(SignalError::MonthAbsent { month });
    }
    if let Some(hour) = counts.iter().position(|&c| c == 0) {
        return Err(SignalError::MissingHourSlot { month, hour });
    }
    Ok(HourlyProfile {
        month,
        values: sums
            .iter()
            .zip(counts.iter())
            .map(|(s, &c)| s / c as f64)
            .collect(),
        counts: counts.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(rows: &[(&str, f64)]) -> String {
        let mut s = String::from("timestamp,value\n");
        for (ts, v) in rows {
            s.push_str(&format!("{ts},{v}\n"));
        }
        s
    }

    fn hourly_rows(start: DateTime<Utc>, values: &[f64]) -> String {
        let mut s = String::from("timestamp,value\n");
        for (i, v) in values.iter().enumerate() {
            let ts = start + Duration::hours(i as i64);
            s.push_str(&format!("{},{v}\n", ts.format("%Y-%m-%dT%H:%M:%SZ")));
        }
        s
    }

    fn load(text: &str, kind: SignalKind) -> Result<LoadedSignal, SignalError> {
        load_signal(
            text.as_bytes(),
            SignalFormat::Csv,
            kind,
            kind.default_units(),
            "CAISO",
        )
    }

    #[test]
    fn constant_day_passes_through() {
        let start = Utc.with_ymd_and_hms(2023, 7, 1, 0, 0, 0).unwrap();
        let loaded = load(&hourly_rows(start, &[50.0; 24]), SignalKind::DamPrice).unwrap();
        assert_eq!(loaded.series.len(), 24);
        assert!(loaded.series.values.iter().all(|&v| v == 50.0));
        assert!(loaded.interpolated.is_empty());
    }

    #[test]
    fn single_missing_hour_is_interpolated() {
        let text = csv_of(&[
            ("2023-07-01T00:00:00Z", 10.0),
            ("2023-07-01T02:00:00Z", 30.0),
        ]);
        let loaded = load(&text, SignalKind::DamPrice).unwrap();
        assert_eq!(loaded.series.values, vec![10.0, 20.0, 30.0]);
        assert_eq!(
            loaded.interpolated,
            vec![Utc.with_ymd_and_hms(2023, 7, 1, 1, 0, 0).unwrap()]
        );
    }

    #[test]
    fn july_has_744_rows_and_covers_month() {
        // CAISO local midnight July 1 is 08:00 UTC
        let start = Utc.with_ymd_and_hms(2023, 7, 1, 8, 0, 0).unwrap();
        let values: Vec<f64> = (0..31 * 24).map(|i| i as f64).collect();
        let loaded = load(&hourly_rows(start, &values), SignalKind::Mef).unwrap();
        assert_eq!(loaded.series.len(), 744);
        assert!(loaded.series.covers_month(2023, 7));
        assert!(!loaded.series.covers_month(2023, 8));
    }

    #[test]
    fn ingestion_errors() {
        let back = csv_of(&[("2023-07-01T02:00:00Z", 1.0), ("2023-07-01T01:00:00Z", 1.0)]);
        assert!(matches!(
            load(&back, SignalKind::Generic),
            Err(SignalError::NonMonotone { line: 3 })
        ));

        let half = csv_of(&[("2023-07-01T00:00:00Z", 1.0), ("2023-07-01T00:30:00Z", 1.0)]);
        assert!(matches!(
            load(&half, SignalKind::Generic),
            Err(SignalError::NonHourly { .. })
        ));

        let gap = csv_of(&[("2023-07-01T00:00:00Z", 1.0), ("2023-07-01T04:00:00Z", 1.0)]);
        assert!(matches!(
            load(&gap, SignalKind::Generic),
            Err(SignalError::GapTooLarge { missing: 3, .. })
        ));

        let neg = csv_of(&[("2023-07-01T00:00:00Z", -1.0)]);
        assert!(matches!(
            load(&neg, SignalKind::Aef),
            Err(SignalError::NegativeEmissions { .. })
        ));
        // negative prices are fine
        assert!(load(&neg, SignalKind::DamPrice).is_ok());

        let junk = "timestamp,value\n2023-07-01T00:00:00Z,abc\n";
        assert!(matches!(
            load(junk, SignalKind::Generic),
            Err(SignalError::BadRow { line: 2, .. })
        ));

        let bad_header = "time,price\n2023-07-01T00:00:00Z,1\n";
        assert!(matches!(
            load(bad_header, SignalKind::Generic),
            Err(SignalError::BadHeader { .. })
        ));

        assert!(matches!(
            load("timestamp,value\n", SignalKind::Generic),
            Err(SignalError::Empty)
        ));
    }

    #[test]
    fn naive_timestamps_are_utc() {
        let text = "timestamp,value\n2023-07-01 00:00,1\n2023-07-01 01:00,2\n";
        let loaded = load(text, SignalKind::Generic).unwrap();
        assert_eq!(
            loaded.series.start,
            Utc.with_ymd_and_hms(2023, 7, 1, 0, 0, 0).unwrap()
        );
    }

    #[test]
    fn month_hour_average_examples() {
        let profile_of = |values: Vec<f64>, region: &str| {
            let offset = region_utc_offset_hours(region) as i64;
            let start =
                Utc.with_ymd_and_hms(2023, 7, 1, 0, 0, 0).unwrap() - Duration::hours(offset);
            let series =
                SignalSeries::new(SignalKind::Mef, region, Units::KgCo2PerMwh, start, values)
                    .unwrap();
            month_hour_average(&series, 7).unwrap()
        };

        let constant = profile_of(vec![42.0; 744], "CAISO");
        assert!(constant.values.iter().all(|&v| v == 42.0));
        assert!(constant.counts.iter().all(|&c| c == 31));

        let mut two_days = vec![0.0; 48];
        two_days[0] = 10.0;
        two_days[24] = 30.0;
        assert_eq!(profile_of(two_days, "ERCOT").values[0], 20.0);

        let by_hour: Vec<f64> = (0..744).map(|i| (i % 24) as f64).collect();
        let expected: Vec<f64> = (0..24).map(|h| h as f64).collect();
        assert_eq!(profile_of(by_hour, "PJM").values, expected);
    }

    #[test]
    fn month_absent_and_partial_day() {
        let start = Utc.with_ymd_and_hms(2023, 7, 1, 0, 0, 0).unwrap();
        let series = SignalSeries::new(
            SignalKind::Aef,
            "UTC",
            Units::KgCo2PerMwh,
            start,
            vec![1.0; 12],
        )
        .unwrap();
        assert!(matches!(
            month_hour_average(&series, 3),
            Err(SignalError::MonthAbsent { month: 3 })
        ));
        assert!(matches!(
            month_hour_average(&series, 7),
            Err(SignalError::MissingHourSlot { hour: 12, .. })
        ));
        assert!(matches!(
            month_hour_average(&series, 13),
            Err(SignalError::BadMonth(13))
        ));
    }

    #[test]
    fn region_offsets() {
        assert_eq!(region_utc_offset_hours("caiso"), -8);
        assert_eq!(region_utc_offset_hours("NYISO"), -5);
        assert_eq!(region_utc_offset_hours("UTC+3"), 3);
        assert_eq!(region_utc_offset_hours("UTC-7"), -7);
        assert_eq!(region_utc_offset_hours("somewhere"), 0);
    }

    #[test]
    fn json_form_has_declared_fields() {
        let start = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
        let series = SignalSeries::new(
            SignalKind::DamPrice,
            "SPP",
            Units::DollarsPerMwh,
            start,
            vec![-3.5, 12.0],
        )
        .unwrap();
        let value: serde_json::Value = serde_json::from_str(&series.to_json().unwrap()).unwrap();
        assert_eq!(value["kind"], "dam-price");
        assert_eq!(value["units"], "$/MWh");
        assert_eq!(value["region"], "SPP");
        assert_eq!(value["values"][0], -3.5);
        assert_eq!(
            SignalSeries::from_json(&series.to_json().unwrap()).unwrap(),
            series
        );
    }
}
