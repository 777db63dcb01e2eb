//! One-minute pump telemetry: CSV ingest/export, gap repair, and a seeded
//! synthetic generator with injected degradation episodes.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::seed;

pub const CSV_HEADER: [&str; 6] = [
    "timestamp",
    "vibration",
    "temperature",
    "flow",
    "pressure",
    "current",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing or misplaced column `{0}` (expected header {expected})", expected = CSV_HEADER.join(","))]
    MissingColumn(String),
    #[error("no valid records left after cleaning ({dropped} rows dropped)")]
    EmptyAfterCleaning { dropped: usize },
    #[error("timestamps not strictly increasing at record {0}")]
    NonMonotonicAfterSort(usize),
    #[error("invalid synthetic profile: {0}")]
    InvalidProfile(String),
    #[error("invalid record at index {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
}

/// The five monitored signals in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorId {
    Vibration,
    Temperature,
    Flow,
    Pressure,
    Current,
}

impl SensorId {
    pub const ALL: [SensorId; 5] = [
        SensorId::Vibration,
        SensorId::Temperature,
        SensorId::Flow,
        SensorId::Pressure,
        SensorId::Current,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorId::Vibration => "vibration",
            SensorId::Temperature => "temperature",
            SensorId::Flow => "flow",
            SensorId::Pressure => "pressure",
            SensorId::Current => "current",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SensorId::Vibration => "mm/s",
            SensorId::Temperature => "°C",
            SensorId::Flow => "m³/h",
            SensorId::Pressure => "bar",
            SensorId::Current => "A",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown sensor `{s}`"))
    }
}

/// UTC wall-clock time at minute resolution, stored as minutes since the
/// Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn minutes(self) -> i64 {
        self.0
    }

    pub fn plus_minutes(self, m: i64) -> Timestamp {
        Timestamp(self.0 + m)
    }

    pub fn parse(s: &str) -> Option<Timestamp> {
        let dt = NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()?;
        Some(Timestamp(dt.and_utc().timestamp().div_euclid(60)))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::from_timestamp(self.0 * 60, 0) {
            Some(dt) => write!(f, "{}", dt.format(TIMESTAMP_FORMAT)),
            None => write!(f, "<out-of-range:{}>", self.0),
        }
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub timestamp: Timestamp,
    /// Indexed by [`SensorId::index`].
    pub values: [f64; SensorId::COUNT],
}

impl TelemetryRecord {
    pub fn value(&self, sensor: SensorId) -> f64 {
        self.values[sensor.index()]
    }
}

/// Records with strictly increasing timestamps and finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySeries {
    records: Vec<TelemetryRecord>,
}

impl TelemetrySeries {
    pub fn new(records: Vec<TelemetryRecord>) -> Result<Self, TelemetryError> {
        for (i, r) in records.iter().enumerate() {
            if let Some(s) = SensorId::ALL.iter().find(|s| !r.value(**s).is_finite()) {
                return Err(TelemetryError::InvalidRecord {
                    index: i,
                    reason: format!("non-finite {s}"),
                });
            }
            if i > 0 && records[i - 1].timestamp >= r.timestamp {
                return Err(TelemetryError::NonMonotonicAfterSort(i));
            }
        }
        Ok(TelemetrySeries { records })
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, sensor: SensorId) -> Vec<f64> {
        self.records.iter().map(|r| r.value(sensor)).collect()
    }

    /// True when consecutive timestamps are exactly one minute apart.
    pub fn is_contiguous(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].timestamp.0 - w[0].timestamp.0 == 1)
    }

    /// Records `[start, end)` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> TelemetrySeries {
        TelemetrySeries {
            records: self.records[start..end].to_vec(),
        }
    }

    pub fn to_csv<W: Write>(&self, w: W) -> Result<(), TelemetryError> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.records {
            let mut row = Vec::with_capacity(6);
            row.push(r.timestamp.to_string());
            row.extend(r.values.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TelemetryError> {
        let file = std::fs::File::create(path)?;
        self.to_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    /// Rows with an unparseable timestamp, missing fields or non-finite values.
    pub dropped_invalid: usize,
    /// Earlier rows superseded by a later row with the same timestamp.
    pub duplicates_collapsed: usize,
}

pub fn ingest_csv(path: &Path) -> Result<(TelemetrySeries, IngestReport), TelemetryError> {
    let file = std::fs::File::open(path)?;
    parse_csv(std::io::BufReader::new(file))
}

/// Parses telemetry CSV, dropping invalid rows, sorting by timestamp and
/// keeping the last occurrence of duplicated timestamps.
pub fn parse_csv<R: Read>(reader: R) -> Result<(TelemetrySeries, IngestReport), TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    for (i, expected) in CSV_HEADER.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*expected) {
            return Err(TelemetryError::MissingColumn((*expected).to_string()));
        }
    }

    let mut report = IngestReport::default();
    let mut rows: Vec<(usize, TelemetryRecord)> = Vec::new();
    for (row_index, row) in rdr.records().enumerate() {
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                report.dropped_invalid += 1;
                continue;
            }
        };
        match parse_row(&row) {
            Some(rec) => rows.push((row_index, rec)),
            None => report.dropped_invalid += 1,
        }
    }

    // Stable sort keeps file order among equal timestamps, so the last one wins.
    rows.sort_by_key(|(idx, r)| (r.timestamp, *idx));
    let mut records: Vec<TelemetryRecord> = Vec::with_capacity(rows.len());
    for (_, rec) in rows {
        match records.last_mut() {
            Some(last) if last.timestamp == rec.timestamp => {
                *last = rec;
                report.duplicates_collapsed += 1;
            }
            _ => records.push(rec),
        }
    }
    if records.is_empty() {
        return Err(TelemetryError::EmptyAfterCleaning {
            dropped: report.dropped_invalid,
        });
    }
    Ok((TelemetrySeries::new(records)?, report))
}

fn parse_row(row: &csv::StringRecord) -> Option<TelemetryRecord> {
    if row.len() != CSV_HEADER.len() {
        return None;
    }
    let timestamp = Timestamp::parse(row.get(0)?)?;
    let mut values = [0.0; SensorId::COUNT];
    for (i, v) in values.iter_mut().enumerate() {
        let parsed: f64 = row.get(i + 1)?.trim().parse().ok()?;
        if !parsed.is_finite() {
            return None;
        }
        *v = parsed;
    }
    Some(TelemetryRecord { timestamp, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: Timestamp,
    pub end: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RepairReport {
    /// Minutes inserted by interpolation into the returned segment.
    pub filled: usize,
    /// Contiguous segments dropped because a larger gap separated them from
    /// the kept one; inclusive first/last timestamps.
    pub discarded: Vec<Span>,
}

/// Fills gaps of at most `max_gap` missing minutes by per-sensor linear
/// interpolation. Larger gaps split the series; the longest resulting
/// segment (earliest on ties) is returned.
pub fn repair_gaps(series: &TelemetrySeries, max_gap: usize) -> (TelemetrySeries, RepairReport) {
    let recs = series.records();
    if recs.len() <= 1 {
        return (series.clone(), RepairReport::default());
    }

    let mut segments: Vec<(Vec<TelemetryRecord>, usize)> = Vec::new();
    let mut current = vec![recs[0]];
    let mut filled = 0usize;
    for pair in recs.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let missing = (b.timestamp.0 - a.timestamp.0 - 1) as usize;
        if missing > max_gap {
            segments.push((std::mem::take(&mut current), filled));
            filled = 0;
        } else {
            let steps = (missing + 1) as f64;
            for k in 1..=missing {
                let frac = k as f64 / steps;
                let mut values = [0.0; SensorId::COUNT];
                for (s, v) in values.iter_mut().enumerate() {
                    *v = a.values[s] + (b.values[s] - a.values[s]) * frac;
                }
                current.push(TelemetryRecord {
                    timestamp: a.timestamp.plus_minutes(k as i64),
                    values,
                });
            }
            filled += missing;
        }
        current.push(b);
    }
    segments.push((current, filled));

    let best = segments
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.0.len().cmp(&b.0.len()).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut report = RepairReport::default();
    let mut kept = Vec::new();
    for (i, (seg, seg_filled)) in segments.into_iter().enumerate() {
        if i == best {
            report.filled = seg_filled;
            kept = seg;
        } else if let (Some(first), Some(last)) = (seg.first(), seg.last()) {
            report.discarded.push(Span {
                start: first.timestamp,
                end: last.timestamp,
            });
        }
    }
    (TelemetrySeries { records: kept }, report)
}

/// Shortest synthetic series that fits the largest canonical window (120)
/// plus the largest canonical horizon (30).
pub const MIN_SYNTHETIC_DURATION: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorProfile {
    pub baseline: f64,
    pub noise_std: f64,
    /// Seasonal period in minutes.
    pub period: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorProfiles {
    pub vibration: SensorProfile,
    pub temperature: SensorProfile,
    pub flow: SensorProfile,
    pub pressure: SensorProfile,
    pub current: SensorProfile,
}

impl SensorProfiles {
    pub fn get(&self, sensor: SensorId) -> &SensorProfile {
        match sensor {
            SensorId::Vibration => &self.vibration,
            SensorId::Temperature => &self.temperature,
            SensorId::Flow => &self.flow,
            SensorId::Pressure => &self.pressure,
            SensorId::Current => &self.current,
        }
    }
}

/// A degradation episode. The multiplier on the affected sensors rises
/// linearly from 1 to `severity` over `ramp` minutes, holds for `hold`
/// minutes, then drops back to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEpisode {
    /// Offset from the series start, minutes.
    pub start: usize,
    pub ramp: usize,
    #[serde(default)]
    pub hold: usize,
    pub sensors: Vec<SensorId>,
    pub severity: f64,
}

impl FaultEpisode {
    pub fn multiplier_at(&self, t: usize) -> f64 {
        if t < self.start {
            return 1.0;
        }
        let dt = t - self.start;
        if dt < self.ramp {
            1.0 + (self.severity - 1.0) * (dt + 1) as f64 / self.ramp as f64
        } else if dt < self.ramp + self.hold {
            self.severity
        } else {
            1.0
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.ramp + self.hold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub start: Timestamp,
    pub duration_minutes: usize,
    pub sensors: SensorProfiles,
    #[serde(default)]
    pub faults: Vec<FaultEpisode>,
    pub seed: u64,
}

impl SyntheticProfile {
    /// Reference pump profile. Healthy baselines sit well below the default
    /// adaptive limits; 24 degradation episodes drift vibration, temperature
    /// and (sometimes) pressure or current upward over 40-85 minutes before
    /// crossing into the warning band. Only flow, which never reaches its
    /// limits, carries a 12-hour cycle: a cycle on the label-driving sensors
    /// puts late test episodes at times of day no training episode covers.
    pub fn reference_pump() -> SyntheticProfile {
        let sensors = SensorProfiles {
            vibration: SensorProfile { baseline: 1.10, noise_std: 0.05, period: 1440.0, amplitude: 0.0 },
            temperature: SensorProfile { baseline: 40.0, noise_std: 0.6, period: 1440.0, amplitude: 0.0 },
            flow: SensorProfile { baseline: 2550.0, noise_std: 12.0, period: 720.0, amplitude: 20.0 },
            pressure: SensorProfile { baseline: 4.20, noise_std: 0.04, period: 720.0, amplitude: 0.0 },
            current: SensorProfile { baseline: 205.0, noise_std: 1.5, period: 1440.0, amplitude: 0.0 },
        };
        let mut faults = Vec::new();
        let mut start = 250usize;
        for k in 0..24usize {
            let ramp = 40 + (k * 17) % 46;
            let hold = 4 + (k * 7) % 9;
            let severity = 1.75 + 0.05 * ((k * 5) % 7) as f64;
            let mut sensors = vec![SensorId::Vibration, SensorId::Temperature];
            match k % 4 {
                1 => sensors.push(SensorId::Pressure),
                3 => sensors.push(SensorId::Current),
                _ => {}
            }
            faults.push(FaultEpisode { start, ramp, hold, sensors, severity });
            start += 330 + (k * 53) % 120;
        }
        SyntheticProfile {
            start: Timestamp::parse("2024-03-01T00:00").expect("valid literal"),
            duration_minutes: start + 200,
            sensors,
            faults,
            seed: 20_240_301,
        }
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        let bad = |m: String| Err(TelemetryError::InvalidProfile(m));
        if self.duration_minutes < MIN_SYNTHETIC_DURATION {
            return bad(format!(
                "duration {} < {MIN_SYNTHETIC_DURATION} minutes",
                self.duration_minutes
            ));
        }
        for s in SensorId::ALL {
            let p = self.sensors.get(s);
            if !(p.baseline.is_finite() && p.amplitude.is_finite()) {
                return bad(format!("{s}: baseline and amplitude must be finite"));
            }
            if !(p.noise_std.is_finite() && p.noise_std >= 0.0) {
                return bad(format!("{s}: noise_std must be finite and >= 0"));
            }
            if !(p.period.is_finite() && p.period > 0.0) {
                return bad(format!("{s}: period must be > 0"));
            }
        }
        for (i, f) in self.faults.iter().enumerate() {
            if !(f.severity.is_finite() && f.severity >= 1.0) {
                return bad(format!("fault {i}: severity must be >= 1"));
            }
            if f.sensors.is_empty() {
                return bad(format!("fault {i}: no affected sensors"));
            }
        }
        Ok(())
    }
}

/// Generates `m(t) * (baseline + amplitude * sin(2πt/period) + noise)` per
/// sensor, where `m(t)` is the largest active fault multiplier (1 outside
/// episodes). One standard-normal draw per sensor per minute, in canonical
/// sensor order, from a ChaCha stream seeded by the profile.
pub fn generate_synthetic(profile: &SyntheticProfile) -> Result<TelemetrySeries, TelemetryError> {
    profile.validate()?;
    let mut rng = seed::rng_from(profile.seed);
    let mut records = Vec::with_capacity(profile.duration_minutes);
    for t in 0..profile.duration_minutes {
        let mut values = [0.0; SensorId::COUNT];
        for sensor in SensorId::ALL {
            let p = profile.sensors.get(sensor);
            let z: f64 = StandardNormal.sample(&mut rng);
            let phase = 2.0 * std::f64::consts::PI * t as f64 / p.period;
            let mult = profile
                .faults
                .iter()
                .filter(|f| f.sensors.contains(&sensor))
                .map(|f| f.multiplier_at(t))
                .fold(1.0, f64::max);
            values[sensor.index()] = mult * (p.baseline + p.amplitude * phase.sin() + p.noise_std * z);
        }
        records.push(TelemetryRecord {
            timestamp: profile.start.plus_minutes(t as i64),
            values,
        });
    }
    TelemetrySeries::new(records)
}
