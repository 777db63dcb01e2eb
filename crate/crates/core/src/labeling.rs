//! Dual-threshold condition labeling.
//!
//! A reading above its fixed engineering limit is a critical alert; above
//! the adaptive (percentile) limit but not the fixed one is an early
//! warning; everything else is normal. A timestep takes the most severe
//! label among its five sensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{SensorId, TelemetrySeries};

#[derive(Debug, Error, PartialEq)]
pub enum LabelingError {
    #[error("series has {len} records; at least {min} are needed")]
    SeriesTooShort { len: usize, min: usize },
    #[error("percentile must lie in (0, 1), got {0}")]
    InvalidPercentile(f64),
    #[error("thresholds missing for sensor(s): {0}")]
    IncompleteThresholds(String),
    #[error("threshold for {sensor} is not finite")]
    NonFinite { sensor: SensorId },
}

/// Minimum series length for percentile estimation.
pub const MIN_PERCENTILE_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionLabel {
    Normal,
    EarlyWarning,
    CriticalAlert,
}

impl ConditionLabel {
    pub fn name(self) -> &'static str {
        match self {
            ConditionLabel::Normal => "Normal",
            ConditionLabel::EarlyWarning => "EarlyWarning",
            ConditionLabel::CriticalAlert => "CriticalAlert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl BinaryLabel {
    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Forecasting target: early warnings and critical alerts both count as
/// the positive class.
pub fn binarize(label: ConditionLabel) -> BinaryLabel {
    BinaryLabel::from_bool(label != ConditionLabel::Normal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorThresholds {
    pub fixed: f64,
    pub adaptive: f64,
}

/// Fixed and adaptive limits for every sensor, with `adaptive <= fixed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSet {
    limits: [SensorThresholds; SensorId::COUNT],
}

/// An adaptive limit that exceeded its fixed limit and was clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClampWarning {
    pub sensor: SensorId,
    pub computed_adaptive: f64,
    pub fixed: f64,
}

/// Table defaults: fixed engineering limits and the reference 95th
/// percentile limits for the monitored pump.
pub const DEFAULT_FIXED: [f64; 5] = [5.00, 80.00, 2800.00, 6.00, 240.00];
pub const DEFAULT_ADAPTIVE: [f64; 5] = [1.65, 55.23, 2668.05, 4.77, 231.89];

impl ThresholdSet {
    /// Builds a set, clamping any adaptive limit above its fixed limit down
    /// to the fixed limit.
    pub fn new(
        fixed: [f64; SensorId::COUNT],
        adaptive: [f64; SensorId::COUNT],
    ) -> Result<(ThresholdSet, Vec<ClampWarning>), LabelingError> {
        let mut warnings = Vec::new();
        let mut limits = [SensorThresholds { fixed: 0.0, adaptive: 0.0 }; SensorId::COUNT];
        for sensor in SensorId::ALL {
            let i = sensor.index();
            if !fixed[i].is_finite() || !adaptive[i].is_finite() {
                return Err(LabelingError::NonFinite { sensor });
            }
            let mut a = adaptive[i];
            if a > fixed[i] {
                warnings.push(ClampWarning { sensor, computed_adaptive: a, fixed: fixed[i] });
                a = fixed[i];
            }
            limits[i] = SensorThresholds { fixed: fixed[i], adaptive: a };
        }
        Ok((ThresholdSet { limits }, warnings))
    }

    pub fn table_defaults() -> ThresholdSet {
        ThresholdSet::new(DEFAULT_FIXED, DEFAULT_ADAPTIVE)
            .expect("table defaults are finite")
            .0
    }

    pub fn get(&self, sensor: SensorId) -> SensorThresholds {
        self.limits[sensor.index()]
    }

    pub fn fixed(&self) -> [f64; SensorId::COUNT] {
        self.limits.map(|l| l.fixed)
    }

    pub fn adaptive(&self) -> [f64; SensorId::COUNT] {
        self.limits.map(|l| l.adaptive)
    }

    pub fn to_map(&self) -> BTreeMap<SensorId, SensorThresholds> {
        SensorId::ALL.iter().map(|s| (*s, self.get(*s))).collect()
    }

    pub fn from_map(
        map: &BTreeMap<SensorId, SensorThresholds>,
    ) -> Result<(ThresholdSet, Vec<ClampWarning>), LabelingError> {
        let missing: Vec<&str> = SensorId::ALL
            .iter()
            .filter(|s| !map.contains_key(s))
            .map(|s| s.name())
            .collect();
        if !missing.is_empty() {
            return Err(LabelingError::IncompleteThresholds(missing.join(",")));
        }
        let fixed = SensorId::ALL.map(|s| map[&s].fixed);
        let adaptive = SensorId::ALL.map(|s| map[&s].adaptive);
        ThresholdSet::new(fixed, adaptive)
    }
}

impl Serialize for ThresholdSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ThresholdSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<SensorId, SensorThresholds>::deserialize(d)?;
        ThresholdSet::from_map(&map)
            .map(|(t, _)| t)
            .map_err(serde::de::Error::custom)
    }
}

/// Empirical percentile with linear interpolation between order statistics
/// at rank `p * (n - 1)`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-sensor adaptive limits from the series' own distribution.
pub fn compute_adaptive_thresholds(
    series: &TelemetrySeries,
    p: f64,
) -> Result<[f64; SensorId::COUNT], LabelingError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(LabelingError::InvalidPercentile(p));
    }
    if series.len() < MIN_PERCENTILE_SAMPLES {
        return Err(LabelingError::SeriesTooShort {
            len: series.len(),
            min: MIN_PERCENTILE_SAMPLES,
        });
    }
    Ok(SensorId::ALL.map(|s| percentile(&series.column(s), p)))
}

pub fn label_value(value: f64, thresholds: &ThresholdSet, sensor: SensorId) -> ConditionLabel {
    let t = thresholds.get(sensor);
    if value > t.fixed {
        ConditionLabel::CriticalAlert
    } else if value > t.adaptive {
        ConditionLabel::EarlyWarning
    } else {
        ConditionLabel::Normal
    }
}

/// Which bands produce labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    /// Fixed and adaptive limits (three bands).
    #[default]
    DualThreshold,
    /// Fixed limits only: critical or normal.
    FixedOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub series: TelemetrySeries,
    pub thresholds: ThresholdSet,
    pub scheme: LabelScheme,
    pub sensor_labels: Vec<[ConditionLabel; SensorId::COUNT]>,
    pub overall: Vec<ConditionLabel>,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.overall.len()
    }

    pub fn is_empty(&self) -> bool {
        self.overall.is_empty()
    }

    pub fn count(&self, label: ConditionLabel) -> usize {
        self.overall.iter().filter(|l| **l == label).count()
    }

    /// CSV with the raw timestamp, one label column per sensor and the
    /// overall label.
    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let mut header = vec!["timestamp".to_string()];
        header.extend(SensorId::ALL.iter().map(|s| format!("{s}_label")));
        header.push("overall".into());
        out.write_record(&header)?;
        for (rec, (per, overall)) in self
            .series
            .records()
            .iter()
            .zip(self.sensor_labels.iter().zip(&self.overall))
        {
            let mut row = vec![rec.timestamp.to_string()];
            row.extend(per.iter().map(|l| l.name().to_string()));
            row.push(overall.name().to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn label_series(series: &TelemetrySeries, thresholds: &ThresholdSet) -> LabeledSeries {
    label_series_with(series, thresholds, LabelScheme::DualThreshold)
}

pub fn label_series_with(
    series: &TelemetrySeries,
    thresholds: &ThresholdSet,
    scheme: LabelScheme,
) -> LabeledSeries {
    let mut sensor_labels = Vec::with_capacity(series.len());
    let mut overall = Vec::with_capacity(series.len());
    for rec in series.records() {
        let per = SensorId::ALL.map(|s| {
            let l = label_value(rec.value(s), thresholds, s);
            match (scheme, l) {
                (LabelScheme::FixedOnly, ConditionLabel::EarlyWarning) => ConditionLabel::Normal,
                _ => l,
            }
        });
        overall.push(per.iter().copied().max().unwrap_or(ConditionLabel::Normal));
        sensor_labels.push(per);
    }
    LabeledSeries {
        series: series.clone(),
        thresholds: *thresholds,
        scheme,
        sensor_labels,
        overall,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{TelemetryRecord, Timestamp};
    use proptest::prelude::*;

    fn series_of(rows: &[[f64; 5]]) -> TelemetrySeries {
        TelemetrySeries::new(
            rows.iter()
                .enumerate()
                .map(|(i, v)| TelemetryRecord { timestamp: Timestamp(i as i64), values: *v })
                .collect(),
        )
        .unwrap()
    }

    const HEALTHY: [f64; 5] = [1.0, 40.0, 2500.0, 4.0, 200.0];

    #[test]
    fn percentile_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        // Oracle: rank 0.95 * 99 = 94.05 sits between 95 and 96.
        let rank: f64 = 0.95 * 99.0;
        let expected = 95.0 + (rank - rank.floor());
        assert!((percentile(&v, 0.95) - expected).abs() < 1e-12);
        assert!((percentile(&v, 0.95) - 95.05).abs() < 1e-9);
    }

    #[test]
    fn percentile_constant() {
        let s = series_of(&vec![HEALTHY; 30]);
        let a = compute_adaptive_thresholds(&s, 0.37).unwrap();
        assert_eq!(a, HEALTHY);
    }

    #[test]
    fn adaptive_errors() {
        let s = series_of(&vec![HEALTHY; 19]);
        assert_eq!(
            compute_adaptive_thresholds(&s, 0.95),
            Err(LabelingError::SeriesTooShort { len: 19, min: 20 })
        );
        let s = series_of(&vec![HEALTHY; 20]);
        assert!(matches!(
            compute_adaptive_thresholds(&s, 1.0),
            Err(LabelingError::InvalidPercentile(_))
        ));
    }

    #[test]
    fn table_thresholds_label_vibration() {
        let t = ThresholdSet::table_defaults();
        assert_eq!(label_value(5.5, &t, SensorId::Vibration), ConditionLabel::CriticalAlert);
        assert_eq!(label_value(3.0, &t, SensorId::Vibration), ConditionLabel::EarlyWarning);
        assert_eq!(label_value(1.65, &t, SensorId::Vibration), ConditionLabel::Normal);
        assert_eq!(label_value(5.0, &t, SensorId::Vibration), ConditionLabel::EarlyWarning);
    }

    #[test]
    fn adaptive_above_fixed_is_clamped() {
        let mut adaptive = DEFAULT_ADAPTIVE;
        adaptive[2] = 2900.0;
        let (t, warn) = ThresholdSet::new(DEFAULT_FIXED, adaptive).unwrap();
        assert_eq!(t.get(SensorId::Flow).adaptive, 2800.0);
        assert_eq!(warn.len(), 1);
        assert_eq!(warn[0].sensor, SensorId::Flow);
        // The middle band is empty now.
        assert_eq!(label_value(2800.0, &t, SensorId::Flow), ConditionLabel::Normal);
        assert_eq!(label_value(2800.1, &t, SensorId::Flow), ConditionLabel::CriticalAlert);
    }

    #[test]
    fn series_overall_is_max() {
        let t = ThresholdSet::table_defaults();
        let mut warn = HEALTHY;
        warn[1] = 60.0;
        let mut both = warn;
        both[3] = 7.0;
        let l = label_series(&series_of(&[HEALTHY, warn, both]), &t);
        assert_eq!(
            l.overall,
            vec![ConditionLabel::Normal, ConditionLabel::EarlyWarning, ConditionLabel::CriticalAlert]
        );
        assert_eq!(l.sensor_labels[2][1], ConditionLabel::EarlyWarning);
    }

    #[test]
    fn fixed_only_scheme_drops_warning_band() {
        let t = ThresholdSet::table_defaults();
        let mut warn = HEALTHY;
        warn[1] = 60.0;
        let mut crit = HEALTHY;
        crit[1] = 85.0;
        let l = label_series_with(&series_of(&[warn, crit]), &t, LabelScheme::FixedOnly);
        assert_eq!(l.overall, vec![ConditionLabel::Normal, ConditionLabel::CriticalAlert]);
    }

    #[test]
    fn binarize_merges_alerts() {
        assert_eq!(binarize(ConditionLabel::Normal), BinaryLabel::Negative);
        assert_eq!(binarize(ConditionLabel::EarlyWarning), BinaryLabel::Positive);
        assert_eq!(binarize(ConditionLabel::CriticalAlert), BinaryLabel::Positive);
    }

    #[test]
    fn threshold_map_requires_all_sensors() {
        let mut m = ThresholdSet::table_defaults().to_map();
        m.remove(&SensorId::Current);
        assert_eq!(
            ThresholdSet::from_map(&m).unwrap_err(),
            LabelingError::IncompleteThresholds("current".into())
        );
        let json = serde_json::to_string(&ThresholdSet::table_defaults()).unwrap();
        let back: ThresholdSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ThresholdSet::table_defaults());
    }

    proptest! {
        #[test]
        fn label_value_is_monotone(a in -10.0f64..10.0, b in -10.0f64..10.0, s in 0usize..5) {
            let t = ThresholdSet::table_defaults();
            let sensor = SensorId::ALL[s];
            let scale = t.get(sensor).fixed / 5.0;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(label_value(lo * scale, &t, sensor) <= label_value(hi * scale, &t, sensor));
        }

        #[test]
        fn overall_dominates_and_attains(rows in prop::collection::vec(prop::array::uniform5(0.0f64..1.3), 1..20)) {
            let t = ThresholdSet::table_defaults();
            let fixed = t.fixed();
            let scaled: Vec<[f64; 5]> = rows
                .iter()
                .map(|r| std::array::from_fn(|i| r[i] * fixed[i]))
                .collect();
            let l = label_series(&series_of(&scaled), &t);
            for (per, overall) in l.sensor_labels.iter().zip(&l.overall) {
                prop_assert!(per.iter().all(|p| p <= overall));
                prop_assert!(per.contains(overall));
            }
        }

        #[test]
        fn percentile_permutation_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 20..60), p in 0.01f64..0.99, seed in any::<u64>()) {
            let a = percentile(&v, p);
            use rand::seq::SliceRandom;
            v.shuffle(&mut crate::seed::rng_from(seed));
            prop_assert_eq!(a, percentile(&v, p));
        }
    }
}
