//! Sliding-window feature extraction.
//!
//! A window of `L` minutes ending at anchor `t` yields five statistics per
//! sensor; the target is the binarized overall label at `t + Δ`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{binarize, BinaryLabel, ConditionLabel, LabeledSeries};
use crate::par;
use crate::telemetry::{SensorId, Timestamp};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("window of {0} values; at least 2 are needed")]
    DegenerateWindow(usize),
    #[error("series of {len} records is shorter than window + horizon = {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    #[error("series is not contiguous at record {0}; repair gaps first")]
    NonContiguous(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Window length `L`, minutes.
    pub window: usize,
    /// Forecast horizon `Δ`, minutes.
    pub horizon: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

impl WindowConfig {
    pub fn new(window: usize, horizon: usize) -> Self {
        WindowConfig { window, horizon, stride: 1 }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.window < 2 {
            return Err(FeatureError::InvalidConfig(format!("window {} < 2", self.window)));
        }
        if self.horizon < 1 {
            return Err(FeatureError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.stride < 1 {
            return Err(FeatureError::InvalidConfig("stride must be >= 1".into()));
        }
        Ok(())
    }

    /// `floor((n - L - Δ) / stride) + 1`, or 0 when the series is too short.
    pub fn sample_count(&self, n: usize) -> usize {
        match n.checked_sub(self.window + self.horizon) {
            Some(rest) => rest / self.stride + 1,
            None => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Mean,
    Std,
    Min,
    Max,
    Trend,
}

impl Stat {
    pub const ALL: [Stat; 5] = [Stat::Mean, Stat::Std, Stat::Min, Stat::Max, Stat::Trend];

    pub fn name(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Std => "std",
            Stat::Min => "min",
            Stat::Max => "max",
            Stat::Trend => "trend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    /// Population standard deviation (divides by `L`).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// OLS slope against the minute index `0..L`.
    pub trend: f64,
}

impl WindowStats {
    pub fn get(&self, stat: Stat) -> f64 {
        match stat {
            Stat::Mean => self.mean,
            Stat::Std => self.std,
            Stat::Min => self.min,
            Stat::Max => self.max,
            Stat::Trend => self.trend,
        }
    }
}

pub fn window_stats(values: &[f64]) -> Result<WindowStats, FeatureError> {
    let n = values.len();
    if n < 2 {
        return Err(FeatureError::DegenerateWindow(n));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if min == max {
        return Ok(WindowStats { mean: min, std: 0.0, min, max, trend: 0.0 });
    }
    let len = n as f64;
    let mean = (values.iter().sum::<f64>() / len).clamp(min, max);
    let center = (len - 1.0) / 2.0;
    let mut ss = 0.0;
    let mut cross = 0.0;
    for (i, v) in values.iter().enumerate() {
        let d = v - mean;
        ss += d * d;
        cross += (i as f64 - center) * d;
    }
    // sum over i of (i - center)^2 = L (L^2 - 1) / 12
    let index_ss = len * (len * len - 1.0) / 12.0;
    Ok(WindowStats {
        mean,
        std: (ss / len).sqrt(),
        min,
        max,
        trend: cross / index_ss,
    })
}

/// Which sensors and statistics make up the feature vector. Order is
/// sensor-major, stat-minor, both in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub sensors: Vec<SensorId>,
    pub stats: Vec<Stat>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec { sensors: SensorId::ALL.to_vec(), stats: Stat::ALL.to_vec() }
    }
}

impl FeatureSpec {
    pub fn new(mut sensors: Vec<SensorId>, mut stats: Vec<Stat>) -> Self {
        sensors.sort();
        sensors.dedup();
        stats.sort();
        stats.dedup();
        FeatureSpec { sensors, stats }
    }

    pub fn len(&self) -> usize {
        self.sensors.len() * self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        self.sensors
            .iter()
            .flat_map(|s| self.stats.iter().map(move |st| format!("{}_{}", s.name(), st.name())))
            .collect()
    }
}

/// What the rule baselines need to know about the anchor minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorContext {
    pub last_values: [f64; SensorId::COUNT],
    pub current: ConditionLabel,
}

/// Parents and interpolation weight of a SMOTE sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    pub parent_a: usize,
    pub parent_b: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: BinaryLabel,
    /// `None` for synthetic samples.
    pub anchor: Option<Timestamp>,
    pub context: Option<AnchorContext>,
    pub origin: Option<SyntheticOrigin>,
}

impl Sample {
    pub fn is_synthetic(&self) -> bool {
        self.origin.is_some()
    }
}

/// Split provenance. Oversampling and training refuse `Test` data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Unsplit,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
    pub window: WindowConfig,
    pub split: SplitTag,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn count(&self, label: BinaryLabel) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn labels(&self) -> Vec<BinaryLabel> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Same samples with a new split tag and contents.
    pub fn with_samples(&self, samples: Vec<Sample>, split: SplitTag) -> LabeledDataset {
        LabeledDataset {
            samples,
            feature_names: self.feature_names.clone(),
            window: self.window,
            split,
        }
    }

    /// CSV: feature columns, `label` (1 = positive), `anchor_ts` (empty for
    /// synthetic samples).
    pub fn to_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let mut header = self.feature_names.clone();
        header.push("label".into());
        header.push("anchor_ts".into());
        out.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
            row.push(s.label.as_u8().to_string());
            row.push(s.anchor.map(|t| t.to_string()).unwrap_or_default());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetOptions {
    #[serde(default)]
    pub features: FeatureSpec,
    /// Drop windows that already contain a non-normal label.
    #[serde(default)]
    pub exclude_abnormal_history: bool,
}

pub fn build_dataset(
    labeled: &LabeledSeries,
    config: WindowConfig,
) -> Result<LabeledDataset, FeatureError> {
    build_dataset_with(labeled, config, &DatasetOptions::default())
}

pub fn build_dataset_with(
    labeled: &LabeledSeries,
    config: WindowConfig,
    options: &DatasetOptions,
) -> Result<LabeledDataset, FeatureError> {
    config.validate()?;
    let records = labeled.series.records();
    let n = records.len();
    let needed = config.window + config.horizon;
    if n < needed {
        return Err(FeatureError::SeriesTooShort { len: n, needed });
    }
    if let Some(i) = (1..n).find(|&i| records[i].timestamp.0 - records[i - 1].timestamp.0 != 1) {
        return Err(FeatureError::NonContiguous(i));
    }

    let columns: Vec<Vec<f64>> = options
        .features
        .sensors
        .iter()
        .map(|s| labeled.series.column(*s))
        .collect();
    let count = config.sample_count(n);
    let first_anchor = config.window - 1;

    let built = par::map_indexed(count, |k| {
        let t = first_anchor + k * config.stride;
        let start = t + 1 - config.window;
        if options.exclude_abnormal_history
            && labeled.overall[start..=t].iter().any(|l| *l != ConditionLabel::Normal)
        {
            return None;
        }
        let mut features = Vec::with_capacity(options.features.len());
        for col in &columns {
            let stats = window_stats(&col[start..=t]).expect("window length >= 2");
            features.extend(options.features.stats.iter().map(|st| stats.get(*st)));
        }
        Some(Sample {
            features,
            label: binarize(labeled.overall[t + config.horizon]),
            anchor: Some(records[t].timestamp),
            context: Some(AnchorContext {
                last_values: records[t].values,
                current: labeled.overall[t],
            }),
            origin: None,
        })
    });

    Ok(LabeledDataset {
        samples: built.into_iter().flatten().collect(),
        feature_names: options.features.names(),
        window: config,
        split: SplitTag::Unsplit,
    })
}
