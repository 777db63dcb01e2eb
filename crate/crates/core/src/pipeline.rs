//! Stage helpers shared by the experiment runner and the command line:
//! load, label, window, split, balance, train, predict.

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::balance::{smote, BalanceError, SmoteConfig, SynthesisRecord};
use crate::config::{ConfigError, DataConfig, ModelsConfig, PercentileScope, PipelineConfig, SourceKind, ThresholdMode};
use crate::eval::split::train_size;
use crate::eval::{split_chronological, EvalError, SplitConfig};
use crate::features::{build_dataset_with, DatasetOptions, FeatureError, LabeledDataset, WindowConfig};
use crate::labeling::{
    compute_adaptive_thresholds, label_series_with, ClampWarning, LabelScheme, LabeledSeries, LabelingError,
    ThresholdSet, DEFAULT_FIXED,
};
use crate::models::{
    train_boosted, train_forest, BaselineModel, IsolationForest, LogisticModel, ModelError, ModelKind, Prediction,
    TrainedModel,
};
use crate::telemetry::{generate_synthetic, ingest_csv, repair_gaps, Span, TelemetryError, TelemetrySeries};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

/// Coarse error class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Config,
    Data,
    Runtime,
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Config(_) => ErrorClass::Config,
            PipelineError::Telemetry(_) | PipelineError::Labeling(_) | PipelineError::Features(_) => ErrorClass::Data,
            PipelineError::Eval(EvalError::TooFewSamples { .. } | EvalError::NotChronological(_)) => ErrorClass::Data,
            PipelineError::Model(ModelError::Format(_)) => ErrorClass::Data,
            _ => ErrorClass::Runtime,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> PipelineError {
        PipelineError::Io { path: path.into(), source }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DataReport {
    pub records: usize,
    pub rows_read: usize,
    pub dropped_invalid: usize,
    pub duplicates_collapsed: usize,
    pub gap_minutes_filled: usize,
    pub discarded_segments: Vec<Span>,
}

/// Synthesizes or ingests the series, then repairs gaps.
pub fn load_series(data: &DataConfig) -> Result<(TelemetrySeries, DataReport), PipelineError> {
    match data.source {
        SourceKind::Synthetic => {
            let series = generate_synthetic(&data.synthetic)?;
            let report = DataReport { records: series.len(), rows_read: series.len(), ..Default::default() };
            Ok((series, report))
        }
        SourceKind::Csv => {
            let path = data
                .csv_path
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("data.csv_path missing".into()))?;
            let (raw, ingest) = ingest_csv(path)?;
            let (series, repair) = repair_gaps(&raw, data.max_gap);
            Ok((
                series.clone(),
                DataReport {
                    records: series.len(),
                    rows_read: ingest.rows_read,
                    dropped_invalid: ingest.dropped_invalid,
                    duplicates_collapsed: ingest.duplicates_collapsed,
                    gap_minutes_filled: repair.filled,
                    discarded_segments: repair.discarded,
                },
            ))
        }
    }
}

/// Thresholds for the configured mode. Percentile mode keeps the fixed
/// reference limits and estimates adaptive ones from the data.
pub fn resolve_thresholds(
    config: &PipelineConfig,
    series: &TelemetrySeries,
) -> Result<(ThresholdSet, Vec<ClampWarning>), PipelineError> {
    let t = &config.thresholds;
    match t.mode {
        ThresholdMode::Table => Ok((ThresholdSet::table_defaults(), Vec::new())),
        ThresholdMode::Explicit => {
            let set = t
                .values
                .ok_or_else(|| ConfigError::Invalid("thresholds.values missing".into()))?;
            Ok(ThresholdSet::new(set.fixed(), set.adaptive())?)
        }
        ThresholdMode::Percentile => {
            let scope = match t.scope {
                PercentileScope::FullSeries => series.clone(),
                PercentileScope::TrainPrefix => {
                    series.slice(0, train_size(series.len(), config.split.train_fraction))
                }
            };
            let adaptive = compute_adaptive_thresholds(&scope, t.percentile)?;
            Ok(ThresholdSet::new(DEFAULT_FIXED, adaptive)?)
        }
    }
}

pub fn label(series: &TelemetrySeries, thresholds: &ThresholdSet, scheme: LabelScheme) -> LabeledSeries {
    label_series_with(series, thresholds, scheme)
}

/// Windowed dataset cut into train and test.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub all: LabeledDataset,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn prepare_split(
    labeled: &LabeledSeries,
    window: WindowConfig,
    options: &DatasetOptions,
    split: &SplitConfig,
) -> Result<SplitData, PipelineError> {
    let all = build_dataset_with(labeled, window, options)?;
    let (train, test) = split_chronological(&all, split)?;
    Ok(SplitData { all, train, test })
}

#[derive(Debug, Clone)]
pub struct Balanced {
    pub dataset: LabeledDataset,
    pub audit: Vec<SynthesisRecord>,
}

/// SMOTE when configured, otherwise the training split unchanged.
pub fn balance(train: &LabeledDataset, config: Option<&SmoteConfig>) -> Result<Balanced, PipelineError> {
    match config {
        Some(cfg) => {
            let out = smote(train, cfg)?;
            Ok(Balanced { dataset: out.dataset, audit: out.audit })
        }
        None => Ok(Balanced { dataset: train.clone(), audit: Vec::new() }),
    }
}

/// Trains one model. `balanced` feeds the learners that use oversampled
/// data; `raw_train` feeds the isolation forest.
pub fn train_model(
    kind: ModelKind,
    params: &ModelsConfig,
    seed: u64,
    thresholds: &ThresholdSet,
    raw_train: &LabeledDataset,
    balanced: &LabeledDataset,
) -> Result<TrainedModel, PipelineError> {
    let model = match kind {
        ModelKind::RandomForest => {
            let cfg = crate::models::ForestConfig { seed, ..params.random_forest };
            TrainedModel::Forest(train_forest(balanced, &cfg)?)
        }
        ModelKind::Boosted => TrainedModel::Boosted(train_boosted(balanced, &params.boosted)?),
        ModelKind::FixedRule => TrainedModel::Baseline(BaselineModel::FixedRule { thresholds: *thresholds }),
        ModelKind::AdaptiveRule => TrainedModel::Baseline(BaselineModel::AdaptiveRule { thresholds: *thresholds }),
        ModelKind::Persistence => TrainedModel::Baseline(BaselineModel::Persistence),
        ModelKind::Majority => TrainedModel::Baseline(BaselineModel::Majority),
        ModelKind::LogisticRegression => TrainedModel::Baseline(BaselineModel::LogisticRegression(
            LogisticModel::fit(balanced, &params.logistic_regression)?,
        )),
        ModelKind::IsolationForest => {
            if raw_train.split != crate::features::SplitTag::Train {
                return Err(ModelError::WrongSplit(raw_train.split).into());
            }
            let cfg = crate::models::IsolationConfig { seed, ..params.isolation_forest };
            TrainedModel::Baseline(BaselineModel::IsolationForest(IsolationForest::fit(
                raw_train,
                raw_train.feature_names.clone(),
                &cfg,
            )?))
        }
    };
    Ok(model)
}

pub fn predict(model: &TrainedModel, data: &LabeledDataset) -> Result<Vec<Prediction>, PipelineError> {
    Ok(model.predict_dataset(data)?)
}
