//! Reference predictors: threshold rules, persistence, majority class,
//! logistic regression and isolation forest.

use serde::{Deserialize, Serialize};

use super::{IsolationForest, LogisticModel, ModelError, Prediction};
use crate::features::Sample;
use crate::labeling::{binarize, BinaryLabel, ConditionLabel, ThresholdSet};
use crate::telemetry::SensorId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BaselineModel {
    /// Positive iff any sensor's last reading exceeds its fixed limit.
    FixedRule { thresholds: ThresholdSet },
    /// Positive iff any sensor's last reading exceeds its adaptive limit.
    AdaptiveRule { thresholds: ThresholdSet },
    /// The future label equals the current one.
    Persistence,
    /// Always negative (normal).
    Majority,
    LogisticRegression(LogisticModel),
    IsolationForest(IsolationForest),
}

impl BaselineModel {
    pub fn feature_names(&self) -> Option<&[String]> {
        match self {
            BaselineModel::LogisticRegression(m) => Some(&m.feature_names),
            BaselineModel::IsolationForest(m) => Some(&m.feature_names),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineInput<'a> {
    pub features: Option<&'a [f64]>,
    pub last_values: Option<[f64; SensorId::COUNT]>,
    pub current: Option<ConditionLabel>,
}

impl<'a> BaselineInput<'a> {
    pub fn from_sample(sample: &'a Sample) -> Self {
        BaselineInput {
            features: Some(&sample.features),
            last_values: sample.context.map(|c| c.last_values),
            current: sample.context.map(|c| c.current),
        }
    }
}

fn flag(positive: bool) -> Prediction {
    Prediction {
        label: BinaryLabel::from_bool(positive),
        score: if positive { 1.0 } else { 0.0 },
    }
}

pub fn predict_baseline(model: &BaselineModel, input: &BaselineInput<'_>) -> Result<Prediction, ModelError> {
    let last = |name| {
        input.last_values.ok_or(ModelError::MissingInput { model: name, input: "the anchor's raw readings" })
    };
    let features = |name| input.features.ok_or(ModelError::MissingInput { model: name, input: "a feature vector" });
    match model {
        BaselineModel::FixedRule { thresholds } => {
            let v = last("fixed_rule")?;
            Ok(flag(SensorId::ALL.iter().any(|s| v[s.index()] > thresholds.get(*s).fixed)))
        }
        BaselineModel::AdaptiveRule { thresholds } => {
            let v = last("adaptive_rule")?;
            Ok(flag(SensorId::ALL.iter().any(|s| v[s.index()] > thresholds.get(*s).adaptive)))
        }
        BaselineModel::Persistence => {
            let current = input
                .current
                .ok_or(ModelError::MissingInput { model: "persistence", input: "the current label" })?;
            Ok(flag(binarize(current).is_positive()))
        }
        BaselineModel::Majority => Ok(flag(false)),
        BaselineModel::LogisticRegression(m) => m.predict(features("logistic_regression")?),
        BaselineModel::IsolationForest(m) => m.predict(features("isolation_forest")?),
    }
}
