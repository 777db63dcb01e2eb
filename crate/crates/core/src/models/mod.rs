//! Classifiers behind one prediction contract.
//!
//! Every model maps a sample to a [`Prediction`]: a positive-class score in
//! `[0, 1]` and a label, positive when the score is at least 0.5 (ties go to
//! the positive class since a missed warning costs more than a false alarm).

pub mod baseline;
pub mod boosting;
pub mod forest;
pub mod isolation;
pub mod logistic;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{LabeledDataset, Sample, SplitTag};
use crate::labeling::BinaryLabel;

pub use baseline::{predict_baseline, BaselineInput, BaselineModel};
pub use boosting::{train_boosted, BoostedConfig, BoostedModel};
pub use forest::{feature_importance, train_forest, ForestConfig, ForestModel};
pub use isolation::{IsolationConfig, IsolationForest};
pub use logistic::{LogisticConfig, LogisticModel};
pub use tree::{train_tree, Node, Tree, TreeConfig, TreeTarget};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("no training samples")]
    EmptyInput,
    #[error("training data contains a single class")]
    SingleClassInput,
    #[error("feature order mismatch: model expects {expected:?}, got {got:?}")]
    FeatureOrderMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("training loss rose for 3 consecutive rounds (last at round {round})")]
    DivergenceDetected { round: usize },
    #[error("{model} needs {input}")]
    MissingInput { model: &'static str, input: &'static str },
    #[error("refusing to train on a {0:?} split")]
    WrongSplit(SplitTag),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: BinaryLabel,
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        Prediction { label: BinaryLabel::from_bool(score >= 0.5), score }
    }
}

/// Read access to training rows. Implemented by datasets; tests wrap it to
/// count which rows a trainer touches.
pub trait TrainingView {
    fn n_rows(&self) -> usize;
    fn n_features(&self) -> usize;
    fn label(&self, row: usize) -> BinaryLabel;
    fn features(&self, row: usize) -> &[f64];
}

impl TrainingView for LabeledDataset {
    fn n_rows(&self) -> usize {
        self.samples.len()
    }
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }
    fn label(&self, row: usize) -> BinaryLabel {
        self.samples[row].label
    }
    fn features(&self, row: usize) -> &[f64] {
        &self.samples[row].features
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix::new(rows.len(), cols, data)
    }

    pub fn from_view(view: &impl TrainingView) -> Self {
        let (rows, cols) = (view.n_rows(), view.n_features());
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend_from_slice(view.features(r));
        }
        Matrix::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

pub(crate) fn check_trainable(data: &LabeledDataset) -> Result<(), ModelError> {
    if data.split == SplitTag::Test {
        return Err(ModelError::WrongSplit(SplitTag::Test));
    }
    if data.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let pos = data.count(BinaryLabel::Positive);
    if pos == 0 || pos == data.len() {
        return Err(ModelError::SingleClassInput);
    }
    Ok(())
}

pub(crate) fn check_len(expected: usize, features: &[f64]) -> Result<(), ModelError> {
    if features.len() != expected {
        return Err(ModelError::FeatureCount { expected, got: features.len() });
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Model families run in the grid, in canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    Boosted,
    FixedRule,
    AdaptiveRule,
    Persistence,
    Majority,
    LogisticRegression,
    IsolationForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::RandomForest,
        ModelKind::Boosted,
        ModelKind::FixedRule,
        ModelKind::AdaptiveRule,
        ModelKind::Persistence,
        ModelKind::Majority,
        ModelKind::LogisticRegression,
        ModelKind::IsolationForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "random_forest",
            ModelKind::Boosted => "boosted",
            ModelKind::FixedRule => "fixed_rule",
            ModelKind::AdaptiveRule => "adaptive_rule",
            ModelKind::Persistence => "persistence",
            ModelKind::Majority => "majority",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::IsolationForest => "isolation_forest",
        }
    }

    pub fn is_baseline(self) -> bool {
        !matches!(self, ModelKind::RandomForest | ModelKind::Boosted)
    }

    /// Whether the model trains on the SMOTE-balanced split.
    pub fn uses_balanced_training(self) -> bool {
        matches!(
            self,
            ModelKind::RandomForest | ModelKind::Boosted | ModelKind::LogisticRegression
        )
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrainedModel {
    Forest(ForestModel),
    Boosted(BoostedModel),
    Baseline(BaselineModel),
}

impl TrainedModel {
    pub fn feature_names(&self) -> Option<&[String]> {
        match self {
            TrainedModel::Forest(m) => Some(&m.feature_names),
            TrainedModel::Boosted(m) => Some(&m.feature_names),
            TrainedModel::Baseline(b) => b.feature_names(),
        }
    }

    pub fn check_features(&self, names: &[String]) -> Result<(), ModelError> {
        match self.feature_names() {
            Some(expected) if expected != names => Err(ModelError::FeatureOrderMismatch {
                expected: expected.to_vec(),
                got: names.to_vec(),
            }),
            _ => Ok(()),
        }
    }

    pub fn predict_sample(&self, sample: &Sample) -> Result<Prediction, ModelError> {
        match self {
            TrainedModel::Forest(m) => m.predict(&sample.features),
            TrainedModel::Boosted(m) => m.predict(&sample.features),
            TrainedModel::Baseline(b) => predict_baseline(b, &BaselineInput::from_sample(sample)),
        }
    }

    /// Predicts every sample of a dataset after checking feature order.
    pub fn predict_dataset(&self, data: &LabeledDataset) -> Result<Vec<Prediction>, ModelError> {
        self.check_features(&data.feature_names)?;
        data.samples.iter().map(|s| self.predict_sample(s)).collect()
    }
}

pub const MODEL_FORMAT: &str = "pumpcast-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    model: TrainedModel,
}

/// Versioned JSON model file. Floats round-trip bit-exactly.
pub fn model_to_json(model: &TrainedModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    serde_json::to_string_pretty(&file).expect("models serialize")
}

pub fn model_from_json(text: &str) -> Result<TrainedModel, ModelError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Format(format!(
            "unsupported model file {} v{}",
            file.format, file.version
        )));
    }
    Ok(file.model)
}
