//! Second-order gradient boosting with logistic loss.
//!
//! Each round computes `g = p − y` and `h = p(1 − p)` at the current margin,
//! fits a gradient-mode tree, and adds `η · tree` to the margin. The
//! ensemble starts from the log-odds of the training positive rate.

use serde::{Deserialize, Serialize};

use super::tree::{train_tree, Tree, TreeConfig, TreeTarget};
use super::{check_len, check_trainable, sigmoid, Matrix, ModelError, Prediction};
use crate::features::LabeledDataset;
use crate::seed;

/// Per-round loss increase tolerated as numerical noise.
pub const LOSS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostedConfig {
    #[serde(default = "d_eta")]
    pub learning_rate: f64,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_depth")]
    pub max_depth: usize,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_leaf")]
    pub min_samples_leaf: usize,
}

fn d_eta() -> f64 {
    0.1
}
fn d_rounds() -> usize {
    200
}
fn d_depth() -> usize {
    4
}
fn d_lambda() -> f64 {
    1.0
}
fn d_leaf() -> usize {
    1
}

impl Default for BoostedConfig {
    fn default() -> Self {
        BoostedConfig {
            learning_rate: d_eta(),
            rounds: d_rounds(),
            max_depth: d_depth(),
            gamma: 0.0,
            lambda: d_lambda(),
            min_samples_leaf: d_leaf(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostedModel {
    pub config: BoostedConfig,
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Mean training logistic loss before round 1 and after every round.
    pub loss_history: Vec<f64>,
}

impl BoostedModel {
    pub fn margin(&self, features: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(features)).sum();
        self.base_score + self.config.learning_rate * sum
    }

    pub fn predict(&self, features: &[f64]) -> Result<Prediction, ModelError> {
        check_len(self.feature_names.len(), features)?;
        Ok(Prediction::from_score(sigmoid(self.margin(features))))
    }
}

/// `log(1 + e^m) − y·m`, computed without overflow.
fn logistic_loss(margin: f64, y: f64) -> f64 {
    let softplus = if margin > 0.0 {
        margin + (-margin).exp().ln_1p()
    } else {
        margin.exp().ln_1p()
    };
    softplus - y * margin
}

fn mean_loss(margins: &[f64], y: &[f64]) -> f64 {
    margins.iter().zip(y).map(|(m, t)| logistic_loss(*m, *t)).sum::<f64>() / y.len() as f64
}

pub fn train_boosted(data: &LabeledDataset, config: &BoostedConfig) -> Result<BoostedModel, ModelError> {
    check_trainable(data)?;
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(ModelError::InvalidConfig("learning_rate must be > 0".into()));
    }
    let x = Matrix::from_view(data);
    let n = x.rows();
    let y: Vec<f64> = data.samples.iter().map(|s| f64::from(s.label.as_u8())).collect();
    let rate = y.iter().sum::<f64>() / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();

    let tree_cfg = TreeConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        max_features: None,
        lambda: config.lambda,
        gamma: config.gamma,
    };
    let rows: Vec<usize> = (0..n).collect();
    let mut margins = vec![base_score; n];
    let mut loss_history = vec![mean_loss(&margins, &y)];
    let mut trees = Vec::with_capacity(config.rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    // Gradient trees use every feature, so the stream is never drawn from.
    let mut rng = seed::rng_from(0);
    let mut rising = 0;
    for round in 1..=config.rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let tree = train_tree(&x, &rows, TreeTarget::Gradient { grad: &grad, hess: &hess }, &tree_cfg, &mut rng)?;
        for (i, m) in margins.iter_mut().enumerate() {
            *m += config.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
        let loss = mean_loss(&margins, &y);
        if loss > loss_history[loss_history.len() - 1] + LOSS_TOLERANCE {
            rising += 1;
            if rising >= 3 {
                return Err(ModelError::DivergenceDetected { round });
            }
        } else {
            rising = 0;
        }
        loss_history.push(loss);
    }
    Ok(BoostedModel {
        config: *config,
        feature_names: data.feature_names.clone(),
        base_score,
        trees,
        loss_history,
    })
}
