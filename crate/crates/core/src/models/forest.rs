//! Random forest: bootstrap-resampled Gini trees, majority vote.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{train_tree, Node, Tree, TreeConfig, TreeTarget};
use super::{check_len, check_trainable, Matrix, ModelError, Prediction};
use crate::features::LabeledDataset;
use crate::{par, seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    #[serde(default = "d_trees")]
    pub n_trees: usize,
    #[serde(default = "d_depth")]
    pub max_depth: usize,
    #[serde(default = "d_leaf")]
    pub min_samples_leaf: usize,
    /// Features drawn per node; `None` = ceil(sqrt(d)).
    #[serde(default)]
    pub max_features: Option<usize>,
    #[serde(default = "d_true")]
    pub bootstrap: bool,
    #[serde(default)]
    pub seed: u64,
}

fn d_trees() -> usize {
    200
}
fn d_depth() -> usize {
    12
}
fn d_leaf() -> usize {
    2
}
fn d_true() -> bool {
    true
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: d_trees(),
            max_depth: d_depth(),
            min_samples_leaf: d_leaf(),
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

pub fn train_forest(data: &LabeledDataset, config: &ForestConfig) -> Result<ForestModel, ModelError> {
    check_trainable(data)?;
    if config.n_trees < 1 {
        return Err(ModelError::InvalidConfig("n_trees must be >= 1".into()));
    }
    let x = Matrix::from_view(data);
    let y: Vec<bool> = data.samples.iter().map(|s| s.label.is_positive()).collect();
    let d = x.cols();
    let mtry = config
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let tree_cfg = TreeConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        max_features: Some(mtry),
        lambda: 0.0,
        gamma: 0.0,
    };
    let n = x.rows();
    let trees = par::map_indexed(config.n_trees, |t| {
        let mut rng = seed::item_rng(config.seed, t as u64);
        let rows: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        train_tree(&x, &rows, TreeTarget::Classification(&y), &tree_cfg, &mut rng)
    });
    Ok(ForestModel {
        config: *config,
        feature_names: data.feature_names.clone(),
        trees: trees.into_iter().collect::<Result<_, _>>()?,
    })
}

impl ForestModel {
    /// Score = fraction of trees voting positive (a tree votes positive when
    /// its leaf's positive fraction is at least 0.5).
    pub fn predict(&self, features: &[f64]) -> Result<Prediction, ModelError> {
        check_len(self.feature_names.len(), features)?;
        let votes = self.trees.iter().filter(|t| t.predict(features) >= 0.5).count();
        Ok(Prediction::from_score(votes as f64 / self.trees.len() as f64))
    }
}

/// Mean decrease in impurity, normalised per tree, averaged over trees and
/// renormalised to sum to 1. Sorted by importance, descending; ties keep
/// feature order.
pub fn feature_importance(model: &ForestModel) -> Vec<(String, f64)> {
    let d = model.feature_names.len();
    let mut total = vec![0.0; d];
    for tree in &model.trees {
        let mut per = vec![0.0; d];
        for node in tree.nodes() {
            if let Node::Split { feature, gain, .. } = node {
                per[*feature] += gain;
            }
        }
        let sum: f64 = per.iter().sum();
        if sum > 0.0 {
            for (acc, v) in total.iter_mut().zip(&per) {
                *acc += v / sum;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    }
    let mut ranked: Vec<(String, f64)> = model.feature_names.iter().cloned().zip(total).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}
