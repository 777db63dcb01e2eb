//! Isolation forest fitted on negative (normal) training rows only.
//!
//! Anomaly score `s(x) = 2^(−E[h(x)] / c(ψ))`, where `h` is the isolation
//! path length and `c(ψ)` the average unsuccessful-search path length of a
//! binary search tree over `ψ` points. A sample is flagged when its score
//! exceeds a threshold calibrated so that the flagged share of training
//! negatives equals the training positive rate.

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_len, ModelError, Prediction, TrainingView};
use crate::labeling::{percentile_sorted, BinaryLabel};
use crate::{par, seed};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolationConfig {
    #[serde(default = "d_trees")]
    pub n_trees: usize,
    #[serde(default = "d_subsample")]
    pub subsample: usize,
    #[serde(default)]
    pub seed: u64,
}

fn d_trees() -> usize {
    100
}
fn d_subsample() -> usize {
    256
}

impl Default for IsolationConfig {
    fn default() -> Self {
        IsolationConfig { n_trees: d_trees(), subsample: d_subsample(), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum INode {
    Split { feature: usize, value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ITree {
    pub nodes: Vec<INode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolationForest {
    pub config: IsolationConfig,
    pub feature_names: Vec<String>,
    pub sample_size: usize,
    pub threshold: f64,
    pub trees: Vec<ITree>,
}

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

impl IsolationForest {
    /// Fits on the negative rows of `view`. Positive rows contribute only
    /// their label (to the positive rate); their features are never read.
    pub fn fit<V: TrainingView + Sync>(
        view: &V,
        feature_names: Vec<String>,
        config: &IsolationConfig,
    ) -> Result<IsolationForest, ModelError> {
        if config.n_trees < 1 || config.subsample < 2 {
            return Err(ModelError::InvalidConfig("isolation forest needs n_trees >= 1, subsample >= 2".into()));
        }
        let n = view.n_rows();
        if n == 0 {
            return Err(ModelError::EmptyInput);
        }
        let negatives: Vec<usize> = (0..n).filter(|&r| view.label(r) == BinaryLabel::Negative).collect();
        if negatives.len() < 2 {
            return Err(ModelError::SingleClassInput);
        }
        let positive_rate = (n - negatives.len()) as f64 / n as f64;
        let psi = config.subsample.min(negatives.len());
        let height_limit = (psi as f64).log2().ceil() as usize;

        let trees = par::map_indexed(config.n_trees, |t| {
            let mut rng = seed::item_rng(config.seed, t as u64);
            let rows: Vec<usize> = sample_indices(&mut rng, negatives.len(), psi)
                .into_iter()
                .map(|i| negatives[i])
                .collect();
            let mut nodes = Vec::new();
            grow(view, rows, 0, height_limit, &mut nodes, &mut rng);
            ITree { nodes }
        });
        let mut model = IsolationForest {
            config: *config,
            feature_names,
            sample_size: psi,
            threshold: 1.0,
            trees,
        };
        let mut scores: Vec<f64> = negatives.iter().map(|&r| model.score(view.features(r))).collect();
        scores.sort_by(f64::total_cmp);
        model.threshold = percentile_sorted(&scores, 1.0 - positive_rate);
        Ok(model)
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mean_path: f64 =
            self.trees.iter().map(|t| path_length(t, x)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean_path / average_path_length(self.sample_size))
    }

    pub fn predict(&self, features: &[f64]) -> Result<Prediction, ModelError> {
        check_len(self.feature_names.len(), features)?;
        let score = self.score(features);
        Ok(Prediction { label: BinaryLabel::from_bool(score > self.threshold), score })
    }
}

fn grow<V: TrainingView>(
    view: &V,
    rows: Vec<usize>,
    depth: usize,
    limit: usize,
    nodes: &mut Vec<INode>,
    rng: &mut seed::Rng,
) -> usize {
    let id = nodes.len();
    nodes.push(INode::Leaf { size: rows.len() });
    if depth >= limit || rows.len() <= 1 {
        return id;
    }
    let d = view.n_features();
    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|f| {
            rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = view.features(r)[f];
                (lo.min(v), hi.max(v))
            })
        })
        .collect();
    let splittable: Vec<usize> = (0..d).filter(|&f| ranges[f].0 < ranges[f].1).collect();
    if splittable.is_empty() {
        return id;
    }
    let feature = splittable[rng.gen_range(0..splittable.len())];
    let (lo, hi) = ranges[feature];
    let value = rng.gen_range(lo..hi);
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&row| view.features(row)[feature] < value);
    let left = grow(view, l, depth + 1, limit, nodes, rng);
    let right = grow(view, r, depth + 1, limit, nodes, rng);
    nodes[id] = INode::Split { feature, value, left, right };
    id
}

fn path_length(tree: &ITree, x: &[f64]) -> f64 {
    let mut i = 0;
    let mut depth = 0.0;
    loop {
        match tree.nodes[i] {
            INode::Leaf { size } => return depth + average_path_length(size),
            INode::Split { feature, value, left, right } => {
                i = if x[feature] < value { left } else { right };
                depth += 1.0;
            }
        }
    }
}
