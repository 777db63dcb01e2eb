//! Binary decision trees with exact greedy splits.
//!
//! Two training modes share the builder:
//!
//! * classification: maximise the Gini impurity decrease over a random
//!   feature subset per node (random-forest members);
//! * gradient: second-order boosting with per-sample gradient `g` and
//!   hessian `h`, gain `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ` and
//!   leaf weight `−G/(H+λ)`.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values; a row goes left when `x <= threshold`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Matrix, ModelError};
use crate::{par, seed::Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease (classification) or loss reduction (gradient)
        /// weighted by the node's share of the tree's training rows.
        gain: f64,
        n_samples: usize,
    },
    Leaf {
        /// Positive-class fraction (classification) or leaf weight (gradient).
        value: f64,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FlatTree", try_from = "FlatTree")]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf(value: f64, n_samples: usize) -> Tree {
        Tree { nodes: vec![Node::Leaf { value, n_samples }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Column-wise node arrays used for serialization; `feature == -1` marks a
/// leaf, whose value sits in `value`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatTree {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    value: Vec<f64>,
    gain: Vec<f64>,
    n_samples: Vec<u64>,
}

impl From<Tree> for FlatTree {
    fn from(t: Tree) -> Self {
        let n = t.nodes.len();
        let mut f = FlatTree {
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
            gain: Vec::with_capacity(n),
            n_samples: Vec::with_capacity(n),
        };
        for node in t.nodes {
            match node {
                Node::Split { feature, threshold, left, right, gain, n_samples } => {
                    f.feature.push(feature as i64);
                    f.threshold.push(threshold);
                    f.left.push(left as u32);
                    f.right.push(right as u32);
                    f.value.push(0.0);
                    f.gain.push(gain);
                    f.n_samples.push(n_samples as u64);
                }
                Node::Leaf { value, n_samples } => {
                    f.feature.push(-1);
                    f.threshold.push(0.0);
                    f.left.push(0);
                    f.right.push(0);
                    f.value.push(value);
                    f.gain.push(0.0);
                    f.n_samples.push(n_samples as u64);
                }
            }
        }
        f
    }
}

impl TryFrom<FlatTree> for Tree {
    type Error = String;

    fn try_from(f: FlatTree) -> Result<Self, Self::Error> {
        let n = f.feature.len();
        let lens = [f.threshold.len(), f.left.len(), f.right.len(), f.value.len(), f.gain.len(), f.n_samples.len()];
        if n == 0 || lens.iter().any(|l| *l != n) {
            return Err("tree arrays are empty or of unequal length".into());
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            if f.feature[i] < 0 {
                nodes.push(Node::Leaf { value: f.value[i], n_samples: f.n_samples[i] as usize });
            } else {
                let (left, right) = (f.left[i] as usize, f.right[i] as usize);
                if left <= i || right <= i || left >= n || right >= n {
                    return Err(format!("node {i} has invalid children"));
                }
                nodes.push(Node::Split {
                    feature: f.feature[i] as usize,
                    threshold: f.threshold[i],
                    left,
                    right,
                    gain: f.gain[i],
                    n_samples: f.n_samples[i] as usize,
                });
            }
        }
        Ok(Tree { nodes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per node (classification mode); `None` = all.
    pub max_features: Option<usize>,
    /// L2 penalty on leaf weights (gradient mode).
    pub lambda: f64,
    /// Per-leaf penalty subtracted from split gain (gradient mode).
    pub gamma: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 12, min_samples_leaf: 1, max_features: None, lambda: 1.0, gamma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TreeTarget<'a> {
    /// Indexed by matrix row; `true` = positive.
    Classification(&'a [bool]),
    Gradient { grad: &'a [f64], hess: &'a [f64] },
}

/// Trains a tree on `rows` of `x` (duplicates allowed, e.g. bootstrap draws).
pub fn train_tree(
    x: &Matrix,
    rows: &[usize],
    target: TreeTarget<'_>,
    config: &TreeConfig,
    rng: &mut Rng,
) -> Result<Tree, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if config.min_samples_leaf < 1 {
        return Err(ModelError::InvalidConfig("min_samples_leaf must be >= 1".into()));
    }
    if !(config.lambda >= 0.0 && config.gamma >= 0.0) {
        return Err(ModelError::InvalidConfig("lambda and gamma must be >= 0".into()));
    }
    let mut builder = Builder {
        x,
        target,
        config,
        total: rows.len() as f64,
        nodes: Vec::new(),
        features: (0..x.cols()).collect(),
    };
    builder.grow(rows.to_vec(), 0, rng);
    Ok(Tree { nodes: builder.nodes })
}

/// Best split found for one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Gini decrease or boosting gain (after γ), unweighted.
    pub score: f64,
    pub n_left: usize,
}

struct Builder<'a> {
    x: &'a Matrix,
    target: TreeTarget<'a>,
    config: &'a TreeConfig,
    total: f64,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

/// Rows at which the parallel feature scan pays off.
const PARALLEL_NODE_ROWS: usize = 4096;

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(&rows), n_samples: n });

        if depth >= self.config.max_depth || n < 2 * self.config.min_samples_leaf || self.is_pure(&rows) {
            return id;
        }
        let Some(best) = self.find_split(&rows, rng) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x.get(r, best.feature) <= best.threshold);
        debug_assert_eq!(left_rows.len(), best.n_left);
        let gain = best.score * n as f64 / self.total;
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain,
            n_samples: n,
        };
        id
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        match self.target {
            TreeTarget::Classification(y) => {
                rows.iter().filter(|&&r| y[r]).count() as f64 / rows.len() as f64
            }
            TreeTarget::Gradient { grad, hess } => {
                let g: f64 = rows.iter().map(|&r| grad[r]).sum();
                let h: f64 = rows.iter().map(|&r| hess[r]).sum();
                -g / (h + self.config.lambda)
            }
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        match self.target {
            TreeTarget::Classification(y) => {
                let first = y[rows[0]];
                rows.iter().all(|&r| y[r] == first)
            }
            TreeTarget::Gradient { .. } => false,
        }
    }

    fn find_split(&mut self, rows: &[usize], rng: &mut Rng) -> Option<SplitCandidate> {
        match (self.target, self.config.max_features) {
            (TreeTarget::Classification(_), Some(m)) if m < self.features.len() => {
                // Random order; look at the first `m`, and keep drawing only
                // while no valid split has turned up.
                let d = self.features.len();
                let mut best: Option<SplitCandidate> = None;
                for i in 0..d {
                    let j = rng.gen_range(i..d);
                    self.features.swap(i, j);
                    if i >= m && best.is_some() {
                        break;
                    }
                    if let Some(c) = self.scan_feature(rows, self.features[i]) {
                        if best.is_none_or(|b| c.score > b.score) {
                            best = Some(c);
                        }
                    }
                }
                best
            }
            _ => {
                let feats: Vec<usize> = (0..self.x.cols()).collect();
                let per_feature: Vec<Option<SplitCandidate>> = if rows.len() >= PARALLEL_NODE_ROWS {
                    par::map_slice(&feats, |&f| self.scan_feature(rows, f))
                } else {
                    feats.iter().map(|&f| self.scan_feature(rows, f)).collect()
                };
                per_feature.into_iter().flatten().fold(None, |best, c| match best {
                    Some(b) if b.score >= c.score => Some(b),
                    _ => Some(c),
                })
            }
        }
    }

    fn scan_feature(&self, rows: &[usize], feature: usize) -> Option<SplitCandidate> {
        let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&r| (self.x.get(r, feature), r)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let min_leaf = self.config.min_samples_leaf;
        let mut best: Option<SplitCandidate> = None;
        let mut consider = |i: usize, score: f64, sorted: &[(f64, usize)]| {
            if score > 0.0 && best.is_none_or(|b| score > b.score) {
                best = Some(SplitCandidate {
                    feature,
                    threshold: midpoint(sorted[i].0, sorted[i + 1].0),
                    score,
                    n_left: i + 1,
                });
            }
        };
        match self.target {
            TreeTarget::Classification(y) => {
                let pos_total = rows.iter().filter(|&&r| y[r]).count();
                let mut pos_left = 0usize;
                for i in 0..n - 1 {
                    pos_left += usize::from(y[sorted[i].1]);
                    let n_left = i + 1;
                    if sorted[i].0 == sorted[i + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                        continue;
                    }
                    let score = gini_decrease(n_left, pos_left, n - n_left, pos_total - pos_left);
                    consider(i, score, &sorted);
                }
            }
            TreeTarget::Gradient { grad, hess } => {
                let g_total: f64 = rows.iter().map(|&r| grad[r]).sum();
                let h_total: f64 = rows.iter().map(|&r| hess[r]).sum();
                let lambda = self.config.lambda;
                let parent = g_total * g_total / (h_total + lambda);
                let (mut gl, mut hl) = (0.0, 0.0);
                for i in 0..n - 1 {
                    gl += grad[sorted[i].1];
                    hl += hess[sorted[i].1];
                    let n_left = i + 1;
                    if sorted[i].0 == sorted[i + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                        continue;
                    }
                    let (gr, hr) = (g_total - gl, h_total - hl);
                    let score = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent)
                        - self.config.gamma;
                    consider(i, score, &sorted);
                }
            }
        }
        best
    }
}

/// Threshold between two distinct sorted values that keeps `a` left and
/// `b` right even when the floating midpoint rounds onto `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn gini(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Parent Gini minus the size-weighted child Gini.
pub fn gini_decrease(n_left: usize, pos_left: usize, n_right: usize, pos_right: usize) -> f64 {
    let n = (n_left + n_right) as f64;
    gini(n_left + n_right, pos_left + pos_right)
        - n_left as f64 / n * gini(n_left, pos_left)
        - n_right as f64 / n * gini(n_right, pos_right)
}
