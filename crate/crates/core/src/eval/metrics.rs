//! Confusion counts and threshold/ranking metrics. Positive = EarlyWarning.

use serde::{Deserialize, Serialize};

use super::bootstrap::Interval;
use super::{check_lengths, EvalError};
use crate::labeling::BinaryLabel;
use crate::models::Prediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn from_labels(predicted: &[BinaryLabel], truth: &[BinaryLabel]) -> Result<Self, EvalError> {
        check_lengths(predicted.len(), truth.len())?;
        let mut cm = ConfusionMatrix::default();
        for (p, t) in predicted.iter().zip(truth) {
            cm.add(*p, *t, 1);
        }
        Ok(cm)
    }

    pub(crate) fn add(&mut self, predicted: BinaryLabel, truth: BinaryLabel, weight: u64) {
        match (predicted.is_positive(), truth.is_positive()) {
            (true, true) => self.tp += weight,
            (true, false) => self.fp += weight,
            (false, true) => self.fn_ += weight,
            (false, false) => self.tn += weight,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Recall of the negative (Normal) class.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// False alarm rate, `FP / (FP + TN)`.
    pub fn far(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `2TP / (2TP + FP + FN)`; equals the harmonic mean of precision and
    /// recall whenever both are defined and nonzero.
    pub fn f1(&self) -> Option<f64> {
        if self.tp + self.fn_ == 0 || self.tp + self.fp == 0 {
            return None;
        }
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    Precision,
    F1,
    Far,
    Auroc,
    Specificity,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Recall,
        Metric::Precision,
        Metric::F1,
        Metric::Far,
        Metric::Auroc,
        Metric::Specificity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::F1 => "f1",
            Metric::Far => "far",
            Metric::Auroc => "auroc",
            Metric::Specificity => "specificity",
        }
    }

    pub(crate) fn from_parts(self, cm: &ConfusionMatrix, auroc: Option<f64>) -> Option<f64> {
        match self {
            Metric::Recall => cm.recall(),
            Metric::Precision => cm.precision(),
            Metric::F1 => cm.f1(),
            Metric::Far => cm.far(),
            Metric::Auroc => auroc,
            Metric::Specificity => cm.specificity(),
        }
    }
}

/// A point estimate (`None` when its denominator is zero) and, once
/// bootstrapped, its interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: Option<f64>,
    pub ci: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub recall: MetricValue,
    pub precision: MetricValue,
    pub f1: MetricValue,
    pub far: MetricValue,
    pub auroc: MetricValue,
    pub specificity: MetricValue,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> &MetricValue {
        match metric {
            Metric::Recall => &self.recall,
            Metric::Precision => &self.precision,
            Metric::F1 => &self.f1,
            Metric::Far => &self.far,
            Metric::Auroc => &self.auroc,
            Metric::Specificity => &self.specificity,
        }
    }

    pub(crate) fn get_mut(&mut self, metric: Metric) -> &mut MetricValue {
        match metric {
            Metric::Recall => &mut self.recall,
            Metric::Precision => &mut self.precision,
            Metric::F1 => &mut self.f1,
            Metric::Far => &mut self.far,
            Metric::Auroc => &mut self.auroc,
            Metric::Specificity => &mut self.specificity,
        }
    }
}

/// Point metrics without intervals.
pub fn compute_metrics(predictions: &[Prediction], truth: &[BinaryLabel]) -> Result<MetricReport, EvalError> {
    check_lengths(predictions.len(), truth.len())?;
    if truth.is_empty() {
        return Err(EvalError::TooFewSamples { what: "metrics", n: 0, min: 1 });
    }
    let labels: Vec<BinaryLabel> = predictions.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let cm = ConfusionMatrix::from_labels(&labels, truth)?;
    let au = auroc(&scores, truth)?;
    let point = |m: Metric| MetricValue { value: m.from_parts(&cm, au), ci: None };
    Ok(MetricReport {
        n: truth.len(),
        confusion: cm,
        recall: point(Metric::Recall),
        precision: point(Metric::Precision),
        f1: point(Metric::F1),
        far: point(Metric::Far),
        auroc: point(Metric::Auroc),
        specificity: point(Metric::Specificity),
    })
}

/// Samples sorted by score with tie groups, reusable across reweightings.
pub(crate) struct Ranking {
    order: Vec<usize>,
    /// End offsets (exclusive) of each tie group within `order`.
    group_ends: Vec<usize>,
}

impl Ranking {
    pub(crate) fn new(scores: &[f64]) -> Ranking {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut group_ends = Vec::new();
        for i in 1..=order.len() {
            if i == order.len() || scores[order[i]] != scores[order[i - 1]] {
                group_ends.push(i);
            }
        }
        Ranking { order, group_ends }
    }

    /// AUROC with integer sample weights (bootstrap multiplicities).
    ///
    /// Twice the Mann-Whitney U is accumulated exactly in integers: each
    /// positive scores 2 per lower-ranked negative and 1 per tied negative.
    pub(crate) fn weighted_auroc(&self, truth: &[BinaryLabel], weight: impl Fn(usize) -> u64) -> Option<f64> {
        let (mut neg_below, mut pos_total, mut twice_u) = (0u64, 0u64, 0u128);
        let mut start = 0;
        for &end in &self.group_ends {
            let (mut pos, mut neg) = (0u64, 0u64);
            for &i in &self.order[start..end] {
                let w = weight(i);
                if truth[i].is_positive() {
                    pos += w;
                } else {
                    neg += w;
                }
            }
            twice_u += pos as u128 * (2 * neg_below + neg) as u128;
            neg_below += neg;
            pos_total += pos;
            start = end;
        }
        let pairs = pos_total as u128 * neg_below as u128;
        (pairs > 0).then(|| (twice_u as f64 / 2.0) / pairs as f64)
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` when either class is absent.
pub fn auroc(scores: &[f64], truth: &[BinaryLabel]) -> Result<Option<f64>, EvalError> {
    check_lengths(scores.len(), truth.len())?;
    Ok(Ranking::new(scores).weighted_auroc(truth, |_| 1))
}
