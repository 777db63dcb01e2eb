//! Percentile bootstrap intervals over resampled (prediction, truth) pairs.
//!
//! Resample `i` draws from its own ChaCha stream seeded by `(seed, i)`, so
//! intervals are identical whatever the thread count. A resample is stored
//! as per-sample multiplicities, which lets every metric (AUROC included)
//! be recomputed in linear time from one score ordering.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ConfusionMatrix, Metric, MetricReport, Ranking};
use super::{check_lengths, EvalError};
use crate::labeling::{percentile_sorted, BinaryLabel};
use crate::models::Prediction;
use crate::{par, seed};

pub const MIN_BOOTSTRAP_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "d_resamples")]
    pub n_resamples: usize,
    #[serde(default = "d_confidence")]
    pub confidence: f64,
    /// Resample positives and negatives separately, keeping class counts.
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub seed: u64,
}

fn d_resamples() -> usize {
    2000
}
fn d_confidence() -> f64 {
    0.95
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_resamples: d_resamples(), confidence: d_confidence(), stratified: false, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Resamples on which the metric was undefined and therefore skipped.
    pub skipped: usize,
}

fn draw_weights(n: usize, truth: &[BinaryLabel], cfg: &BootstrapConfig, index: usize) -> Vec<u64> {
    let mut rng = seed::item_rng(cfg.seed, index as u64);
    let mut w = vec![0u64; n];
    if cfg.stratified {
        for class in [BinaryLabel::Positive, BinaryLabel::Negative] {
            let members: Vec<usize> = (0..n).filter(|&i| truth[i] == class).collect();
            for _ in 0..members.len() {
                w[members[rng.gen_range(0..members.len())]] += 1;
            }
        }
    } else {
        for _ in 0..n {
            w[rng.gen_range(0..n)] += 1;
        }
    }
    w
}

/// Every metric on every resample, in `Metric::ALL` order.
fn resample_metrics(
    predictions: &[Prediction],
    truth: &[BinaryLabel],
    cfg: &BootstrapConfig,
) -> Result<Vec<[Option<f64>; 6]>, EvalError> {
    check_lengths(predictions.len(), truth.len())?;
    let n = truth.len();
    if n < MIN_BOOTSTRAP_SAMPLES {
        return Err(EvalError::TooFewSamples { what: "bootstrap", n, min: MIN_BOOTSTRAP_SAMPLES });
    }
    if cfg.n_resamples == 0 || !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(EvalError::InvalidConfig("bootstrap needs n_resamples >= 1 and confidence in (0, 1)".into()));
    }
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let ranking = Ranking::new(&scores);
    Ok(par::map_indexed(cfg.n_resamples, |i| {
        let w = draw_weights(n, truth, cfg, i);
        let mut cm = ConfusionMatrix::default();
        for j in 0..n {
            if w[j] > 0 {
                cm.add(predictions[j].label, truth[j], w[j]);
            }
        }
        let au = ranking.weighted_auroc(truth, |j| w[j]);
        Metric::ALL.map(|m| m.from_parts(&cm, au))
    }))
}

/// Percentile interval of the defined resample values, widened if needed
/// so it contains `point`.
fn interval(values: &mut Vec<f64>, skipped: usize, point: Option<f64>, confidence: f64) -> Option<Interval> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    let mut lo = percentile_sorted(values, alpha);
    let mut hi = percentile_sorted(values, 1.0 - alpha);
    if let Some(p) = point {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    Some(Interval { lo, hi, skipped })
}

fn collect(resamples: &[[Option<f64>; 6]], metric: Metric) -> (Vec<f64>, usize) {
    let k = Metric::ALL.iter().position(|m| *m == metric).expect("metric listed");
    let values: Vec<f64> = resamples.iter().filter_map(|r| r[k]).collect();
    let skipped = resamples.len() - values.len();
    (values, skipped)
}

/// Point metrics plus a bootstrap interval for each.
pub fn bootstrap_report(
    predictions: &[Prediction],
    truth: &[BinaryLabel],
    cfg: &BootstrapConfig,
) -> Result<MetricReport, EvalError> {
    let mut report = compute_metrics(predictions, truth)?;
    let resamples = resample_metrics(predictions, truth, cfg)?;
    for m in Metric::ALL {
        let (mut values, skipped) = collect(&resamples, m);
        let point = report.get(m).value;
        report.get_mut(m).ci = interval(&mut values, skipped, point, cfg.confidence);
    }
    Ok(report)
}

/// Interval for one metric; `None` when it is undefined on every resample.
pub fn bootstrap_ci(
    predictions: &[Prediction],
    truth: &[BinaryLabel],
    metric: Metric,
    cfg: &BootstrapConfig,
) -> Result<Option<Interval>, EvalError> {
    let point = compute_metrics(predictions, truth)?.get(metric).value;
    let resamples = resample_metrics(predictions, truth, cfg)?;
    let (mut values, skipped) = collect(&resamples, metric);
    Ok(interval(&mut values, skipped, point, cfg.confidence))
}
