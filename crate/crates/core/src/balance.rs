//! SMOTE oversampling of the training split.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{LabeledDataset, Sample, SplitTag, SyntheticOrigin};
use crate::labeling::BinaryLabel;
use crate::{par, seed};

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("minority class has {0} sample(s); SMOTE needs at least 2")]
    MinorityTooSmall(usize),
    #[error("refusing to oversample a {0:?} split; only training data may be balanced")]
    AppliedToTestSplit(SplitTag),
    #[error("invalid SMOTE config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteConfig {
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    /// Minority:majority ratio to reach.
    #[serde(default = "default_ratio")]
    pub target_ratio: f64,
    /// Z-score features (training statistics) before neighbour search.
    /// Synthesis itself always happens in the original feature space.
    #[serde(default = "default_true")]
    pub standardize_before_knn: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    5
}
fn default_ratio() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: default_k(),
            target_ratio: default_ratio(),
            standardize_before_knn: true,
            seed: 0,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if self.k_neighbors < 1 {
            return Err(BalanceError::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(BalanceError::InvalidConfig(format!(
                "target_ratio {} outside (0, 1]",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

/// One audit line per synthetic sample. Parent indices refer to the input
/// dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthesisRecord {
    pub synthetic_index: usize,
    pub parent_a: usize,
    pub parent_b: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub dataset: LabeledDataset,
    pub audit: Vec<SynthesisRecord>,
}

pub fn write_audit<W: Write>(audit: &[SynthesisRecord], w: W) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for rec in audit {
        out.serialize(rec)?;
    }
    if audit.is_empty() {
        out.write_record(["synthetic_index", "parent_a", "parent_b", "u"])?;
    }
    out.flush()?;
    Ok(())
}

/// Oversamples the minority class until `minority / majority` reaches
/// `target_ratio`. Synthetic samples are appended after the originals.
pub fn smote(train: &LabeledDataset, config: &SmoteConfig) -> Result<SmoteOutput, BalanceError> {
    config.validate()?;
    if train.split != SplitTag::Train {
        return Err(BalanceError::AppliedToTestSplit(train.split));
    }
    let positives = train.count(BinaryLabel::Positive);
    let negatives = train.len() - positives;
    let minority_label = if positives <= negatives {
        BinaryLabel::Positive
    } else {
        BinaryLabel::Negative
    };
    let majority = positives.max(negatives);
    let minority: Vec<usize> = (0..train.len())
        .filter(|&i| train.samples[i].label == minority_label)
        .collect();

    let target = (config.target_ratio * majority as f64).round() as usize;
    if minority.len() >= target {
        return Ok(SmoteOutput { dataset: train.clone(), audit: Vec::new() });
    }
    if minority.len() < 2 {
        return Err(BalanceError::MinorityTooSmall(minority.len()));
    }

    let k = config.k_neighbors.min(minority.len() - 1);
    let space = if config.standardize_before_knn {
        standardized(train)
    } else {
        train.samples.iter().map(|s| s.features.clone()).collect()
    };
    let neighbours = nearest_minority_neighbours(&space, &minority, k);

    let mut rng = seed::rng_from(config.seed);
    let mut samples = train.samples.clone();
    let mut audit = Vec::with_capacity(target - minority.len());
    for _ in minority.len()..target {
        let pick = rng.gen_range(0..minority.len());
        let nb = neighbours[pick][rng.gen_range(0..k)];
        let u: f64 = rng.gen();
        let (a, b) = (minority[pick], minority[nb]);
        let xa = &train.samples[a].features;
        let xb = &train.samples[b].features;
        let features = xa.iter().zip(xb).map(|(p, q)| p + u * (q - p)).collect();
        audit.push(SynthesisRecord { synthetic_index: samples.len(), parent_a: a, parent_b: b, u });
        samples.push(Sample {
            features,
            label: minority_label,
            anchor: None,
            context: None,
            origin: Some(SyntheticOrigin { parent_a: a, parent_b: b, u }),
        });
    }
    Ok(SmoteOutput { dataset: train.with_samples(samples, SplitTag::Train), audit })
}

/// Z-scores every column with statistics over the whole training split;
/// constant columns are only centred.
fn standardized(train: &LabeledDataset) -> Vec<Vec<f64>> {
    let d = train.n_features();
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    for s in &train.samples {
        for (m, v) in mean.iter_mut().zip(&s.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for s in &train.samples {
        for ((acc, v), m) in var.iter_mut().zip(&s.features).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    train
        .samples
        .iter()
        .map(|s| {
            s.features
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), sd)| (v - m) / sd)
                .collect()
        })
        .collect()
}

/// For each minority position, the positions (into `minority`) of its `k`
/// nearest other minority points; ties broken by position.
fn nearest_minority_neighbours(space: &[Vec<f64>], minority: &[usize], k: usize) -> Vec<Vec<usize>> {
    par::map_indexed(minority.len(), |i| {
        let xi = &space[minority[i]];
        let mut dists: Vec<(f64, usize)> = minority
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, &row)| {
                let d2: f64 = xi.iter().zip(&space[row]).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dists.truncate(k);
        dists.into_iter().map(|(_, j)| j).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WindowConfig;
    use crate::telemetry::Timestamp;

    fn dataset(points: &[(Vec<f64>, bool)], split: SplitTag) -> LabeledDataset {
        let d = points[0].0.len();
        LabeledDataset {
            samples: points
                .iter()
                .enumerate()
                .map(|(i, (x, y))| Sample {
                    features: x.clone(),
                    label: BinaryLabel::from_bool(*y),
                    anchor: Some(Timestamp(i as i64)),
                    context: None,
                    origin: None,
                })
                .collect(),
            feature_names: (0..d).map(|i| format!("f{i}")).collect(),
            window: WindowConfig::new(2, 1),
            split,
        }
    }

    fn embed(x: f64, y: f64) -> Vec<f64> {
        let mut v = vec![0.0; 25];
        v[0] = x;
        v[1] = y;
        v
    }

    #[test]
    fn balanced_input_is_untouched() {
        let pts: Vec<_> = (0..6).map(|i| (embed(i as f64, 0.0), i % 2 == 0)).collect();
        let d = dataset(&pts, SplitTag::Train);
        let out = smote(&d, &SmoteConfig::default()).unwrap();
        assert_eq!(out.dataset, d);
        assert!(out.audit.is_empty());
    }

    #[test]
    fn identical_parents_give_identical_children() {
        let mut pts: Vec<_> = (0..10).map(|i| (embed(i as f64, 1.0), false)).collect();
        pts.push((embed(3.0, 3.0), true));
        pts.push((embed(3.0, 3.0), true));
        let out = smote(&dataset(&pts, SplitTag::Train), &SmoteConfig::default()).unwrap();
        assert_eq!(out.dataset.count(BinaryLabel::Positive), 10);
        for s in out.dataset.samples.iter().filter(|s| s.is_synthetic()) {
            assert_eq!(s.features, embed(3.0, 3.0));
            assert!(s.anchor.is_none());
        }
    }

    #[test]
    fn synthetics_lie_on_parent_segments() {
        let mut pts: Vec<_> = (0..30).map(|i| (embed(i as f64, -(i as f64)), false)).collect();
        let originals = [embed(0.0, 0.0), embed(4.0, 1.0), embed(1.0, 5.0)];
        pts.extend(originals.iter().map(|p| (p.clone(), true)));
        let cfg = SmoteConfig { k_neighbors: 2, seed: 9, ..Default::default() };
        let out = smote(&dataset(&pts, SplitTag::Train), &cfg).unwrap();
        let synth: Vec<_> = out.dataset.samples.iter().filter(|s| s.is_synthetic()).collect();
        assert_eq!(synth.len(), 27);
        for s in synth {
            // Point-on-segment oracle: some pair of originals with collinear
            // offset and parameter in [0, 1].
            let p = (s.features[0], s.features[1]);
            let on_some_segment = originals.iter().any(|a| {
                originals.iter().any(|b| {
                    let (ax, ay, bx, by) = (a[0], a[1], b[0], b[1]);
                    let cross = (bx - ax) * (p.1 - ay) - (by - ay) * (p.0 - ax);
                    let dot = (p.0 - ax) * (bx - ax) + (p.1 - ay) * (by - ay);
                    let len2 = (bx - ax).powi(2) + (by - ay).powi(2);
                    len2 > 0.0 && cross.abs() < 1e-9 && dot >= -1e-9 && dot <= len2 + 1e-9
                })
            });
            assert!(on_some_segment, "{p:?}");
            assert!(s.features[2..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn ratio_target_and_determinism() {
        let mut pts: Vec<_> = (0..101).map(|i| (embed(i as f64, 0.5), false)).collect();
        pts.extend((0..7).map(|i| (embed(i as f64, 9.0 + i as f64), true)));
        let d = dataset(&pts, SplitTag::Train);
        let cfg = SmoteConfig { target_ratio: 0.5, seed: 3, ..Default::default() };
        let a = smote(&d, &cfg).unwrap();
        let ratio = a.dataset.count(BinaryLabel::Positive) as f64 / 101.0;
        assert!((ratio - 0.5).abs() <= 1.0 / 101.0);
        assert_eq!(a, smote(&d, &cfg).unwrap());
        let other = smote(&d, &SmoteConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.audit, other.audit);
    }

    #[test]
    fn k_larger_than_minority_is_clamped() {
        let mut pts: Vec<_> = (0..20).map(|i| (embed(i as f64, 0.0), false)).collect();
        pts.push((embed(0.0, 1.0), true));
        pts.push((embed(2.0, 1.0), true));
        let cfg = SmoteConfig { k_neighbors: 50, ..Default::default() };
        let out = smote(&dataset(&pts, SplitTag::Train), &cfg).unwrap();
        assert_eq!(out.audit.len(), 18);
        assert!(out.audit.iter().all(|r| r.parent_a != r.parent_b));
    }

    #[test]
    fn guards() {
        let mut pts: Vec<_> = (0..20).map(|i| (embed(i as f64, 0.0), false)).collect();
        pts.push((embed(0.0, 1.0), true));
        let d = dataset(&pts, SplitTag::Train);
        assert_eq!(smote(&d, &SmoteConfig::default()), Err(BalanceError::MinorityTooSmall(1)));
        let test = dataset(&pts, SplitTag::Test);
        assert_eq!(
            smote(&test, &SmoteConfig::default()),
            Err(BalanceError::AppliedToTestSplit(SplitTag::Test))
        );
        let bad = SmoteConfig { target_ratio: 1.5, ..Default::default() };
        assert!(matches!(smote(&d, &bad), Err(BalanceError::InvalidConfig(_))));
    }

    #[test]
    fn audit_csv() {
        let audit = [SynthesisRecord { synthetic_index: 5, parent_a: 1, parent_b: 2, u: 0.25 }];
        let mut buf = Vec::new();
        write_audit(&audit, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "synthetic_index,parent_a,parent_b,u\n5,1,2,0.25\n");
    }
}
