//! Train/test split with provenance tags.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::features::{LabeledDataset, SplitTag};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "d_fraction")]
    pub train_fraction: f64,
    /// Shuffle samples before cutting instead of keeping time order.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    /// Test samples dropped right after the boundary so no test window
    /// overlaps a training target. `L + Δ` removes all overlap.
    #[serde(default)]
    pub purge_gap: usize,
}

fn d_fraction() -> f64 {
    0.75
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: d_fraction(), shuffle_seed: None, purge_gap: 0 }
    }
}

/// Number of training samples: `ceil(f · n)`.
pub fn train_size(n: usize, fraction: f64) -> usize {
    // The epsilon keeps exact products such as 0.75 · 100 from rounding up.
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// First `ceil(f · n)` samples train, the rest test. Order is preserved on
/// both sides. Either side ending up empty is an error; a single-class test
/// side is not (AUROC is then reported undefined).
pub fn split_chronological(
    data: &LabeledDataset,
    config: &SplitConfig,
) -> Result<(LabeledDataset, LabeledDataset), EvalError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(EvalError::InvalidConfig(format!(
            "train_fraction {} outside (0, 1)",
            config.train_fraction
        )));
    }
    if data.split != SplitTag::Unsplit {
        return Err(EvalError::AlreadySplit(data.split));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    match config.shuffle_seed {
        Some(s) => order.shuffle(&mut seed::rng_from(s)),
        None => {
            for i in 1..data.len() {
                if let (Some(a), Some(b)) = (data.samples[i - 1].anchor, data.samples[i].anchor) {
                    if b < a {
                        return Err(EvalError::NotChronological(i));
                    }
                }
            }
        }
    }
    let n_train = train_size(data.len(), config.train_fraction);
    let test_start = (n_train + config.purge_gap).min(data.len());
    if n_train == 0 || test_start == data.len() {
        return Err(EvalError::TooFewSamples { what: "split", n: data.len(), min: 2 + config.purge_gap });
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| data.samples[i].clone()).collect();
    Ok((
        data.with_samples(pick(&order[..n_train]), SplitTag::Train),
        data.with_samples(pick(&order[test_start..]), SplitTag::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Sample, WindowConfig};
    use crate::labeling::BinaryLabel;
    use crate::telemetry::Timestamp;

    fn data(n: usize) -> LabeledDataset {
        LabeledDataset {
            samples: (0..n)
                .map(|i| Sample {
                    features: vec![i as f64],
                    label: BinaryLabel::from_bool(i % 3 == 0),
                    anchor: Some(Timestamp(i as i64)),
                    context: None,
                    origin: None,
                })
                .collect(),
            feature_names: vec!["x".into()],
            window: WindowConfig::new(2, 1),
            split: SplitTag::Unsplit,
        }
    }

    #[test]
    fn ceiling_rule() {
        assert_eq!(train_size(100, 0.75), 75);
        assert_eq!(train_size(4, 0.75), 3);
        assert_eq!(train_size(5, 0.75), 4);
        assert_eq!(train_size(136, 0.75), 102);
        let (tr, te) = split_chronological(&data(100), &SplitConfig::default()).unwrap();
        assert_eq!((tr.len(), te.len()), (75, 25));
        assert_eq!((tr.split, te.split), (SplitTag::Train, SplitTag::Test));
        let (tr, te) = split_chronological(&data(4), &SplitConfig::default()).unwrap();
        assert_eq!((tr.len(), te.len()), (3, 1));
    }

    #[test]
    fn order_preserved() {
        let (tr, te) = split_chronological(&data(40), &SplitConfig::default()).unwrap();
        let xs: Vec<f64> = tr.samples.iter().chain(&te.samples).map(|s| s.features[0]).collect();
        assert_eq!(xs, (0..40).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn purge_and_shuffle() {
        let cfg = SplitConfig { purge_gap: 5, ..Default::default() };
        let (tr, te) = split_chronological(&data(40), &cfg).unwrap();
        assert_eq!((tr.len(), te.len()), (30, 5));
        assert_eq!(te.samples[0].features[0], 35.0);
        let cfg = SplitConfig { shuffle_seed: Some(1), ..Default::default() };
        let (tr, te) = split_chronological(&data(40), &cfg).unwrap();
        assert_eq!((tr.len(), te.len()), (30, 10));
        let mut all: Vec<f64> = tr.samples.iter().chain(&te.samples).map(|s| s.features[0]).collect();
        assert_ne!(all, (0..40).map(|i| i as f64).collect::<Vec<_>>());
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..40).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            split_chronological(&data(1), &SplitConfig::default()),
            Err(EvalError::TooFewSamples { .. })
        ));
        let mut d = data(10);
        d.samples.swap(2, 3);
        assert_eq!(split_chronological(&d, &SplitConfig::default()), Err(EvalError::NotChronological(3)));
        let mut d = data(10);
        d.split = SplitTag::Train;
        assert!(matches!(split_chronological(&d, &SplitConfig::default()), Err(EvalError::AlreadySplit(_))));
    }
}
