//! L2-regularised logistic regression on standardised features, trained by
//! full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{check_len, check_trainable, sigmoid, ModelError, Prediction, TrainingView};
use crate::features::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    #[serde(default = "d_l2")]
    pub l2: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
}

fn d_l2() -> f64 {
    1e-4
}
fn d_epochs() -> usize {
    500
}
fn d_lr() -> f64 {
    0.1
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { l2: d_l2(), epochs: d_epochs(), learning_rate: d_lr() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticModel {
    pub config: LogisticConfig,
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn fit(data: &LabeledDataset, config: &LogisticConfig) -> Result<LogisticModel, ModelError> {
        check_trainable(data)?;
        let n = data.n_rows();
        let d = data.n_features();
        let nf = n as f64;

        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(data.features(r)) {
                *m += v / nf;
            }
        }
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((acc, v), m) in var.iter_mut().zip(data.features(r)).zip(&mean) {
                *acc += (v - m) * (v - m) / nf;
            }
        }
        let scale: Vec<f64> = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        let z: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                data.features(r)
                    .iter()
                    .zip(&mean)
                    .zip(&scale)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|r| f64::from(data.label(r).as_u8())).collect();

        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut grad = vec![0.0; d];
        for _ in 0..config.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (row, t) in z.iter().zip(&y) {
                let m: f64 = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let err = sigmoid(m) - t;
                grad_b += err;
                for (g, v) in grad.iter_mut().zip(row) {
                    *g += err * v;
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= config.learning_rate * (g / nf + config.l2 * *wi);
            }
            b -= config.learning_rate * grad_b / nf;
        }
        Ok(LogisticModel {
            config: *config,
            feature_names: data.feature_names.clone(),
            mean,
            scale,
            weights: w,
            bias: b,
        })
    }

    pub fn predict(&self, features: &[f64]) -> Result<Prediction, ModelError> {
        check_len(self.weights.len(), features)?;
        let m: f64 = self.bias
            + features
                .iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((v, mu), s), w)| (v - mu) / s * w)
                .sum::<f64>();
        Ok(Prediction::from_score(sigmoid(m)))
    }
}
