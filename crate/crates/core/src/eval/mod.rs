//! Train/test splitting, classification metrics, bootstrap intervals and
//! McNemar's paired test.

pub mod bootstrap;
pub mod mcnemar;
pub mod metrics;
pub mod split;

use thiserror::Error;

pub use bootstrap::{bootstrap_ci, bootstrap_report, BootstrapConfig, Interval};
pub use mcnemar::{mcnemar, McNemarMethod, McNemarResult};
pub use metrics::{auroc, compute_metrics, ConfusionMatrix, Metric, MetricReport, MetricValue};
pub use split::{split_chronological, SplitConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{what}: {n} samples, need at least {min}")]
    TooFewSamples { what: &'static str, n: usize, min: usize },
    #[error("samples are not in chronological order at index {0}")]
    NotChronological(usize),
    #[error("split expects an unsplit dataset, got {0:?}")]
    AlreadySplit(crate::features::SplitTag),
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<(), EvalError> {
    if left != right {
        return Err(EvalError::LengthMismatch { left, right });
    }
    Ok(())
}
