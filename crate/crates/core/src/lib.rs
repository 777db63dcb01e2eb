//! Short-horizon fault forecasting for industrial centrifugal pumps.
//!
//! The pipeline runs in stages, one module each:
//!
//! 1. [`telemetry`]: ingest, validate and gap-repair one-minute five-sensor
//!    telemetry, or synthesize it with injected degradation episodes.
//! 2. [`labeling`]: fixed/adaptive dual-threshold condition labels.
//! 3. [`features`]: sliding-window statistics (mean, std, min, max, trend)
//!    paired with horizon-shifted targets.
//! 4. [`balance`]: SMOTE oversampling of the training split.
//! 5. [`models`]: random forest, second-order gradient boosting and the
//!    baseline predictors behind one prediction contract.
//! 6. [`eval`]: chronological split, metrics, bootstrap intervals, McNemar.
//! 7. [`experiments`]: the window x horizon grid, ablations and report files.
//!
//! Data-parallel loops (trees, bootstrap resamples, windows, grid runs) go
//! through [`par`], which uses rayon when the `parallel` feature is enabled
//! and plain iteration otherwise. Every stochastic step draws from a
//! ChaCha stream derived from `(seed, index)`, so results do not depend on
//! thread count or scheduling.

pub mod balance;
pub mod config;
pub mod eval;
pub mod experiments;
pub mod features;
pub mod labeling;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod telemetry;

pub use labeling::{BinaryLabel, ConditionLabel, ThresholdSet};
pub use telemetry::{SensorId, TelemetryRecord, TelemetrySeries, Timestamp};

/// Version string embedded in every run record.
pub const CODE_VERSION: &str = concat!("pumpcast ", env!("CARGO_PKG_VERSION"));
