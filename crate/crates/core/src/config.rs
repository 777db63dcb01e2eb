//! Pipeline configuration (TOML). Unknown keys are rejected everywhere so a
//! typo can never silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::SmoteConfig;
use crate::eval::{BootstrapConfig, SplitConfig};
use crate::features::{DatasetOptions, FeatureSpec, Stat, WindowConfig};
use crate::labeling::{LabelScheme, ThresholdSet};
use crate::models::{BoostedConfig, ForestConfig, IsolationConfig, LogisticConfig, ModelKind};
use crate::telemetry::{SensorId, SyntheticProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub const DEFAULT_SEED: u64 = 20_240_301;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every stage seed is derived from it.
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub windows: WindowsConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub smote: SmoteSection,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn d_seed() -> u64 {
    DEFAULT_SEED
}
fn d_output() -> PathBuf {
    PathBuf::from("out")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: DEFAULT_SEED,
            output_dir: d_output(),
            data: DataConfig::default(),
            thresholds: ThresholdConfig::default(),
            windows: WindowsConfig::default(),
            features: FeaturesConfig::default(),
            models: ModelsConfig::default(),
            smote: SmoteSection::default(),
            split: SplitConfig::default(),
            eval: EvalSection::default(),
            ablation: AblationConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub source: SourceKind,
    /// Required when `source = "csv"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    /// Longest gap (minutes) filled by interpolation.
    #[serde(default = "d_max_gap")]
    pub max_gap: usize,
    #[serde(default = "SyntheticProfile::reference_pump")]
    pub synthetic: SyntheticProfile,
}

fn d_max_gap() -> usize {
    5
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: SourceKind::Synthetic,
            csv_path: None,
            max_gap: d_max_gap(),
            synthetic: SyntheticProfile::reference_pump(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Reference fixed and adaptive limits.
    #[default]
    Table,
    /// Adaptive limits from the data's own percentile.
    Percentile,
    /// Limits given in `thresholds.values`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileScope {
    /// Only the records preceding the train/test boundary.
    #[default]
    TrainPrefix,
    FullSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default)]
    pub mode: ThresholdMode,
    #[serde(default = "d_percentile")]
    pub percentile: f64,
    #[serde(default)]
    pub scope: PercentileScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<ThresholdSet>,
    #[serde(default)]
    pub scheme: LabelScheme,
}

fn d_percentile() -> f64 {
    0.95
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            mode: ThresholdMode::Table,
            percentile: d_percentile(),
            scope: PercentileScope::TrainPrefix,
            values: None,
            scheme: LabelScheme::DualThreshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowsConfig {
    #[serde(default = "d_windows")]
    pub windows: Vec<usize>,
    #[serde(default = "d_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "d_one")]
    pub stride: usize,
}

fn d_windows() -> Vec<usize> {
    vec![60, 120]
}
fn d_horizons() -> Vec<usize> {
    vec![5, 15, 30]
}
fn d_one() -> usize {
    1
}

impl Default for WindowsConfig {
    fn default() -> Self {
        WindowsConfig { windows: d_windows(), horizons: d_horizons(), stride: 1 }
    }
}

impl WindowsConfig {
    /// Window-major, then horizon.
    pub fn cells(&self) -> Vec<WindowConfig> {
        let mut cells = Vec::new();
        for &w in &self.windows {
            for &h in &self.horizons {
                cells.push(WindowConfig { window: w, horizon: h, stride: self.stride });
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    #[serde(default = "d_sensors")]
    pub sensors: Vec<SensorId>,
    #[serde(default = "d_stats")]
    pub stats: Vec<Stat>,
    #[serde(default)]
    pub exclude_abnormal_history: bool,
}

fn d_sensors() -> Vec<SensorId> {
    SensorId::ALL.to_vec()
}
fn d_stats() -> Vec<Stat> {
    Stat::ALL.to_vec()
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig { sensors: d_sensors(), stats: d_stats(), exclude_abnormal_history: false }
    }
}

impl FeaturesConfig {
    pub fn options(&self) -> DatasetOptions {
        DatasetOptions {
            features: FeatureSpec::new(self.sensors.clone(), self.stats.clone()),
            exclude_abnormal_history: self.exclude_abnormal_history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    #[serde(default = "d_include")]
    pub include: Vec<ModelKind>,
    #[serde(default)]
    pub random_forest: ForestConfig,
    #[serde(default)]
    pub boosted: BoostedConfig,
    #[serde(default)]
    pub logistic_regression: LogisticConfig,
    #[serde(default)]
    pub isolation_forest: IsolationConfig,
}

fn d_include() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            include: d_include(),
            random_forest: ForestConfig::default(),
            boosted: BoostedConfig::default(),
            logistic_regression: LogisticConfig::default(),
            isolation_forest: IsolationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteSection {
    #[serde(default = "d_true")]
    pub enabled: bool,
    #[serde(default = "d_k")]
    pub k_neighbors: usize,
    #[serde(default = "d_ratio")]
    pub target_ratio: f64,
    #[serde(default = "d_true")]
    pub standardize_before_knn: bool,
}

fn d_true() -> bool {
    true
}
fn d_k() -> usize {
    5
}
fn d_ratio() -> f64 {
    1.0
}

impl Default for SmoteSection {
    fn default() -> Self {
        SmoteSection { enabled: true, k_neighbors: d_k(), target_ratio: d_ratio(), standardize_before_knn: true }
    }
}

impl SmoteSection {
    pub fn with_seed(&self, seed: u64) -> Option<SmoteConfig> {
        self.enabled.then_some(SmoteConfig {
            k_neighbors: self.k_neighbors,
            target_ratio: self.target_ratio,
            standardize_before_knn: self.standardize_before_knn,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "d_resamples")]
    pub n_resamples: usize,
    #[serde(default = "d_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub stratified: bool,
}

fn d_resamples() -> usize {
    2000
}
fn d_confidence() -> f64 {
    0.95
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { n_resamples: d_resamples(), confidence: d_confidence(), stratified: false }
    }
}

impl EvalSection {
    pub fn with_seed(&self, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: self.n_resamples,
            confidence: self.confidence,
            stratified: self.stratified,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    NoSmote,
    MeanStdOnly,
    SensorSubset,
    SimplifiedLabels,
    WindowSweep,
    HorizonSweep,
    NoStandardizeKnn,
    ExcludeAbnormalHistory,
}

impl AblationKind {
    pub const ALL: [AblationKind; 8] = [
        AblationKind::NoSmote,
        AblationKind::MeanStdOnly,
        AblationKind::SensorSubset,
        AblationKind::SimplifiedLabels,
        AblationKind::WindowSweep,
        AblationKind::HorizonSweep,
        AblationKind::NoStandardizeKnn,
        AblationKind::ExcludeAbnormalHistory,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default = "d_ablation_model")]
    pub model: ModelKind,
    #[serde(default = "d_ablation_window")]
    pub window: usize,
    #[serde(default = "d_ablation_horizon")]
    pub horizon: usize,
    #[serde(default = "d_variants")]
    pub variants: Vec<AblationKind>,
    #[serde(default = "d_subset")]
    pub sensor_subset: Vec<SensorId>,
    #[serde(default = "d_window_sweep")]
    pub window_sweep: Vec<usize>,
    #[serde(default = "d_horizon_sweep")]
    pub horizon_sweep: Vec<usize>,
}

fn d_ablation_model() -> ModelKind {
    ModelKind::RandomForest
}
fn d_ablation_window() -> usize {
    60
}
fn d_ablation_horizon() -> usize {
    5
}
fn d_variants() -> Vec<AblationKind> {
    AblationKind::ALL.to_vec()
}
fn d_subset() -> Vec<SensorId> {
    vec![SensorId::Flow, SensorId::Pressure, SensorId::Temperature]
}
fn d_window_sweep() -> Vec<usize> {
    vec![30, 90]
}
fn d_horizon_sweep() -> Vec<usize> {
    vec![10, 20]
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            model: d_ablation_model(),
            window: d_ablation_window(),
            horizon: d_ablation_horizon(),
            variants: d_variants(),
            sensor_subset: d_subset(),
            window_sweep: d_window_sweep(),
            horizon_sweep: d_horizon_sweep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Models listed in `summary.csv`; every model appears in `summary_all.csv`.
    #[serde(default = "d_summary_models")]
    pub summary_models: Vec<ModelKind>,
}

fn d_summary_models() -> Vec<ModelKind> {
    vec![ModelKind::RandomForest, ModelKind::Boosted]
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { summary_models: d_summary_models() }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.data.source == SourceKind::Csv && self.data.csv_path.is_none() {
            return bad("data.csv_path is required when data.source = \"csv\"".into());
        }
        if let Err(e) = self.data.synthetic.validate() {
            if self.data.source == SourceKind::Synthetic {
                return bad(format!("data.synthetic: {e}"));
            }
        }
        if !(self.thresholds.percentile > 0.0 && self.thresholds.percentile < 1.0) {
            return bad(format!("thresholds.percentile {} outside (0, 1)", self.thresholds.percentile));
        }
        if self.thresholds.mode == ThresholdMode::Explicit && self.thresholds.values.is_none() {
            return bad("thresholds.values is required when thresholds.mode = \"explicit\"".into());
        }
        if self.windows.windows.is_empty() || self.windows.horizons.is_empty() {
            return bad("windows.windows and windows.horizons must be non-empty".into());
        }
        for cell in self.windows.cells() {
            cell.validate().map_err(|e| ConfigError::Invalid(format!("windows: {e}")))?;
        }
        if self.features.sensors.is_empty() || self.features.stats.is_empty() {
            return bad("features.sensors and features.stats must be non-empty".into());
        }
        if self.models.include.is_empty() {
            return bad("models.include must name at least one model".into());
        }
        // Model and resampling seeds come from the global seed.
        for (key, seed) in [
            ("models.random_forest.seed", self.models.random_forest.seed),
            ("models.isolation_forest.seed", self.models.isolation_forest.seed),
        ] {
            if seed != 0 {
                return bad(format!("{key} is derived from the global `seed`; remove it"));
            }
        }
        if let Some(s) = self.smote.with_seed(0) {
            s.validate().map_err(|e| ConfigError::Invalid(format!("smote: {e}")))?;
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad(format!("split.train_fraction {} outside (0, 1)", self.split.train_fraction));
        }
        if self.eval.n_resamples == 0 || !(self.eval.confidence > 0.0 && self.eval.confidence < 1.0) {
            return bad("eval.n_resamples must be >= 1 and eval.confidence in (0, 1)".into());
        }
        if self.ablation.sensor_subset.is_empty() {
            return bad("ablation.sensor_subset must be non-empty".into());
        }
        Ok(())
    }
}
