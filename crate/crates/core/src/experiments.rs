//! The window x horizon grid, the ablation suite and report files.
//!
//! A [`RunSpec`] records everything one run needs (data source, resolved
//! thresholds, window, features, model parameters, balancing, split,
//! bootstrap settings and seeds), so any run can be repeated from its
//! `config.json` alone. Runs sharing a dataset reuse one windowed split and
//! one SMOTE pass; runs execute in parallel and are sorted by id before
//! anything is written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::balance::{write_audit, SmoteConfig};
use crate::config::{AblationKind, DataConfig, FeaturesConfig, ModelsConfig, PipelineConfig};
use crate::eval::{bootstrap_report, mcnemar, BootstrapConfig, McNemarMethod, Metric, MetricReport, SplitConfig};
use crate::features::{Stat, WindowConfig};
use crate::labeling::{BinaryLabel, LabelScheme, LabeledSeries, ThresholdSet};
use crate::models::{feature_importance, model_to_json, ModelKind, TrainedModel};
use crate::pipeline::{self, PipelineError, SplitData};
use crate::telemetry::{TelemetrySeries, Timestamp};
use crate::{par, seed, CODE_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunGroup {
    Grid,
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub global: u64,
    pub smote: u64,
    pub model: u64,
    pub bootstrap: u64,
}

impl RunSeeds {
    /// Seeds depend on the global seed, the model and the (window, horizon)
    /// cell only, so ablation variants of a cell share them with its base.
    pub fn derive(global: u64, model: ModelKind, window: &WindowConfig) -> RunSeeds {
        let cell = format!("w{}/h{}", window.window, window.horizon);
        RunSeeds {
            global,
            smote: seed::stage_seed(global, &format!("smote/{cell}")),
            model: seed::stage_seed(global, &format!("model/{model}/{cell}")),
            bootstrap: seed::stage_seed(global, &format!("bootstrap/{model}/{cell}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub run_id: String,
    pub group: RunGroup,
    /// Ablation variant label; `base` for the reference run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub code_version: String,
    pub data: DataConfig,
    pub thresholds: ThresholdSet,
    pub label_scheme: LabelScheme,
    pub window: WindowConfig,
    pub features: FeaturesConfig,
    pub model: ModelKind,
    pub model_params: ModelsConfig,
    /// `None` when the model trains on the raw split.
    pub smote: Option<SmoteConfig>,
    pub split: SplitConfig,
    pub bootstrap: BootstrapConfig,
    pub seeds: RunSeeds,
}

impl RunSpec {
    /// Everything that determines the windowed split.
    fn split_key(&self) -> String {
        serde_json::to_string(&(
            &self.data,
            &self.thresholds,
            self.label_scheme,
            &self.window,
            &self.features,
            &self.split,
        ))
        .expect("serializable")
    }

    fn balance_key(&self) -> String {
        format!("{}|{}", self.split_key(), serde_json::to_string(&self.smote).expect("serializable"))
    }

    fn cell(&self) -> (usize, usize) {
        (self.window.window, self.window.horizon)
    }
}

pub fn run_id(prefix: Option<&str>, window: &WindowConfig, model: ModelKind) -> String {
    let core = format!("w{:03}-h{:02}-{}", window.window, window.horizon, model);
    match prefix {
        Some(p) => format!("ablation-{p}-{core}"),
        None => core,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub runs: Vec<RunSpec>,
}

fn base_spec(
    config: &PipelineConfig,
    thresholds: &ThresholdSet,
    window: WindowConfig,
    model: ModelKind,
    group: RunGroup,
    variant: Option<&str>,
) -> RunSpec {
    let seeds = RunSeeds::derive(config.seed, model, &window);
    let smote = if model.uses_balanced_training() {
        config.smote.with_seed(seeds.smote)
    } else {
        None
    };
    RunSpec {
        run_id: run_id(variant, &window, model),
        group,
        variant: variant.map(str::to_string),
        code_version: CODE_VERSION.to_string(),
        data: config.data.clone(),
        thresholds: *thresholds,
        label_scheme: config.thresholds.scheme,
        window,
        features: config.features.clone(),
        model,
        model_params: config.models.clone(),
        smote,
        split: config.split,
        bootstrap: config.eval.with_seed(seeds.bootstrap),
        seeds,
    }
}

impl ExperimentPlan {
    /// Every configured (window, horizon) cell crossed with every included model.
    pub fn grid(config: &PipelineConfig, thresholds: &ThresholdSet) -> ExperimentPlan {
        let mut runs = Vec::new();
        for cell in config.windows.cells() {
            for &model in &config.models.include {
                runs.push(base_spec(config, thresholds, cell, model, RunGroup::Grid, None));
            }
        }
        ExperimentPlan { runs }
    }

    /// The base run plus one run per variant, each changing a single factor.
    pub fn ablations(config: &PipelineConfig, thresholds: &ThresholdSet) -> ExperimentPlan {
        let a = &config.ablation;
        let window = WindowConfig { window: a.window, horizon: a.horizon, stride: config.windows.stride };
        let base = base_spec(config, thresholds, window, a.model, RunGroup::Ablation, Some("base"));
        let mut runs = vec![base.clone()];
        let relabel = |mut spec: RunSpec, label: &str| {
            spec.run_id = run_id(Some(label), &spec.window, spec.model);
            spec.variant = Some(label.to_string());
            spec
        };
        for kind in &a.variants {
            match kind {
                AblationKind::NoSmote => {
                    let mut s = base.clone();
                    s.smote = None;
                    runs.push(relabel(s, "no_smote"));
                }
                AblationKind::MeanStdOnly => {
                    let mut s = base.clone();
                    s.features.stats = vec![Stat::Mean, Stat::Std];
                    runs.push(relabel(s, "mean_std_only"));
                }
                AblationKind::SensorSubset => {
                    let mut s = base.clone();
                    s.features.sensors = a.sensor_subset.clone();
                    runs.push(relabel(s, "sensor_subset"));
                }
                AblationKind::SimplifiedLabels => {
                    let mut s = base.clone();
                    s.label_scheme = LabelScheme::FixedOnly;
                    runs.push(relabel(s, "simplified_labels"));
                }
                AblationKind::NoStandardizeKnn => {
                    let mut s = base.clone();
                    if let Some(sm) = s.smote.as_mut() {
                        sm.standardize_before_knn = false;
                    }
                    runs.push(relabel(s, "no_standardize_knn"));
                }
                AblationKind::ExcludeAbnormalHistory => {
                    let mut s = base.clone();
                    s.features.exclude_abnormal_history = true;
                    runs.push(relabel(s, "exclude_abnormal_history"));
                }
                AblationKind::WindowSweep => {
                    for &l in &a.window_sweep {
                        let w = WindowConfig { window: l, ..window };
                        let s = base_spec(config, thresholds, w, a.model, RunGroup::Ablation, None);
                        runs.push(relabel(s, &format!("window_sweep_{l}")));
                    }
                }
                AblationKind::HorizonSweep => {
                    for &h in &a.horizon_sweep {
                        let w = WindowConfig { horizon: h, ..window };
                        let s = base_spec(config, thresholds, w, a.model, RunGroup::Ablation, None);
                        runs.push(relabel(s, &format!("horizon_sweep_{h}")));
                    }
                }
            }
        }
        ExperimentPlan { runs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCounts {
    pub samples: usize,
    pub train: usize,
    pub train_positive: usize,
    pub train_balanced: usize,
    pub synthetic: usize,
    pub test: usize,
    pub test_positive: usize,
    pub features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub other: String,
    pub b: u64,
    pub c: u64,
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
    /// Test samples both runs scored (matched by anchor time).
    pub n_paired: usize,
}

/// What `metrics.json` holds: the run record, data counts, metrics with
/// intervals, and paired tests against the other runs of its cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<DataCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub importance: Vec<FeatureImportance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mcnemar: Vec<PairedTest>,
    /// Ablation variants: paired test against the base run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub versus_base: Option<PairedTest>,
}

impl RunRecord {
    pub fn id(&self) -> &str {
        &self.run.run_id
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        self.metrics.as_ref().and_then(|r| r.get(m).value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub anchor: Option<Timestamp>,
    pub truth: BinaryLabel,
    pub predicted: BinaryLabel,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub predictions: Vec<PredictionRow>,
    pub model: Option<TrainedModel>,
}

struct Prepared {
    split: SplitData,
}

fn failed(spec: &RunSpec, err: impl std::fmt::Display) -> RunOutcome {
    RunOutcome {
        record: RunRecord {
            run: spec.clone(),
            error: Some(err.to_string()),
            counts: None,
            metrics: None,
            importance: Vec::new(),
            mcnemar: Vec::new(),
            versus_base: None,
        },
        predictions: Vec::new(),
        model: None,
    }
}

fn execute(
    spec: &RunSpec,
    prepared: &Result<Prepared, String>,
    balanced: &Result<pipeline::Balanced, String>,
) -> RunOutcome {
    let prepared = match prepared {
        Ok(p) => p,
        Err(e) => return failed(spec, e),
    };
    let balanced = match balanced {
        Ok(b) => b,
        Err(e) => return failed(spec, e),
    };
    let result = (|| -> Result<RunOutcome, PipelineError> {
        let split = &prepared.split;
        let model = pipeline::train_model(
            spec.model,
            &spec.model_params,
            spec.seeds.model,
            &spec.thresholds,
            &split.train,
            &balanced.dataset,
        )?;
        let preds = pipeline::predict(&model, &split.test)?;
        let truth = split.test.labels();
        let metrics = bootstrap_report(&preds, &truth, &spec.bootstrap)?;
        let importance = match &model {
            TrainedModel::Forest(f) => feature_importance(f)
                .into_iter()
                .map(|(feature, importance)| FeatureImportance { feature, importance })
                .collect(),
            _ => Vec::new(),
        };
        let counts = DataCounts {
            samples: split.all.len(),
            train: split.train.len(),
            train_positive: split.train.count(BinaryLabel::Positive),
            train_balanced: balanced.dataset.len(),
            synthetic: balanced.audit.len(),
            test: split.test.len(),
            test_positive: split.test.count(BinaryLabel::Positive),
            features: split.all.n_features(),
        };
        let predictions = split
            .test
            .samples
            .iter()
            .zip(&preds)
            .map(|(s, p)| PredictionRow { anchor: s.anchor, truth: s.label, predicted: p.label, score: p.score })
            .collect();
        Ok(RunOutcome {
            record: RunRecord {
                run: spec.clone(),
                error: None,
                counts: Some(counts),
                metrics: Some(metrics),
                importance,
                mcnemar: Vec::new(),
                versus_base: None,
            },
            predictions,
            model: Some(model),
        })
    })();
    result.unwrap_or_else(|e| failed(spec, e))
}

fn paired(other: &str, a: &[PredictionRow], b: &[PredictionRow]) -> Option<PairedTest> {
    let index: BTreeMap<Timestamp, &PredictionRow> =
        b.iter().filter_map(|r| r.anchor.map(|t| (t, r))).collect();
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    let mut ta = Vec::new();
    let mut tb = Vec::new();
    for r in a {
        if let Some(other_row) = r.anchor.and_then(|t| index.get(&t)) {
            pa.push(r.predicted);
            ta.push(r.truth);
            pb.push(other_row.predicted);
            tb.push(other_row.truth);
        }
    }
    if pa.is_empty() {
        return None;
    }
    // Each side is scored against its own target; correctness is compared.
    let ca: Vec<BinaryLabel> = pa.iter().zip(&ta).map(|(p, t)| BinaryLabel::from_bool(p == t)).collect();
    let cb: Vec<BinaryLabel> = pb.iter().zip(&tb).map(|(p, t)| BinaryLabel::from_bool(p == t)).collect();
    let all_correct = vec![BinaryLabel::Positive; ca.len()];
    let r = mcnemar(&ca, &cb, &all_correct).ok()?;
    Some(PairedTest {
        other: other.to_string(),
        b: r.b,
        c: r.c,
        statistic: r.statistic,
        p_value: r.p_value,
        method: r.method,
        n_paired: ca.len(),
    })
}

/// Runs every spec against the given series. All specs must name the same
/// data source (the series is loaded once by the caller). Failures are
/// recorded per run and never abort the plan.
pub fn run_plan(plan: &ExperimentPlan, series: &TelemetrySeries) -> Vec<RunOutcome> {
    let mut labeled: BTreeMap<String, LabeledSeries> = BTreeMap::new();
    for spec in &plan.runs {
        let key = serde_json::to_string(&(&spec.thresholds, spec.label_scheme)).expect("serializable");
        labeled
            .entry(key)
            .or_insert_with(|| pipeline::label(series, &spec.thresholds, spec.label_scheme));
    }

    let mut split_keys: Vec<String> = plan.runs.iter().map(RunSpec::split_key).collect();
    split_keys.sort();
    split_keys.dedup();
    let split_specs: Vec<&RunSpec> = split_keys
        .iter()
        .map(|k| plan.runs.iter().find(|s| &s.split_key() == k).expect("key from a spec"))
        .collect();
    let splits: Vec<Result<Prepared, String>> = par::map_slice(&split_specs, |spec| {
        let key = serde_json::to_string(&(&spec.thresholds, spec.label_scheme)).expect("serializable");
        pipeline::prepare_split(&labeled[&key], spec.window, &spec.features.options(), &spec.split)
            .map(|split| Prepared { split })
            .map_err(|e| e.to_string())
    });
    let split_of = |spec: &RunSpec| &splits[split_keys.binary_search(&spec.split_key()).expect("prepared")];

    let mut balance_keys: Vec<String> = plan.runs.iter().map(RunSpec::balance_key).collect();
    balance_keys.sort();
    balance_keys.dedup();
    let balance_specs: Vec<&RunSpec> = balance_keys
        .iter()
        .map(|k| plan.runs.iter().find(|s| &s.balance_key() == k).expect("key from a spec"))
        .collect();
    let balanced: Vec<Result<pipeline::Balanced, String>> = par::map_slice(&balance_specs, |spec| {
        match split_of(spec) {
            Ok(p) => pipeline::balance(&p.split.train, spec.smote.as_ref()).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        }
    });

    let mut outcomes = par::map_slice(&plan.runs, |spec| {
        let b = &balanced[balance_keys.binary_search(&spec.balance_key()).expect("balanced")];
        execute(spec, split_of(spec), b)
    });
    outcomes.sort_by(|a, b| a.record.run.run_id.cmp(&b.record.run.run_id));
    attach_paired_tests(&mut outcomes);
    outcomes
}

/// McNemar between every pair of runs in the same group, variant and cell,
/// plus each ablation variant against the base run.
fn attach_paired_tests(outcomes: &mut [RunOutcome]) {
    let n = outcomes.len();
    let mut tests: Vec<Vec<PairedTest>> = vec![Vec::new(); n];
    let mut versus: Vec<Option<PairedTest>> = vec![None; n];
    let base = outcomes
        .iter()
        .position(|o| o.record.run.variant.as_deref() == Some("base") && o.record.is_ok());
    for i in 0..n {
        if !outcomes[i].record.is_ok() {
            continue;
        }
        let ri = &outcomes[i].record.run;
        for j in 0..n {
            let rj = &outcomes[j].record.run;
            if i == j || !outcomes[j].record.is_ok() {
                continue;
            }
            if ri.group == rj.group && ri.variant == rj.variant && ri.cell() == rj.cell() && ri.split_key() == rj.split_key() {
                if let Some(t) = paired(&rj.run_id, &outcomes[i].predictions, &outcomes[j].predictions) {
                    tests[i].push(t);
                }
            }
        }
        if let Some(b) = base {
            if ri.group == RunGroup::Ablation && i != b {
                versus[i] = paired(&outcomes[b].record.run.run_id, &outcomes[i].predictions, &outcomes[b].predictions);
            }
        }
    }
    for (o, (t, v)) in outcomes.iter_mut().zip(tests.into_iter().zip(versus)) {
        o.record.mcnemar = t;
        o.record.versus_base = v;
    }
}

/// Loads the data named by the first spec and runs the plan. Used to
/// reproduce runs from their saved records.
pub fn run_plan_from_source(plan: &ExperimentPlan) -> Result<Vec<RunOutcome>, PipelineError> {
    let first = plan.runs.first().ok_or_else(|| PipelineError::Other("empty plan".into()))?;
    if plan.runs.iter().any(|s| s.data != first.data) {
        return Err(PipelineError::Other("runs name different data sources".into()));
    }
    let (series, _) = pipeline::load_series(&first.data)?;
    Ok(run_plan(plan, &series))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::io(path, e)
}

fn write(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(io(path))
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// Writes `runs/<run-id>/` for each outcome: config, metrics, confusion
/// matrix, predictions, model and (for forests) feature importance.
pub fn write_run_artifacts(outcomes: &[RunOutcome], out_dir: &Path) -> Result<(), PipelineError> {
    for o in outcomes {
        let dir = out_dir.join("runs").join(o.record.id());
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        write(&dir.join("config.json"), &json(&o.record.run))?;
        write(&dir.join("metrics.json"), &json(&o.record))?;
        if let Some(m) = &o.record.metrics {
            let c = m.confusion;
            let text = format!(
                "actual,predicted_early_warning,predicted_normal\nearly_warning,{},{}\nnormal,{},{}\n",
                c.tp, c.fn_, c.fp, c.tn
            );
            write(&dir.join("confusion.csv"), text.as_bytes())?;
        }
        if !o.record.importance.is_empty() {
            let mut text = String::from("rank,feature,importance\n");
            for (i, f) in o.record.importance.iter().enumerate() {
                let _ = writeln!(text, "{},{},{}", i + 1, f.feature, f.importance);
            }
            write(&dir.join("importance.csv"), text.as_bytes())?;
        }
        if o.record.is_ok() {
            let mut text = String::from("anchor_ts,truth,predicted,score\n");
            for p in &o.predictions {
                let _ = writeln!(
                    text,
                    "{},{},{},{}",
                    p.anchor.map(|t| t.to_string()).unwrap_or_default(),
                    p.truth.as_u8(),
                    p.predicted.as_u8(),
                    p.score
                );
            }
            write(&dir.join("predictions.csv"), text.as_bytes())?;
        }
        if let Some(model) = &o.model {
            write(&dir.join("model.json"), model_to_json(model).as_bytes())?;
        }
    }
    Ok(())
}

/// Reads every `runs/*/metrics.json` under `out_dir`, sorted by run id.
pub fn load_records(out_dir: &Path) -> Result<Vec<RunRecord>, PipelineError> {
    let runs = out_dir.join("runs");
    let mut records = Vec::new();
    for entry in fs::read_dir(&runs).map_err(io(&runs))? {
        let path = entry.map_err(io(&runs))?.path().join("metrics.json");
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let record: RunRecord = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))?;
        records.push(record);
    }
    records.sort_by(|a, b| a.run.run_id.cmp(&b.run.run_id));
    Ok(records)
}

/// Recall table: one row per (model, window), early-warning and normal
/// recall per horizon.
pub fn recall_table(records: &[RunRecord], models: &[ModelKind]) -> String {
    let grid: Vec<&RunRecord> = records.iter().filter(|r| r.run.group == RunGroup::Grid).collect();
    let mut horizons: Vec<usize> = grid.iter().map(|r| r.run.window.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut text = String::from("model,window");
    for h in &horizons {
        let _ = write!(text, ",early_warning_h{h},normal_h{h}");
    }
    text.push('\n');
    for &model in models {
        let mut windows: Vec<usize> =
            grid.iter().filter(|r| r.run.model == model).map(|r| r.run.window.window).collect();
        windows.sort_unstable();
        windows.dedup();
        for w in windows {
            let _ = write!(text, "{model},{w}");
            for &h in &horizons {
                let rec = grid
                    .iter()
                    .find(|r| r.run.model == model && r.run.window.window == w && r.run.window.horizon == h);
                let (ew, nr) = match rec {
                    Some(r) => (r.metric(Metric::Recall), r.metric(Metric::Specificity)),
                    None => (None, None),
                };
                let _ = write!(text, ",{},{}", fmt3(ew), fmt3(nr));
            }
            text.push('\n');
        }
    }
    text
}

/// Variant-vs-base comparison table.
pub fn ablation_table(records: &[RunRecord]) -> String {
    let mut text = String::from("variant,run_id,model,window,horizon,features,test,status");
    for m in Metric::ALL {
        let _ = write!(text, ",{0},{0}_delta", m.name());
    }
    text.push_str(",mcnemar_b,mcnemar_c,mcnemar_p,n_paired\n");
    let abl: Vec<&RunRecord> = records.iter().filter(|r| r.run.group == RunGroup::Ablation).collect();
    let base = abl.iter().find(|r| r.run.variant.as_deref() == Some("base"));
    let mut ordered: Vec<&RunRecord> = Vec::new();
    ordered.extend(base);
    ordered.extend(abl.iter().filter(|r| r.run.variant.as_deref() != Some("base")));
    for r in ordered {
        let c = r.counts;
        let _ = write!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.run.variant.as_deref().unwrap_or(""),
            r.id(),
            r.run.model,
            r.run.window.window,
            r.run.window.horizon,
            c.map(|c| c.features.to_string()).unwrap_or_default(),
            c.map(|c| c.test.to_string()).unwrap_or_default(),
            if r.is_ok() { "ok" } else { "failed" }
        );
        for m in Metric::ALL {
            let v = r.metric(m);
            let delta = match (v, base.and_then(|b| b.metric(m))) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            };
            let _ = write!(text, ",{},{}", fmt_opt(v), fmt_opt(delta));
        }
        match &r.versus_base {
            Some(t) => {
                let _ = writeln!(text, ",{},{},{},{}", t.b, t.c, t.p_value, t.n_paired);
            }
            None => text.push_str(",,,,\n"),
        }
    }
    text
}

fn long_table(records: &[RunRecord]) -> String {
    let mut text = String::from("run_id,group,variant,model,window,horizon,metric,value,ci_lo,ci_hi,n_test\n");
    for r in records {
        let Some(m) = &r.metrics else { continue };
        for metric in Metric::ALL {
            let v = m.get(metric);
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.id(),
                match r.run.group {
                    RunGroup::Grid => "grid",
                    RunGroup::Ablation => "ablation",
                },
                r.run.variant.as_deref().unwrap_or(""),
                r.run.model,
                r.run.window.window,
                r.run.window.horizon,
                metric.name(),
                fmt_opt(v.value),
                fmt_opt(v.ci.map(|c| c.lo)),
                fmt_opt(v.ci.map(|c| c.hi)),
                m.n
            );
        }
    }
    text
}

/// Writes the top-level report files from run records: `summary.csv`,
/// `summary_all.csv`, `summary_long.csv`, `confusion.csv`,
/// `importance.csv`, `mcnemar.csv`, `errors.csv` and, when ablation runs
/// are present, `ablations.csv`.
pub fn emit_report(records: &[RunRecord], summary_models: &[ModelKind], out_dir: &Path) -> Result<(), PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::Other("no run records to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut records = records.to_vec();
    records.sort_by(|a, b| a.run.run_id.cmp(&b.run.run_id));

    write(&out_dir.join("summary.csv"), recall_table(&records, summary_models).as_bytes())?;
    write(&out_dir.join("summary_all.csv"), recall_table(&records, &ModelKind::ALL).as_bytes())?;
    write(&out_dir.join("summary_long.csv"), long_table(&records).as_bytes())?;

    let mut confusion = String::from("run_id,model,window,horizon,tp,fp,fn,tn\n");
    let mut importance = String::from("run_id,rank,feature,importance\n");
    let mut paired = String::from("window,horizon,model_a,model_b,b,c,statistic,p_value,method,n_paired\n");
    let mut errors = String::from("run_id,error\n");
    for r in &records {
        if let Some(m) = &r.metrics {
            let c = m.confusion;
            let _ = writeln!(
                confusion,
                "{},{},{},{},{},{},{},{}",
                r.id(),
                r.run.model,
                r.run.window.window,
                r.run.window.horizon,
                c.tp,
                c.fp,
                c.fn_,
                c.tn
            );
        }
        for (i, f) in r.importance.iter().enumerate() {
            let _ = writeln!(importance, "{},{},{},{}", r.id(), i + 1, f.feature, f.importance);
        }
        if r.run.group == RunGroup::Grid {
            for t in &r.mcnemar {
                // Each unordered pair once, from the lexicographically smaller id.
                if r.id() < t.other.as_str() {
                    let other_model = records
                        .iter()
                        .find(|o| o.id() == t.other)
                        .map(|o| o.run.model.to_string())
                        .unwrap_or_default();
                    let _ = writeln!(
                        paired,
                        "{},{},{},{},{},{},{},{},{},{}",
                        r.run.window.window,
                        r.run.window.horizon,
                        r.run.model,
                        other_model,
                        t.b,
                        t.c,
                        t.statistic,
                        t.p_value,
                        match t.method {
                            McNemarMethod::ExactBinomial => "exact",
                            McNemarMethod::ChiSquared => "chi2",
                        },
                        t.n_paired
                    );
                }
            }
        }
        if let Some(e) = &r.error {
            let _ = writeln!(errors, "{},\"{}\"", r.id(), e.replace('"', "\"\""));
        }
    }
    write(&out_dir.join("confusion.csv"), confusion.as_bytes())?;
    write(&out_dir.join("importance.csv"), importance.as_bytes())?;
    write(&out_dir.join("mcnemar.csv"), paired.as_bytes())?;
    write(&out_dir.join("errors.csv"), errors.as_bytes())?;
    if records.iter().any(|r| r.run.group == RunGroup::Ablation) {
        write(&out_dir.join("ablations.csv"), ablation_table(&records).as_bytes())?;
    }
    Ok(())
}

/// Per-run artifacts plus the top-level report.
pub fn write_outputs(outcomes: &[RunOutcome], summary_models: &[ModelKind], out_dir: &Path) -> Result<(), PipelineError> {
    write_run_artifacts(outcomes, out_dir)?;
    let records: Vec<RunRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    emit_report(&records, summary_models, out_dir)
}

/// Writes a SMOTE audit for a run's balanced training split.
pub fn write_smote_audit(audit: &[crate::balance::SynthesisRecord], path: &Path) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(io(path))?;
    write_audit(audit, file).map_err(|e| PipelineError::Other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;

    fn small_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.data.synthetic.faults.truncate(8);
        cfg.data.synthetic.duration_minutes = cfg.data.synthetic.faults[7].end() + 300;
        cfg.models.random_forest.n_trees = 10;
        cfg.models.boosted.rounds = 10;
        cfg.models.logistic_regression.epochs = 50;
        cfg.models.isolation_forest.n_trees = 10;
        cfg.eval.n_resamples = 50;
        cfg
    }

    #[test]
    fn grid_counts_and_ids() {
        let cfg = PipelineConfig::default();
        let plan = ExperimentPlan::grid(&cfg, &ThresholdSet::table_defaults());
        assert_eq!(plan.runs.len(), 48);
        let mut ids: Vec<&str> = plan.runs.iter().map(|r| r.run_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 48);
        assert!(ids.contains(&"w060-h05-random_forest"));
        assert!(plan.runs.iter().filter(|r| r.smote.is_some()).all(|r| r.model.uses_balanced_training()));
    }

    #[test]
    fn ablation_variants_change_one_factor() {
        let cfg = PipelineConfig::default();
        let plan = ExperimentPlan::ablations(&cfg, &ThresholdSet::table_defaults());
        let base = &plan.runs[0];
        assert_eq!(base.variant.as_deref(), Some("base"));
        // 6 single variants + 2 window + 2 horizon sweeps.
        assert_eq!(plan.runs.len(), 1 + 6 + 2 + 2);
        for r in &plan.runs[1..] {
            let mut diffs = 0;
            diffs += usize::from(r.smote != base.smote && r.window == base.window);
            diffs += usize::from(r.features != base.features);
            diffs += usize::from(r.label_scheme != base.label_scheme);
            diffs += usize::from(r.window.window != base.window.window);
            diffs += usize::from(r.window.horizon != base.window.horizon);
            assert_eq!(diffs, 1, "{}", r.run_id);
        }
        let no_smote = plan.runs.iter().find(|r| r.variant.as_deref() == Some("no_smote")).unwrap();
        assert_eq!(no_smote.seeds, base.seeds);
    }

    #[test]
    fn small_grid_runs_and_reports() {
        let mut cfg = small_config();
        cfg.windows.windows = vec![60];
        cfg.windows.horizons = vec![5];
        let (series, _) = pipeline::load_series(&cfg.data).unwrap();
        let plan = ExperimentPlan::grid(&cfg, &ThresholdSet::table_defaults());
        let outcomes = run_plan(&plan, &series);
        assert_eq!(outcomes.len(), 8);
        for o in &outcomes {
            assert!(o.record.is_ok(), "{}: {:?}", o.record.id(), o.record.error);
            assert_eq!(o.record.mcnemar.len(), 7);
        }
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&outcomes, &cfg.report.summary_models, dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 3);
        assert!(summary.starts_with("model,window,early_warning_h5,normal_h5\nrandom_forest,60,"));
        let mcn = fs::read_to_string(dir.path().join("mcnemar.csv")).unwrap();
        assert_eq!(mcn.lines().count(), 1 + 28);

        // Re-emitting from the saved records reproduces the files.
        let before: Vec<Vec<u8>> = ["summary.csv", "summary_long.csv", "mcnemar.csv", "confusion.csv"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        let records = load_records(dir.path()).unwrap();
        assert_eq!(records.len(), 8);
        emit_report(&records, &cfg.report.summary_models, dir.path()).unwrap();
        let after: Vec<Vec<u8>> = ["summary.csv", "summary_long.csv", "mcnemar.csv", "confusion.csv"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut cfg = small_config();
        cfg.windows.windows = vec![60];
        cfg.windows.horizons = vec![5];
        cfg.models.include = vec![ModelKind::Majority, ModelKind::RandomForest];
        let (series, _) = pipeline::load_series(&cfg.data).unwrap();
        let mut plan = ExperimentPlan::grid(&cfg, &ThresholdSet::table_defaults());
        // An impossible window for one run only.
        plan.runs[1].window.window = 1_000_000;
        let outcomes = run_plan(&plan, &series);
        assert_eq!(outcomes.iter().filter(|o| o.record.is_ok()).count(), 1);
        assert!(outcomes.iter().any(|o| o.record.error.as_deref().is_some_and(|e| e.contains("shorter"))));
    }
}
