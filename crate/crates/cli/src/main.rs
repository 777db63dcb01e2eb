use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use pumpcast::config::{ConfigError, PipelineConfig, SourceKind};
use pumpcast::eval::bootstrap_report;
use pumpcast::experiments::{self, ExperimentPlan, RunSeeds};
use pumpcast::features::WindowConfig;
use pumpcast::models::{model_from_json, model_to_json, ModelKind};
use pumpcast::pipeline::{self, ErrorClass, PipelineError};
use pumpcast::{par, ThresholdSet};

#[derive(Parser)]
#[command(name = "pumpcast", version, about = "Pump fault forecasting: label, window, balance, train, evaluate")]
struct Cli {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for data-parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Shuffle samples with this seed before the train/test cut.
    #[arg(long, global = true)]
    shuffle_split: Option<u64>,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic telemetry as CSV.
    Generate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label telemetry (configured source, or --input CSV).
    Label {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the windowed feature dataset for one (window, horizon).
    Features {
        #[arg(long)]
        window: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model on the training split and save it.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Model file to write (default: <output_dir>/model.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a saved model on the test split.
    Evaluate {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Directory for metrics.json and predictions.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (window, horizon, model) combination.
    Grid,
    /// Run the ablation suite against its base run.
    Ablate,
    /// Rebuild the top-level report from runs/*/metrics.json.
    Report {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if cli.shuffle_split.is_some() {
        cfg.split.shuffle_seed = cli.shuffle_split;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_input(cfg: &mut PipelineConfig, input: &Option<PathBuf>) {
    if let Some(path) = input {
        cfg.data.source = SourceKind::Csv;
        cfg.data.csv_path = Some(path.clone());
    }
}

fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<fs::File, PipelineError> {
    ensure_parent(path)?;
    fs::File::create(path).map_err(|e| PipelineError::io(path, e))
}

fn csv_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Other(e.to_string())
}

fn window(cfg: &PipelineConfig, window: usize, horizon: usize) -> Result<WindowConfig, PipelineError> {
    let w = WindowConfig { window, horizon, stride: cfg.windows.stride };
    w.validate()?;
    Ok(w)
}

/// Loads, labels, windows and splits according to the config.
fn prepare(
    cfg: &PipelineConfig,
    w: WindowConfig,
) -> Result<(ThresholdSet, pipeline::SplitData), PipelineError> {
    let (series, _) = pipeline::load_series(&cfg.data)?;
    let (thresholds, _) = pipeline::resolve_thresholds(cfg, &series)?;
    let labeled = pipeline::label(&series, &thresholds, cfg.thresholds.scheme);
    let split = pipeline::prepare_split(&labeled, w, &cfg.features.options(), &cfg.split)?;
    Ok((thresholds, split))
}

fn run_plan(cfg: &PipelineConfig, ablation: bool) -> Result<(), PipelineError> {
    let started = Instant::now();
    let (series, data) = pipeline::load_series(&cfg.data)?;
    let (thresholds, warnings) = pipeline::resolve_thresholds(cfg, &series)?;
    for w in warnings {
        eprintln!(
            "warning: {} adaptive limit {} above fixed {}; clamped",
            w.sensor, w.computed_adaptive, w.fixed
        );
    }
    let plan = if ablation {
        ExperimentPlan::ablations(cfg, &thresholds)
    } else {
        ExperimentPlan::grid(cfg, &thresholds)
    };
    eprintln!("{} records, {} runs", data.records, plan.runs.len());
    let outcomes = experiments::run_plan(&plan, &series);
    experiments::write_outputs(&outcomes, &cfg.report.summary_models, &cfg.output_dir)?;
    let failed = outcomes.iter().filter(|o| !o.record.is_ok()).count();
    eprintln!(
        "{} runs ({} failed) in {:.1}s -> {}",
        outcomes.len(),
        failed,
        started.elapsed().as_secs_f64(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(ConfigError::Invalid("no subcommand given (see --help)".into()).into());
    };
    match command {
        Command::Generate { out } => {
            let series = pumpcast::telemetry::generate_synthetic(&cfg.data.synthetic)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("telemetry.csv"));
            ensure_parent(&out)?;
            series.write_csv(&out)?;
            eprintln!("{} records -> {}", series.len(), out.display());
        }
        Command::Label { input, out } => {
            with_input(&mut cfg, &input);
            let (series, _) = pipeline::load_series(&cfg.data)?;
            let (thresholds, _) = pipeline::resolve_thresholds(&cfg, &series)?;
            let labeled = pipeline::label(&series, &thresholds, cfg.thresholds.scheme);
            let out = out.unwrap_or_else(|| cfg.output_dir.join("labels.csv"));
            labeled.to_csv(create(&out)?).map_err(csv_err)?;
            eprintln!("{} labels -> {}", labeled.len(), out.display());
        }
        Command::Features { window: l, horizon: h, input, out } => {
            with_input(&mut cfg, &input);
            let w = window(&cfg, l, h)?;
            let (series, _) = pipeline::load_series(&cfg.data)?;
            let (thresholds, _) = pipeline::resolve_thresholds(&cfg, &series)?;
            let labeled = pipeline::label(&series, &thresholds, cfg.thresholds.scheme);
            let data = pumpcast::features::build_dataset_with(&labeled, w, &cfg.features.options())?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join(format!("features_w{l}_h{h}.csv")));
            data.to_csv(create(&out)?).map_err(csv_err)?;
            eprintln!("{} samples -> {}", data.len(), out.display());
        }
        Command::Train { model, window: l, horizon: h, input, out } => {
            with_input(&mut cfg, &input);
            let w = window(&cfg, l, h)?;
            let (thresholds, split) = prepare(&cfg, w)?;
            let seeds = RunSeeds::derive(cfg.seed, model, &w);
            let smote = if model.uses_balanced_training() { cfg.smote.with_seed(seeds.smote) } else { None };
            let balanced = pipeline::balance(&split.train, smote.as_ref())?;
            let trained =
                pipeline::train_model(model, &cfg.models, seeds.model, &thresholds, &split.train, &balanced.dataset)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("model.json"));
            ensure_parent(&out)?;
            fs::write(&out, model_to_json(&trained)).map_err(|e| PipelineError::io(&out, e))?;
            if !balanced.audit.is_empty() {
                let audit = out.with_file_name("smote_audit.csv");
                experiments::write_smote_audit(&balanced.audit, &audit)?;
            }
            eprintln!(
                "{model}: trained on {} samples ({} synthetic) -> {}",
                balanced.dataset.len(),
                balanced.audit.len(),
                out.display()
            );
        }
        Command::Evaluate { model_file, window: l, horizon: h, input, out } => {
            with_input(&mut cfg, &input);
            let w = window(&cfg, l, h)?;
            let text = fs::read_to_string(&model_file).map_err(|e| PipelineError::io(&model_file, e))?;
            let model = model_from_json(&text)?;
            let (_, split) = prepare(&cfg, w)?;
            let preds = pipeline::predict(&model, &split.test)?;
            let bootstrap = cfg.eval.with_seed(pumpcast::seed::stage_seed(cfg.seed, "bootstrap/evaluate"));
            let report = bootstrap_report(&preds, &split.test.labels(), &bootstrap)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
            let mut json = serde_json::to_string_pretty(&report).expect("serializable");
            json.push('\n');
            let metrics = out.join("metrics.json");
            fs::write(&metrics, json).map_err(|e| PipelineError::io(&metrics, e))?;
            let mut csv = String::from("anchor_ts,truth,predicted,score\n");
            for (s, p) in split.test.samples.iter().zip(&preds) {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    s.anchor.map(|t| t.to_string()).unwrap_or_default(),
                    s.label.as_u8(),
                    p.label.as_u8(),
                    p.score
                ));
            }
            let pred_path = out.join("predictions.csv");
            fs::write(&pred_path, csv).map_err(|e| PipelineError::io(&pred_path, e))?;
            let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
            eprintln!(
                "recall {} specificity {} auroc {} on {} test samples -> {}",
                fmt(report.recall.value),
                fmt(report.specificity.value),
                fmt(report.auroc.value),
                report.n,
                out.display()
            );
        }
        Command::Grid => run_plan(&cfg, false)?,
        Command::Ablate => run_plan(&cfg, true)?,
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| cfg.output_dir.clone());
            let records = experiments::load_records(&dir)?;
            experiments::emit_report(&records, &cfg.report.summary_models, &dir)?;
            eprintln!("{} run records -> {}", records.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    match par::with_jobs(jobs, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = match e.class() {
                ErrorClass::Config => ("config", 2),
                ErrorClass::Data => ("data", 3),
                ErrorClass::Runtime => ("runtime", 1),
            };
            let body = serde_json::json!({ "error": { "class": class, "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
