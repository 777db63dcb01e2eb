use pumpcast::config::PipelineConfig;
use pumpcast::experiments::{run_plan, ExperimentPlan, RunSpec};
use pumpcast::models::ModelKind;
use pumpcast::features::SplitTag;
use pumpcast::pipeline::{self, PipelineError};
use pumpcast::ThresholdSet;

fn small() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.data.synthetic.faults.truncate(8);
    cfg.data.synthetic.duration_minutes = cfg.data.synthetic.faults[7].end() + 300;
    cfg.windows.windows = vec![30];
    cfg.windows.horizons = vec![5];
    cfg.models.random_forest.n_trees = 10;
    cfg.models.boosted.rounds = 10;
    cfg.models.isolation_forest.n_trees = 10;
    cfg.eval.n_resamples = 50;
    cfg
}

#[test]
fn results_do_not_depend_on_run_order() {
    let cfg = small();
    let (series, _) = pipeline::load_series(&cfg.data).unwrap();
    let plan = ExperimentPlan::grid(&cfg, &ThresholdSet::table_defaults());
    let mut reversed = plan.clone();
    reversed.runs.reverse();
    let a = run_plan(&plan, &series);
    let b = run_plan(&reversed, &series);
    let records = |o: &[pumpcast::experiments::RunOutcome]| {
        let mut r: Vec<String> = o.iter().map(|x| serde_json::to_string(&x.record).unwrap()).collect();
        r.sort();
        r
    };
    assert_eq!(records(&a), records(&b));
}

#[test]
fn run_record_reproduces_its_run() {
    let cfg = small();
    let (series, _) = pipeline::load_series(&cfg.data).unwrap();
    let plan = ExperimentPlan::grid(&cfg, &ThresholdSet::table_defaults());
    let first = run_plan(&plan, &series)
        .into_iter()
        .find(|o| o.record.run.model == ModelKind::RandomForest)
        .unwrap();

    let echoed: RunSpec = serde_json::from_str(&serde_json::to_string(&first.record.run).unwrap()).unwrap();
    let mut again = run_plan(&ExperimentPlan { runs: vec![echoed] }, &series).remove(0);
    // Paired tests need the other models of the cell; everything else must match.
    assert!(again.record.mcnemar.is_empty());
    again.record.mcnemar = first.record.mcnemar.clone();
    assert_eq!(again.record, first.record);
    assert_eq!(again.predictions, first.predictions);
}

#[test]
fn test_split_never_reaches_smote() {
    let cfg = small();
    let (series, _) = pipeline::load_series(&cfg.data).unwrap();
    let labeled = pipeline::label(&series, &ThresholdSet::table_defaults(), cfg.thresholds.scheme);
    let split = pipeline::prepare_split(
        &labeled,
        pumpcast::features::WindowConfig::new(30, 5),
        &cfg.features.options(),
        &cfg.split,
    )
    .unwrap();
    assert_eq!(split.test.split, SplitTag::Test);
    let smote = cfg.smote.with_seed(1).unwrap();
    assert!(matches!(pipeline::balance(&split.test, Some(&smote)), Err(PipelineError::Balance(_))));
}
