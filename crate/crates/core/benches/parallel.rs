//! Rayon pool vs a single worker on the three data-parallel hot spots.
//!
//! Build with `--no-default-features` to time the plain-iterator fallback.

use criterion::{criterion_group, criterion_main, Criterion};
use pumpcast::eval::{bootstrap_report, BootstrapConfig};
use pumpcast::features::{build_dataset, WindowConfig};
use pumpcast::labeling::{label_series_with, LabelScheme};
use pumpcast::models::{train_forest, ForestConfig, Prediction};
use pumpcast::par;
use pumpcast::telemetry::{generate_synthetic, SyntheticProfile};
use pumpcast::{BinaryLabel, ThresholdSet};
use std::hint::black_box;

fn labeled() -> pumpcast::labeling::LabeledSeries {
    let series = generate_synthetic(&SyntheticProfile::reference_pump()).unwrap();
    label_series_with(&series.slice(0, 4000), &ThresholdSet::table_defaults(), LabelScheme::DualThreshold)
}

fn bench(c: &mut Criterion) {
    let labeled = labeled();
    let data = build_dataset(&labeled, WindowConfig::new(60, 5)).unwrap();
    let forest = ForestConfig { n_trees: 50, seed: 7, ..ForestConfig::default() };

    let truth: Vec<BinaryLabel> = data.samples.iter().map(|s| s.label).collect();
    let preds: Vec<Prediction> = truth
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let hit = t.is_positive() != (i % 7 == 0);
            Prediction::from_score(if hit { 0.9 } else { 0.1 })
        })
        .collect();
    let boot = BootstrapConfig { n_resamples: 500, seed: 3, ..BootstrapConfig::default() };

    for (name, jobs) in [("pool", 0usize), ("single", 1)] {
        let mut g = c.benchmark_group(name);
        g.sample_size(10);
        g.bench_function("windows", |b| {
            b.iter(|| par::with_jobs(jobs, || build_dataset(black_box(&labeled), WindowConfig::new(60, 5)).unwrap()))
        });
        g.bench_function("forest", |b| b.iter(|| par::with_jobs(jobs, || train_forest(black_box(&data), &forest).unwrap())));
        g.bench_function("bootstrap", |b| {
            b.iter(|| par::with_jobs(jobs, || bootstrap_report(black_box(&preds), &truth, &boot).unwrap()))
        });
        g.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
