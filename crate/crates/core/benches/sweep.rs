use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lte_mapper_core::sim::survey::SurveyPlan;
use lte_mapper_core::sim::Scenario;
use lte_mapper_core::sweep::{floor_gain_trial, for_seeds, for_seeds_sequential, recovery_trial};

fn recovery(c: &mut Criterion) {
    let mut s = Scenario::default();
    s.buildings[0].facade_away_penalty = 0.0;
    let seeds: Vec<u64> = (0..20).collect();
    let trial = |seed| recovery_trial(&s, "default", 500, seed).unwrap().loss_mean;
    let mut g = c.benchmark_group("recovery_20_seeds");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("sweep", "sequential"), |b| {
        b.iter(|| for_seeds_sequential(&seeds, trial))
    });
    g.bench_function(BenchmarkId::new("sweep", "for_seeds"), |b| {
        b.iter(|| for_seeds(&seeds, trial))
    });
    g.finish();
}

fn surveys(c: &mut Criterion) {
    let s = Scenario::default();
    let mut plan = SurveyPlan::new("default");
    plan.outdoor_positions = 8;
    let seeds: Vec<u64> = (0..8).collect();
    let trial = |seed| floor_gain_trial(&s, &plan, 1.., seed).unwrap().slope;
    let mut g = c.benchmark_group("survey_8_seeds");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("sweep", "sequential"), |b| {
        b.iter(|| for_seeds_sequential(&seeds, trial))
    });
    g.bench_function(BenchmarkId::new("sweep", "for_seeds"), |b| {
        b.iter(|| for_seeds(&seeds, trial))
    });
    g.finish();
}

criterion_group!(benches, recovery, surveys);
criterion_main!(benches);
