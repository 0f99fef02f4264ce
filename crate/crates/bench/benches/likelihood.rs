use arrival_bench::{partition, weekly_dataset};
use arrival_core::likelihood::PartialLikelihood;
use arrival_core::simulator::{simulate_survey, ScenarioConfig};
use arrival_core::{fit, FitConfig, ModelParams};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

fn likelihood(c: &mut Criterion) {
    let d = weekly_dataset(100_000);
    let mut g = c.benchmark_group("likelihood");
    for spec in ["constant", "every-10-weekdays"] {
        let part = partition(&d, spec);
        let lik = PartialLikelihood::new(&d, &part).unwrap();
        let params = ModelParams::new(0.2, vec![2.0; part.n_strata()]).unwrap();
        g.bench_function(format!("evaluate/{spec}"), |b| {
            b.iter(|| lik.evaluate(black_box(&params)).unwrap())
        });
        g.bench_function(format!("loglik/{spec}"), |b| {
            b.iter(|| lik.loglik(black_box(&params)).unwrap())
        });
    }
    g.finish();
}

fn fitting(c: &mut Criterion) {
    let d = weekly_dataset(100_000);
    let mut g = c.benchmark_group("fit");
    g.sample_size(20);
    for spec in ["constant", "weekday-classes", "every-10-weekdays"] {
        let part = partition(&d, spec);
        g.bench_function(spec, |b| {
            b.iter(|| fit(black_box(&d), &part, &FitConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(20);
    g.bench_function("weekly/100k", |b| {
        b.iter_batched(
            || ScenarioConfig::fevs_like(100_000, 7),
            |cfg| simulate_survey(&cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, likelihood, fitting, simulation);
criterion_main!(benches);
