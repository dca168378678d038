use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use driftbench_core::bayes::{run_mcmc, McmcConfig, PriorSpec, QDensity};
use driftbench_core::{
    fit_minimum_contrast, simulate_observations, EstimatorConfig, ModelParams, PathConfig, ResolutionRule,
    WaveletBasis,
};

fn analyze(c: &mut Criterion) {
    let basis = WaveletBasis::daubechies(8, 10).unwrap();
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let mut group = c.benchmark_group("analyze");
    for m in [4usize, 7, 10] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| basis.analyze(model.drift().function(), m).unwrap())
        });
    }
    group.finish();
}

fn simulate(c: &mut Criterion) {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    for n in [1usize << 10, 1 << 14] {
        let cfg = PathConfig::new(n, (n as f64).powf(-0.6), 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |b, cfg| {
            b.iter(|| simulate_observations(&model, cfg).unwrap())
        });
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let basis = WaveletBasis::daubechies(8, 10).unwrap();
    let obs = simulate_observations(&model, &PathConfig::new(1 << 14, 0.003, 2)).unwrap();
    let mut group = c.benchmark_group("fit");
    group.sample_size(20);
    for level in [2usize, 4, 6] {
        let est = EstimatorConfig::new(ResolutionRule::Fixed { level }, model.drift().k0(), basis.clone()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(level), &est, |b, est| {
            b.iter(|| fit_minimum_contrast(&obs, est).unwrap())
        });
    }
    group.finish();
}

fn mcmc(c: &mut Criterion) {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let basis = WaveletBasis::daubechies(8, 10).unwrap();
    let obs = simulate_observations(&model, &PathConfig::new(1 << 12, 0.006, 3)).unwrap();
    let prior = PriorSpec::sieve(basis, 4.0, QDensity::symmetric_uniform(4.0), 6).unwrap();
    let mut group = c.benchmark_group("mcmc");
    group.sample_size(10);
    group.bench_function("sieve_5000", |b| {
        b.iter(|| run_mcmc(&prior, &obs, model.sigma(), &McmcConfig::new(5000, 1000, 4)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, analyze, simulate, fit, mcmc);
criterion_main!(benches);
