use std::f64::consts::{PI, SQRT_2, TAU};

use driftbench_core::bayes::{
    drift_from_logdensity, girsanov_loglik_ratio, kl_checks, log_pseudo_likelihood, mh_accept_prob,
    posterior_ball_mass, run_mcmc, run_mcmc_with, sample_prior, sample_prior_at, transition_log_density,
    BallReference, KlCheckConfig, Likelihood, McmcConfig, PosteriorChain, PriorSpec, QDensity, SufficientStats,
};
use driftbench_core::estimator::{fit_minimum_contrast, EstimatorConfig, RateSchedule, ResolutionRule};
use driftbench_core::function::PeriodicFunction;
use driftbench_core::model::{DriftSpec, ModelParams, SigmaSpec};
use driftbench_core::path::{rng_for, simulate_fine, simulate_observations, Coefficients, Observations, PathConfig};
use driftbench_core::stats::{ks_statistic, Estimate};
use driftbench_core::wavelet::{l2_distance, CoefficientVector, WaveletBasis};

fn db8(max_level: usize) -> WaveletBasis {
    WaveletBasis::daubechies(8, max_level).unwrap()
}

fn wavy_sigma() -> SigmaSpec {
    SigmaSpec::from_function(PeriodicFunction::from_fn(|x| 1.0 + 0.25 * (TAU * x).sin())).unwrap()
}

#[test]
fn prior_draws_lie_in_theta() {
    let q = QDensity::symmetric_uniform(1.0);
    let priors = [
        PriorSpec::sieve(db8(6), 1.0, q, 5).unwrap(),
        PriorSpec::known_smoothness(db8(6), 2.0, 1.0, q, 4).unwrap(),
        PriorSpec::invariant_density(db8(6), 2.0, 1.0, q, 4, wavy_sigma()).unwrap(),
    ];
    let mut rng = rng_for(3);
    for prior in &priors {
        let k0 = prior.implied_k0();
        assert!(k0.is_finite() && k0 > 0.0);
        for _ in 0..300 {
            let draw = sample_prior(prior, &mut rng);
            let drift = prior.drift(&draw.coeffs, None).unwrap();
            assert!(drift.c1_norm() <= k0 * (1.0 + 1e-9), "{:?}: {} > {k0}", prior.kind, drift.c1_norm());
        }
    }
}

#[test]
fn uniform_coefficients_respect_support_and_mean() {
    let q = QDensity::Uniform { lo: 0.0, hi: 1.0 };
    let prior = PriorSpec::known_smoothness(db8(4), 1.5, 1.0, q, 3).unwrap();
    let mut rng = rng_for(4);
    let mut us = Vec::with_capacity(100_000);
    while us.len() < 100_000 {
        let d = sample_prior(&prior, &mut rng);
        for (j, (c, u)) in d.coeffs.values().iter().zip(d.u.values()).enumerate() {
            let tau = prior.tau_index(j);
            assert!(c.abs() / tau <= 1.0 + 1e-15);
            assert!((c - tau * u).abs() < 1e-15);
        }
        us.extend_from_slice(d.u.values());
    }
    assert!(Estimate::mean_of(&us).within(0.5, 3.0));
}

#[test]
fn sieve_resolution_frequencies_follow_h() {
    let direct: f64 = (1..40).map(|j| (-(2f64.powi(j))).exp()).sum();
    let h1 = (-2.0f64).exp() / direct;
    let prior = PriorSpec::sieve(db8(8), 1.0, QDensity::symmetric_uniform(1.0), 8).unwrap();
    let mut rng = rng_for(5);
    let draws = 100_000;
    let ones = (0..draws).filter(|_| sample_prior(&prior, &mut rng).m == 1).count() as f64 / draws as f64;
    let se = (h1 * (1.0 - h1) / draws as f64).sqrt();
    assert!((ones - h1).abs() <= 3.0 * se, "{ones} vs {h1}");
}

#[test]
fn constant_log_density_gives_zero_drift() {
    let basis = db8(5);
    let h = CoefficientVector::unit(3, -1, 0).unwrap().scaled(0.7);
    let b = drift_from_logdensity(&basis, &h, &SigmaSpec::constant(1.0).unwrap(), None).unwrap();
    for i in 0..64 {
        assert!(b.eval(i as f64 / 64.0).abs() < 1e-9);
    }
}

#[test]
fn sine_log_density_gives_cosine_drift() {
    let basis = WaveletBasis::fourier(4).unwrap();
    let mut h = CoefficientVector::zeros(2);
    // index 2 of the Fourier family is sqrt(2) sin(2 pi x)
    h.values_mut()[2] = 1.0 / SQRT_2;
    let b = drift_from_logdensity(&basis, &h, &SigmaSpec::constant(1.0).unwrap(), None).unwrap();
    for i in 0..200 {
        let x = i as f64 / 200.0;
        assert!((b.eval(x) - PI * (TAU * x).cos()).abs() < 1e-9);
    }
}

#[test]
fn drift_from_log_density_round_trip() {
    let basis = db8(6);
    let mut rng = rng_for(6);
    let prior = PriorSpec::invariant_density(basis.clone(), 2.0, 1.0, QDensity::symmetric_uniform(1.0), 4, wavy_sigma())
        .unwrap();
    for _ in 0..5 {
        let draw = sample_prior_at(&prior, 4, &mut rng);
        let drift = prior.drift(&draw.coeffs, None).unwrap();
        let model = ModelParams::new(drift, wavy_sigma());
        assert!(model.integrated_drift(1.0).abs() < 1e-6);
        let hf = basis.synthesize(&draw.coeffs).unwrap();
        let d = model.density();
        let cells = d.cells();
        let raw: Vec<f64> = (0..cells).map(|i| hf.eval((i as f64 + 0.5) / cells as f64).exp()).collect();
        let z = raw.iter().sum::<f64>() / cells as f64;
        let l1: f64 = raw
            .iter()
            .enumerate()
            .map(|(i, r)| (r / z - d.value_at((i as f64 + 0.5) / cells as f64)).abs())
            .sum::<f64>()
            / cells as f64;
        assert!(l1 < 1e-4, "L1 {l1}");
    }
}

#[test]
fn brownian_pseudo_likelihood_of_one_transition() {
    let sigma = SigmaSpec::constant(1.0).unwrap();
    let obs = Observations::new(0.01, vec![0.3, 0.34]).unwrap();
    let want = -0.5 * (2.0 * PI * 0.01).ln() - 0.04f64.powi(2) / 0.02;
    let got = log_pseudo_likelihood(&DriftSpec::zero(), &sigma, &obs);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn pseudo_likelihood_is_periodic_in_the_samples() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let obs = simulate_observations(&model, &PathConfig::new(200, 0.01, 9)).unwrap();
    let base = log_pseudo_likelihood(model.drift(), model.sigma(), &obs);
    let mut shifted = obs.clone();
    shifted.samples[57] += 3.0;
    shifted.samples[0] -= 1.0;
    let moved = log_pseudo_likelihood(model.drift(), model.sigma(), &shifted);
    assert!((base - moved).abs() < 1e-8 * base.abs().max(1.0));
}

#[test]
fn true_drift_has_higher_pseudo_likelihood() {
    let m0 = ModelParams::cosine(PI, 1.0).unwrap();
    let b1 = DriftSpec::cosine(-PI);
    let diffs: Vec<f64> = (0..50)
        .map(|r| {
            let obs = simulate_observations(&m0, &PathConfig::new(2000, 0.01, 300 + r)).unwrap();
            log_pseudo_likelihood(m0.drift(), m0.sigma(), &obs) - log_pseudo_likelihood(&b1, m0.sigma(), &obs)
        })
        .collect();
    assert!(Estimate::mean_of(&diffs).value > 0.0);
}

#[test]
fn transition_density_uses_the_wrapped_increment() {
    let sigma = SigmaSpec::constant(0.5).unwrap();
    let b = DriftSpec::constant(0.3);
    let a = transition_log_density(&b, &sigma, 0.01, 0.98, 1.01);
    let w = transition_log_density(&b, &sigma, 0.01, -0.02, 0.01);
    assert!((a - w).abs() < 1e-12);
}

#[test]
fn girsanov_ratio_is_zero_for_equal_drifts_and_antisymmetric() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let coef = Coefficients::new(&model);
    let mut rng = rng_for(12);
    let path = simulate_fine(&coef, 0.1, 1e-3, 500, &mut rng);
    let b0 = model.drift();
    let b = DriftSpec::cosine(2.0);
    let sigma = model.sigma();
    assert_eq!(girsanov_loglik_ratio(b0, b0, sigma, &path), 0.0);
    let ab = girsanov_loglik_ratio(b0, &b, sigma, &path);
    let ba = girsanov_loglik_ratio(&b, b0, sigma, &path);
    assert!((ab + ba).abs() < 1e-12 * ab.abs().max(1.0));
}

#[test]
fn girsanov_mean_matches_weighted_norm() {
    let m0 = ModelParams::cosine(PI, 1.0).unwrap();
    let m = m0.with_drift(DriftSpec::cosine(2.0));
    let cfg = KlCheckConfig { n: 16, delta: 0.01, reps: 10, short_paths: 20_000, substeps: 20, seed: 4 };
    let rep = kl_checks(&m0, &m, &cfg).unwrap();
    assert!(rep.kl_transition.within(rep.kl_transition_oracle, 3.0), "{rep:?}");
    assert!(rep.kl_transition_cv.within(rep.kl_transition_oracle, 3.0), "{rep:?}");
    assert!(rep.kl_transition.value >= -3.0 * rep.kl_transition.se);
    assert!(rep.kl_invariant >= 0.0);
}

#[test]
fn kl_checks_vanish_for_identical_models() {
    let m0 = ModelParams::cosine(PI, 1.0).unwrap();
    let cfg = KlCheckConfig { n: 32, delta: 0.01, reps: 20, short_paths: 100, substeps: 10, seed: 1 };
    let rep = kl_checks(&m0, &m0.clone(), &cfg).unwrap();
    assert_eq!(rep.kl_transition.value, 0.0);
    assert_eq!(rep.kl_joint.value, 0.0);
    assert_eq!(rep.var_joint.value, 0.0);
    assert_eq!(rep.kl_invariant, 0.0);
    assert_eq!(rep.l2_distance, 0.0);
}

#[test]
fn flat_likelihood_chain_recovers_q() {
    let q = QDensity::symmetric_uniform(1.0);
    let prior = PriorSpec::known_smoothness(db8(4), 2.0, 1.0, q, 2).unwrap();
    let chain = run_mcmc_with(&prior, Likelihood::Flat, &McmcConfig::new(101_000, 1_000, 8)).unwrap();
    assert_eq!(chain.len(), 100_000);
    for j in 0..4 {
        let tau = prior.tau_index(j);
        let us: Vec<f64> = chain.draws.iter().map(|d| d.coeffs.values()[j] / tau).collect();
        let ks = ks_statistic(&us, |u| q.cdf(u));
        assert!(ks < 0.02, "coordinate {j}: KS {ks}");
    }
    assert!((0.0..=1.0).contains(&chain.within.rate()));
}

#[test]
fn sieve_level_moves_target_h() {
    // a three-state resolution chain with a chosen mass function
    let mut prior = PriorSpec::sieve(db8(4), 1.0, QDensity::symmetric_uniform(1.0), 3).unwrap();
    prior.h = vec![0.2, 0.5, 0.3];
    let chain = run_mcmc_with(&prior, Likelihood::Flat, &McmcConfig::new(201_000, 1_000, 9)).unwrap();
    let freq = chain.level_frequencies(3);
    let l1: f64 = (1..=3).map(|m| (freq[m] - prior.h[m - 1]).abs()).sum();
    assert!(l1 < 0.01, "{freq:?}");
    assert!(chain.birth.proposed > 0 && chain.death.proposed > 0);
}

#[test]
fn symmetric_equal_target_always_accepts() {
    assert_eq!(mh_accept_prob(1.5, 1.5, -0.2, -0.2), 1.0);
}

#[test]
fn chain_aborts_when_nothing_is_accepted() {
    let prior = PriorSpec::known_smoothness(db8(4), 2.0, 1.0, QDensity::symmetric_uniform(1.0), 1).unwrap();
    let stats = SufficientStats { dim: 2, delta: 1.0, gram: vec![1e14, 0.0, 0.0, 1e14], v: vec![0.0; 2], constant: 0.0 };
    let cfg = McmcConfig { step_scale: 0.4, ..McmcConfig::new(100, 10, 1) };
    assert!(run_mcmc_with(&prior, Likelihood::Euler(&stats), &cfg).is_err());
}

#[test]
fn chain_round_trips_through_jsonl_and_ball_mass_limits() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let obs = simulate_observations(&model, &PathConfig::new(2000, 0.01, 2)).unwrap();
    let prior = PriorSpec::sieve(db8(6), 4.0, QDensity::symmetric_uniform(4.0), 4).unwrap();
    let chain = run_mcmc(&prior, &obs, model.sigma(), &McmcConfig::new(600, 200, 3)).unwrap();
    let mut buf = Vec::new();
    chain.write_jsonl(&mut buf).unwrap();
    let back = PosteriorChain::read_jsonl(&buf[..]).unwrap();
    assert_eq!(back.len(), 400);
    assert_eq!(back, chain.draws);
    let first: serde_json::Value = serde_json::from_slice(buf.split(|b| *b == b'\n').next().unwrap()).unwrap();
    assert_eq!(first["iter"], 200);
    let reference = BallReference::new(model.drift().function(), &prior.basis).unwrap();
    assert_eq!(posterior_ball_mass(&chain, &reference, f64::INFINITY), 1.0);
    assert_eq!(posterior_ball_mass(&chain, &reference, 0.0), 0.0);
    let d = chain.draws.last().unwrap();
    let direct = l2_distance(&prior.basis.synthesize(&d.coeffs).unwrap(), model.drift().function());
    assert!((reference.distance(&d.coeffs) - direct).abs() < 1e-6);
}

#[test]
fn posterior_mean_competes_with_the_estimator() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let b0 = model.drift().function().clone();
    let basis = db8(8);
    let n = 1usize << 14;
    let delta = (n as f64).powf(-0.6);
    let prior = PriorSpec::sieve(basis.clone(), 4.0, QDensity::symmetric_uniform(4.0), 6).unwrap();
    let est = EstimatorConfig::new(ResolutionRule::Rate(RateSchedule::new(2.0)), model.drift().k0(), basis.clone())
        .unwrap();
    let reference = BallReference::new(&b0, &basis).unwrap();
    let wins = (0..20)
        .filter(|r| {
            let obs = simulate_observations(&model, &PathConfig::new(n, delta, 40 + r).with_substeps(10)).unwrap();
            let chain = run_mcmc(&prior, &obs, model.sigma(), &McmcConfig::new(3000, 1000, 50 + r)).unwrap();
            let post = reference.distance(&chain.posterior_mean());
            let fit = fit_minimum_contrast(&obs, &est).unwrap();
            let fitted = l2_distance(&basis.synthesize(&fit.coeffs).unwrap(), &b0);
            post < 2.0 * fitted
        })
        .count();
    assert!(wins >= 16, "{wins}/20");
}
