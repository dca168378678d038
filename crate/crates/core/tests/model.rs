use std::f64::consts::{PI, TAU};

use driftbench_core::function::{PeriodicFunction, TrigSeries};
use driftbench_core::model::{density_differences, hellinger_invariant, kl_invariant, DriftSpec, ModelParams, SigmaSpec};
use driftbench_core::path::{rng_for, simulate_fine, Coefficients};
use driftbench_core::stats::{ks_statistic, Estimate};
use driftbench_core::wavelet::l2_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Composite Simpson on `[a, b]` with `2^16` panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 1 << 16;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn random_model(rng: &mut ChaCha8Rng) -> ModelParams {
    let cos = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sin = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let series = TrigSeries::new(rng.random_range(-0.5..0.5), cos, sin);
    let d = series.derivative();
    let drift = DriftSpec::tight(PeriodicFunction::trig(series), PeriodicFunction::trig(d));
    let amp = rng.random_range(0.0..0.3);
    let phase = rng.random_range(0.0..1.0);
    let sigma = SigmaSpec::from_function(PeriodicFunction::from_fn(move |x| 1.0 + amp * (TAU * (x + phase)).cos()))
        .unwrap();
    ModelParams::new(drift, sigma)
}

fn perturbed(model: &ModelParams, scale: f64, rng: &mut ChaCha8Rng) -> ModelParams {
    let cos: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sin: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = TrigSeries::new(0.0, cos, sin);
    let h = h.scaled(scale / h.l2_norm());
    let f = model.drift().function().add(&PeriodicFunction::trig(h.clone()));
    let d = model.drift().derivative().add(&PeriodicFunction::trig(h.derivative()));
    model.with_drift(DriftSpec::tight(f, d))
}

#[test]
fn cosine_drift_integrated_and_density_match_quadrature() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    assert!((model.integrated_drift(0.25) - 1.0).abs() < 1e-9);
    let g = simpson(|y| (TAU * y).sin().exp(), 0.0, 1.0);
    assert!((g - 1.266_065_877_752_008_4).abs() < 1e-12);
    let d = model.density();
    assert!((d.value_at(0.25) - std::f64::consts::E / g).abs() < 1e-6);
    assert!((d.integral() - 1.0).abs() < 1e-12);
    // H_b = G * int e^{-I}: both integrals of the display equal G here
    let h_oracle = g * simpson(|y| (-(TAU * y).sin()).exp(), 0.0, 1.0);
    assert!((d.normalizer() - h_oracle).abs() < 1e-5 * h_oracle);
}

#[test]
fn density_matches_formula_for_nonzero_period_integral() {
    // constant drift with variable sigma: I_b(1) != 0
    let sigma = SigmaSpec::from_function(PeriodicFunction::from_fn(|x| 1.0 + 0.3 * (TAU * x).sin())).unwrap();
    let model = ModelParams::new(DriftSpec::constant(0.7), sigma);
    let s2 = |x: f64| (1.0 + 0.3 * (TAU * x).sin()).powi(2);
    // fine trapezoid tables on 2^18 cells
    let n = 1usize << 18;
    let h = 1.0 / n as f64;
    let mut i_b = vec![0.0; n + 1];
    for k in 0..n {
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        i_b[k + 1] = i_b[k] + 0.5 * h * (1.4 / s2(a) + 1.4 / s2(b));
    }
    let mut j = vec![0.0; n + 1];
    for k in 0..n {
        j[k + 1] = j[k] + 0.5 * h * ((-i_b[k]).exp() + (-i_b[k + 1]).exp());
    }
    let (i1, j1) = (i_b[n], j[n]);
    let raw: Vec<f64> = (0..=n)
        .map(|k| i_b[k].exp() / s2(k as f64 * h) * (i1.exp() * (j1 - j[k]) + j[k]))
        .collect();
    let z: f64 = h * (raw[1..n].iter().sum::<f64>() + 0.5 * (raw[0] + raw[n]));
    for &x in &[0.0, 0.3125, 0.75] {
        let got = model.density().value_at(x);
        let want = raw[(x * n as f64) as usize] / z;
        assert!((got - want).abs() < 1e-6, "x={x}: {got} vs {want}");
    }
    assert!((model.density().normalizer() - z).abs() < 1e-6 * z);
}

#[test]
fn densities_are_normalized_and_within_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let model = random_model(&mut rng);
        let d = model.density();
        assert!((d.integral() - 1.0).abs() < 1e-8);
        assert!(d.values().iter().all(|v| *v >= 0.0));
        assert_eq!(d.cdf()[0], 0.0);
        assert_eq!(*d.cdf().last().unwrap(), 1.0);
        assert!(d.cdf().windows(2).all(|w| w[1] >= w[0]));
        let (lo, hi) = model.density_bounds();
        assert!(d.min_value() >= lo && d.max_value() <= hi);
    }
}

#[test]
fn invariant_density_grid_size_is_checked() {
    let model = ModelParams::brownian(1.0).unwrap();
    assert!(model.invariant_density(32).is_err());
    let d = model.invariant_density(128).unwrap();
    assert_eq!(d.cells(), 128);
}

#[test]
fn uniform_sampling_ks() {
    let d = ModelParams::brownian(1.0).unwrap().density().clone();
    let mut rng = rng_for(4);
    let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
    assert!(ks_statistic(&xs, |x| x) < 0.01);
    assert_eq!(d.quantile(0.0), 0.0);
    assert!(d.quantile(1.0 - 1e-12) > 1.0 - 1e-9);
}

#[test]
fn histogram_of_draws_matches_density() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let d = model.density();
    let mut rng = rng_for(5);
    let bins = 64;
    let draws = 1_000_000;
    let mut counts = vec![0usize; bins];
    for _ in 0..draws {
        let x = d.sample(&mut rng);
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let g = simpson(|y| (TAU * y).sin().exp(), 0.0, 1.0);
    let l1: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (a, b) = (i as f64 / bins as f64, (i + 1) as f64 / bins as f64);
            let mass = simpson(|y| (TAU * y).sin().exp() / g, a, b);
            (*c as f64 / draws as f64 - mass).abs()
        })
        .sum();
    assert!(l1 < 0.01, "L1 {l1}");
}

#[test]
fn scale_function_oracle_and_inverse() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let oracle = simpson(|y| (-(TAU * y).sin()).exp(), 0.0, 0.5);
    assert!((model.scale_function(0.5) - oracle).abs() < 1e-6);
    let mut last = -1.0;
    for i in 0..=200 {
        let x = i as f64 / 200.0;
        let s = model.scale_function(x);
        assert!(s > last);
        last = s;
        assert!((model.inverse_scale_function(s).unwrap() - x).abs() < 1e-8);
    }
    assert!(model.inverse_scale_function(-0.1).is_err());
}

#[test]
fn scale_process_is_a_martingale() {
    let model = ModelParams::cosine(PI, 1.0).unwrap();
    let coef = Coefficients::new(&model);
    let delta = 0.05;
    let mut rng = rng_for(17);
    let incs: Vec<f64> = (0..10_000)
        .map(|_| {
            let x0 = 0.3;
            let path = simulate_fine(&coef, x0, delta / 200.0, 200, &mut rng);
            model.scale_function_unwrapped(*path.values.last().unwrap()) - model.scale_function_unwrapped(x0)
        })
        .collect();
    let e = Estimate::mean_of(&incs);
    assert!(e.value.abs() <= 3.0 * e.se, "{e:?}");
}

#[test]
fn divergences_basic_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = random_model(&mut rng);
    assert_eq!(kl_invariant(&m, &m), 0.0);
    assert_eq!(hellinger_invariant(&m, &m), 0.0);
    for _ in 0..100 {
        let a = random_model(&mut rng);
        let b = a.with_drift(random_model(&mut rng).drift().clone());
        assert!(kl_invariant(&a, &b) >= 0.0);
        let h2 = hellinger_invariant(&a, &b);
        assert!(h2 <= 2.0);
        let (l2sq, _) = density_differences(&a, &b);
        let (pi_l, _) = a.density_bounds().min_pair(b.density_bounds());
        assert!(h2 <= l2sq / (4.0 * pi_l) + 1e-12);
    }
}

trait MinPair {
    fn min_pair(self, other: Self) -> (f64, f64);
}

impl MinPair for (f64, f64) {
    fn min_pair(self, other: Self) -> (f64, f64) {
        (self.0.min(other.0), self.1.max(other.1))
    }
}

#[test]
fn kl_and_pointwise_stability_constants_freeze() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base = ModelParams::cosine(PI, 1.0).unwrap();
    let ratios = |rng: &mut ChaCha8Rng, scale: f64, count: usize| -> Vec<(f64, f64)> {
        (0..count)
            .map(|_| {
                let m = perturbed(&base, scale, rng);
                let dist = l2_distance(base.drift().function(), m.drift().function());
                let (_, sup) = density_differences(&base, &m);
                (kl_invariant(&base, &m) / (dist * dist), sup / dist)
            })
            .collect()
    };
    // calibrate on 20 pairs at the middle scale, then freeze
    let calib = ratios(&mut rng, 0.1, 20);
    let c_kl = 2.0 * calib.iter().map(|r| r.0).fold(0.0, f64::max);
    let c_sup = 2.0 * calib.iter().map(|r| r.1).fold(0.0, f64::max);
    for scale in [0.05, 0.1, 0.2] {
        for (kl, sup) in ratios(&mut rng, scale, 34) {
            assert!(kl <= c_kl, "scale {scale}: KL ratio {kl} > {c_kl}");
            assert!(sup <= c_sup, "scale {scale}: sup ratio {sup} > {c_sup}");
        }
    }
}
