use std::f64::consts::SQRT_2;

use driftbench_core::function::{grid_values, PeriodicFunction};
use driftbench_core::stats::linear_fit;
use driftbench_core::wavelet::{daubechies_filter, l2_distance, CoefficientVector, WaveletBasis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scaling function at the integers by power iteration of the refinement
/// operator (the library solves the eigen-system directly).
fn phi_at_integers(h: &[f64]) -> Vec<f64> {
    let n = h.len();
    let mut v = vec![1.0 / (n - 2) as f64; n];
    v[0] = 0.0;
    v[n - 1] = 0.0;
    for _ in 0..2000 {
        let mut w = vec![0.0; n];
        for (i, wi) in w.iter_mut().enumerate() {
            for (k, hk) in h.iter().enumerate() {
                let idx = 2 * i as isize - k as isize;
                if idx >= 0 && (idx as usize) < n {
                    *wi += SQRT_2 * hk * v[idx as usize];
                }
            }
        }
        let s: f64 = w.iter().sum();
        v = w.iter().map(|x| x / s).collect();
    }
    v
}

#[test]
fn daubechies8_value_matches_integer_oracle() {
    // psi_{2,1}(1/2) = 2 sum_n psi(1 + 4n); psi at integers from phi at integers
    let h = daubechies_filter(8).unwrap();
    let phi = phi_at_integers(h);
    let l = h.len();
    let psi_int = |t: usize| -> f64 {
        (0..l)
            .map(|k| {
                let g = if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] };
                let idx = 2 * t as isize - k as isize;
                if idx >= 0 && (idx as usize) < l {
                    SQRT_2 * g * phi[idx as usize]
                } else {
                    0.0
                }
            })
            .sum()
    };
    let oracle = 2.0 * [1usize, 5, 9, 13].iter().map(|t| psi_int(*t)).sum::<f64>();
    let basis = WaveletBasis::daubechies(8, 4).unwrap();
    let got = basis.evaluate(2, 1, 0.5).unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
}

#[test]
fn orthonormal_to_resolution_five() {
    for basis in [WaveletBasis::daubechies(8, 6).unwrap(), WaveletBasis::fourier(6).unwrap()] {
        let q = basis.quad_points();
        let dim = 32;
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|j| (0..q).map(|i| basis.eval_index(j, i as f64 / q as f64)).collect())
            .collect();
        let mut worst = 0.0_f64;
        for a in 0..dim {
            for b in a..dim {
                let ip: f64 = rows[a].iter().zip(&rows[b]).map(|(x, y)| x * y).sum::<f64>() / q as f64;
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - want).abs());
            }
        }
        assert!(worst < 1e-8, "{:?}: worst Gram error {worst}", basis.family());
    }
}

#[test]
fn orthonormality_at_off_grid_points() {
    // a shifted quadrature grid exercises the table interpolation
    let basis = WaveletBasis::daubechies(8, 6).unwrap();
    let q = 1 << 15;
    let shift = 0.37 / q as f64;
    let rows: Vec<Vec<f64>> = (0..32)
        .map(|j| (0..q).map(|i| basis.eval_index(j, i as f64 / q as f64 + shift)).collect())
        .collect();
    let mut worst = 0.0_f64;
    for a in 0..32 {
        for b in a..32 {
            let ip: f64 = rows[a].iter().zip(&rows[b]).map(|(x, y)| x * y).sum::<f64>() / q as f64;
            worst = worst.max((ip - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    assert!(worst < 1e-6, "worst {worst}");
}

#[test]
fn analyze_synthesize_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for basis in [WaveletBasis::daubechies(8, 5).unwrap(), WaveletBasis::fourier(5).unwrap()] {
        for _ in 0..5 {
            let values = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = CoefficientVector::from_values(4, values).unwrap();
            let back = basis.analyze(&basis.synthesize(&c).unwrap(), 4).unwrap();
            assert!(c.l2_distance(&back) < 1e-8);
            let grid = basis.synthesize_on_quadrature(&c).unwrap();
            assert!(basis.analyze_samples(&grid, 4).unwrap().l2_distance(&c) < 1e-8);
        }
    }
}

#[test]
fn zero_and_unit_synthesis() {
    let basis = WaveletBasis::daubechies(8, 3).unwrap();
    let z = basis.synthesize(&CoefficientVector::zeros(3)).unwrap();
    let one = basis.synthesize(&CoefficientVector::unit(3, -1, 0).unwrap()).unwrap();
    for &x in &[0.0, 0.25, 0.9] {
        assert_eq!(z.eval(x), 0.0);
        assert_eq!(one.eval(x), 1.0);
    }
}

#[test]
fn projection_is_optimal() {
    let basis = WaveletBasis::daubechies(8, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let values = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = basis.synthesize(&CoefficientVector::from_values(6, values).unwrap()).unwrap();
    let f_samples = grid_values(&f, basis.quad_points());
    for m in 0..6 {
        let proj = basis.analyze_samples(&f_samples, m).unwrap();
        let best = l2_distance(&basis.synthesize(&proj).unwrap(), &f);
        for _ in 0..100 {
            let g: Vec<f64> = proj.values().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            let g = basis.synthesize(&CoefficientVector::from_values(m, g).unwrap()).unwrap();
            assert!(best <= l2_distance(&g, &f) + 1e-10);
        }
    }
}

/// `sum_l 2^{-l(s+1/2)} xi_{lk} psi_{lk}` up to level `top`, evaluated on the quadrature grid.
fn synthetic_target(basis: &WaveletBasis, s: f64, top: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = CoefficientVector::zeros(top);
    for l in 0..top {
        for k in 0..1usize << l {
            let xi = if rng.random::<bool>() { 1.0 } else { -1.0 };
            c.set(l as i32, k, (-(l as f64) * (s + 0.5)).exp2() * xi).unwrap();
        }
    }
    basis.synthesize_on_quadrature(&c).unwrap()
}

#[test]
fn approximation_error_decays_at_the_smoothness_rate() {
    let basis = WaveletBasis::daubechies(8, 11).unwrap();
    let q = basis.quad_points() as f64;
    for s in [1.0, 2.0] {
        let f = synthetic_target(&basis, s, 11, 5);
        let ms: Vec<f64> = (2..=8).map(|m| m as f64).collect();
        let errs: Vec<f64> = (2..=8)
            .map(|m| {
                let c = basis.analyze_samples(&f, m).unwrap();
                let p = basis.synthesize_on_quadrature(&c).unwrap();
                let e = (f.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / q).sqrt();
                e.log2()
            })
            .collect();
        let fit = linear_fit(&ms, &errs).unwrap();
        assert!(fit.slope <= -s + 0.1, "s={s}: slope {}", fit.slope);
    }
}

#[test]
fn sup_norm_error_decreases_for_smooth_target() {
    let basis = WaveletBasis::daubechies(8, 9).unwrap();
    let f = PeriodicFunction::from_fn(|x| (std::f64::consts::TAU * x).sin().exp());
    let mut last = f64::INFINITY;
    for m in [2, 4, 6, 8] {
        let p = basis.project(&f, m).unwrap();
        let err = (0..2048)
            .map(|i| {
                let x = i as f64 / 2048.0;
                (p.eval(x) - f.eval(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < last, "m={m}: {err} !< {last}");
        last = err;
    }
}

proptest! {
    #[test]
    fn besov_norm_is_homogeneous(values in prop::collection::vec(-10.0f64..10.0, 16), alpha in -5.0f64..5.0, s in 0.0f64..3.0) {
        let c = CoefficientVector::from_values(4, values).unwrap();
        let lhs = c.scaled(alpha).besov_norm(s);
        let rhs = alpha.abs() * c.besov_norm(s);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn evaluation_is_periodic(x in -5.0f64..5.0, j in 0usize..64) {
        let basis = WaveletBasis::daubechies(8, 6).unwrap();
        let a = basis.eval_index(j, x);
        let b = basis.eval_index(j, x + 3.0);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn coefficient_json_round_trip(values in prop::collection::vec(-1e3f64..1e3, 8)) {
        let c = CoefficientVector::from_values(3, values).unwrap();
        let back: CoefficientVector = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}
