//! Minimum-contrast drift estimation: least squares of the rescaled increments
//! `Delta^{-1}(X_{(k+1)Delta} - X_{k Delta})` on a wavelet space, capped in sup
//! norm, with the resolution tied to `n Delta`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::function::PeriodicFunction;
use crate::model::CHECK_GRID;
use crate::path::Observations;
use crate::wavelet::{l2_distance, CoefficientVector, WaveletBasis};

/// Relative singular-value threshold of the normal equations.
const RANK_TOL: f64 = 1e-10;

/// `(1/n) sum_{k=1}^{n} u(X_{k Delta})^2`.
pub fn empirical_norm(u: &PeriodicFunction, obs: &Observations) -> f64 {
    let n = obs.n();
    obs.samples[1..].iter().map(|x| u.eval(*x).powi(2)).sum::<f64>() / n as f64
}

/// `(1/n) sum_{k=0}^{n-1} u(X_{k Delta})^2`: the empirical norm over the
/// design points that carry an observed increment.
pub fn design_norm(u: &PeriodicFunction, obs: &Observations) -> f64 {
    let n = obs.n();
    obs.samples[..n].iter().map(|x| u.eval(*x).powi(2)).sum::<f64>() / n as f64
}

/// `(1/n) sum_k [Delta^{-1}(X_{(k+1)Delta} - X_{k Delta}) - u(X_{k Delta})]^2`
/// over the `n` observed increments.
pub fn empirical_loss(u: &PeriodicFunction, obs: &Observations) -> f64 {
    let n = obs.n();
    obs.regression_pairs().map(|(x, y)| (y - u.eval(x)).powi(2)).sum::<f64>() / n as f64
}

/// Bracket `L1 (n Delta)^{1/(1+2s)} <= 2^l <= L2 (n Delta)^{1/(1+2s)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub s: f64,
    #[serde(rename = "L1", default = "default_l1")]
    pub l1: f64,
    #[serde(rename = "L2", default = "default_l2")]
    pub l2: f64,
}

fn default_l1() -> f64 {
    0.5
}

fn default_l2() -> f64 {
    1.0
}

impl RateSchedule {
    pub fn new(s: f64) -> Self {
        Self { s, l1: default_l1(), l2: default_l2() }
    }

    pub fn with_constants(s: f64, l1: f64, l2: f64) -> Self {
        Self { s, l1, l2 }
    }

    /// `(n Delta)^{-s/(1+2s)} log(n Delta)^{1/2}`.
    pub fn epsilon(&self, n: usize, delta: f64) -> f64 {
        eps_n(n, delta, self.s)
    }
}

/// `(n Delta)^{-s/(1+2s)} log(n Delta)^{1/2}`.
pub fn eps_n(n: usize, delta: f64, s: f64) -> f64 {
    let t = n as f64 * delta;
    t.powf(-s / (1.0 + 2.0 * s)) * t.ln().max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub level: usize,
    /// The level was moved into `[1, max_level]`.
    pub clamped: bool,
    /// No power of two fell inside the bracket; the nearest one was taken.
    pub widened: bool,
}

/// Picks `l_n`; when two levels fit the bracket the larger is taken.
pub fn select_resolution(n: usize, delta: f64, schedule: &RateSchedule, max_level: usize) -> Result<Resolution> {
    let t = n as f64 * delta;
    if !(t > 1.0) {
        return Err(domain(format!("n*Delta = {t} must exceed 1")));
    }
    if !(schedule.l1 > 0.0 && schedule.l2 >= schedule.l1) {
        return Err(invalid("need 0 < L1 <= L2"));
    }
    let target = t.powf(1.0 / (1.0 + 2.0 * schedule.s));
    let (lo, hi) = ((schedule.l1 * target).log2(), (schedule.l2 * target).log2());
    let tol = 1e-12;
    let top = (hi + tol).floor();
    let (level, widened) = if top >= lo - tol {
        (top, false)
    } else {
        // nearest integer exponent to the bracket in log scale
        let below = lo - top;
        let above = (top + 1.0) - hi;
        (if above <= below { top + 1.0 } else { top }, true)
    };
    let raw = level.max(-1.0);
    let clamped_level = raw.clamp(1.0, max_level.max(1) as f64) as usize;
    Ok(Resolution { level: clamped_level, clamped: clamped_level as f64 != raw, widened })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ResolutionRule {
    Fixed { level: usize },
    Rate(RateSchedule),
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub rule: ResolutionRule,
    pub k0: f64,
    pub basis: WaveletBasis,
}

impl EstimatorConfig {
    pub fn new(rule: ResolutionRule, k0: f64, basis: WaveletBasis) -> Result<Self> {
        if let ResolutionRule::Fixed { level } = rule {
            if level > basis.max_level() {
                return Err(domain(format!(
                    "fixed level {level} exceeds basis max_level {}",
                    basis.max_level()
                )));
            }
        }
        Ok(Self { rule, k0, basis })
    }

    pub fn resolution(&self, n: usize, delta: f64) -> Result<Resolution> {
        match self.rule {
            ResolutionRule::Fixed { level } => Ok(Resolution { level, clamped: false, widened: false }),
            ResolutionRule::Rate(schedule) => select_resolution(n, delta, &schedule, self.basis.max_level()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub l_n: usize,
    pub gamma_n_value: f64,
    pub constraint_active: bool,
    pub rank_deficient: bool,
    pub resolution_clamped: bool,
    pub resolution_widened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub coeffs: CoefficientVector,
    pub metadata: FitMetadata,
}

/// Normal equations `G c = v` with `G = sum phi phi^T`, `v = sum Y phi` over the design points.
pub fn normal_equations(obs: &Observations, basis: &WaveletBasis, m: usize) -> (DMatrix<f64>, DVector<f64>) {
    let dim = WaveletBasis::dimension(m);
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut phi = vec![0.0; dim];
    let mut nz = Vec::with_capacity(dim);
    for (x, y) in obs.regression_pairs() {
        basis.eval_all(m, x, 0, &mut phi);
        nz.clear();
        nz.extend((0..dim).filter(|&j| phi[j] != 0.0));
        for &a in &nz {
            rhs[a] += y * phi[a];
            for &b in &nz {
                gram[(a, b)] += phi[a] * phi[b];
            }
        }
    }
    (gram, rhs)
}

/// Minimum-norm solution of a symmetric positive semidefinite system; the flag
/// reports a dropped singular direction.
pub fn min_norm_solve(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok((DVector::zeros(rhs.len()), true));
    }
    let eps = RANK_TOL * smax;
    let deficient = svd.singular_values.iter().any(|s| *s <= eps);
    let sol = svd
        .solve(rhs, eps)
        .map_err(|e| crate::Error::Numerical(format!("least squares failed: {e}")))?;
    Ok((sol, deficient))
}

/// `argmin gamma_n` over `S_{l_n}`, rescaled into `{||u||_inf <= K0 + 1}` when needed.
pub fn fit_minimum_contrast(obs: &Observations, config: &EstimatorConfig) -> Result<FitResult> {
    let n = obs.n();
    let res = config.resolution(n, obs.delta)?;
    let m = res.level;
    let dim = WaveletBasis::dimension(m);
    if n < dim {
        return Err(domain(format!("n = {n} is smaller than the dimension D = {dim}")));
    }
    let (gram, rhs) = normal_equations(obs, &config.basis, m);
    let (sol, rank_deficient) = min_norm_solve(gram, &rhs)?;
    let mut coeffs = CoefficientVector::from_values(m, sol.iter().copied().collect())?;

    let cap = config.k0 + 1.0;
    let sup = coefficient_sup_norm(&config.basis, &coeffs);
    let constraint_active = sup > cap;
    if constraint_active {
        coeffs = coeffs.scaled(cap / sup);
    }
    let fitted = config.basis.synthesize(&coeffs)?;
    let gamma = empirical_loss(&fitted, obs);
    Ok(FitResult {
        coeffs,
        metadata: FitMetadata {
            l_n: m,
            gamma_n_value: gamma,
            constraint_active,
            rank_deficient,
            resolution_clamped: res.clamped,
            resolution_widened: res.widened,
        },
    })
}

/// Sup norm of a wavelet series on the check grid.
pub fn coefficient_sup_norm(basis: &WaveletBasis, coeffs: &CoefficientVector) -> f64 {
    (0..CHECK_GRID)
        .map(|i| basis.eval_series(coeffs, i as f64 / CHECK_GRID as f64, 0).abs())
        .fold(0.0, f64::max)
}

/// `1{ ||bhat - b_ref||_2 > C eps_n }`.
pub fn plug_in_test(
    bhat: &CoefficientVector,
    basis: &WaveletBasis,
    b_ref: &PeriodicFunction,
    c: f64,
    eps: f64,
) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(domain("eps_n must be positive"));
    }
    let f = basis.synthesize(bhat)?;
    Ok(l2_distance(&f, b_ref) > c * eps)
}
