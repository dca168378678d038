//! Random wavelet series priors, the Euler pseudo-likelihood, Girsanov
//! log-likelihood ratios, a Metropolis-within-Gibbs posterior sampler and
//! Monte-Carlo checks of the KL identities between path laws.

use std::f64::consts::{PI, SQRT_2};
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use statrs::function::erf::erf;

use crate::error::{domain, invalid, Error, Result};
use crate::function::{trapezoid, PeriodicFunction};
use crate::model::{kl_invariant, DriftSpec, ModelParams, SigmaSpec, CHECK_GRID};
use crate::path::{rng_for, simulate_fine, simulate_observations, Coefficients, Observations, PathConfig, SamplePath};
use crate::stats::Estimate;
use crate::wavelet::{l2_distance, level_shift, CoefficientVector, WaveletBasis};

/// Coefficient density `q` of the standardized coefficients `u_{lk}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QDensity {
    Uniform { lo: f64, hi: f64 },
    /// `N(0, sd^2)` restricted to `[-bound, bound]`.
    TruncatedGaussian { sd: f64, bound: f64 },
}

impl QDensity {
    /// `Unif[-B, B]`.
    pub fn symmetric_uniform(b: f64) -> Self {
        Self::Uniform { lo: -b, hi: b }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { lo, hi } if hi > lo && lo.is_finite() && hi.is_finite() => Ok(()),
            Self::TruncatedGaussian { sd, bound } if sd > 0.0 && bound > 0.0 => Ok(()),
            _ => Err(invalid(format!("invalid coefficient density {self:?}"))),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi } => (lo, hi),
            Self::TruncatedGaussian { bound, .. } => (-bound, bound),
        }
    }

    fn gaussian_mass(sd: f64, bound: f64) -> f64 {
        erf(bound / (sd * SQRT_2))
    }

    pub fn density(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if u < lo || u > hi {
            return 0.0;
        }
        match *self {
            Self::Uniform { lo, hi } => 1.0 / (hi - lo),
            Self::TruncatedGaussian { sd, bound } => {
                (-0.5 * (u / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt() * Self::gaussian_mass(sd, bound))
            }
        }
    }

    pub fn log_density(&self, u: f64) -> f64 {
        let d = self.density(u);
        if d > 0.0 {
            d.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn cdf(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if u <= lo {
            return 0.0;
        }
        if u >= hi {
            return 1.0;
        }
        match *self {
            Self::Uniform { lo, hi } => (u - lo) / (hi - lo),
            Self::TruncatedGaussian { sd, bound } => {
                let z = Self::gaussian_mass(sd, bound);
                0.5 + 0.5 * erf(u / (sd * SQRT_2)) / z
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::TruncatedGaussian { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::TruncatedGaussian { sd, bound } => loop {
                let z: f64 = StandardNormal.sample(rng);
                let u = sd * z;
                if u.abs() <= bound {
                    return u;
                }
            },
        }
    }

    /// `inf_{|u| <= B} q(u)`.
    pub fn zeta(&self, b: f64) -> f64 {
        let (lo, hi) = self.support();
        if lo > -b || hi < b {
            return 0.0;
        }
        self.density(b).min(self.density(-b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// Mixture over resolutions with mass `h(m)`.
    Sieve,
    /// Fixed resolution, level weights `2^{-l(s+1/2)}`.
    KnownSmoothness,
    /// Prior on `H = log pi_b`, drift `((sigma^2)' + sigma^2 H')/2`.
    InvariantDensity,
}

/// A random wavelet series prior `b = sum tau_l u_{lk} psi_{lk}`, `u_{lk} ~ q` i.i.d.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub kind: PriorKind,
    /// `tau[0]` is `tau_{-1}`, `tau[l + 1]` is `tau_l`.
    pub tau: Vec<f64>,
    pub b: f64,
    pub q: QDensity,
    /// Mass of resolutions `1..=cap` (sieve only; `h[m - 1]`).
    pub h: Vec<f64>,
    pub s: Option<f64>,
    pub cap: usize,
    pub basis: WaveletBasis,
    pub sigma: Option<SigmaSpec>,
}

impl PriorSpec {
    /// `tau_{-1} = tau_0 = 1`, `tau_l = 2^{-3l/2} l^{-2}`, `h(m) ∝ exp(-2^m)` on `1..=cap`.
    pub fn sieve(basis: WaveletBasis, b: f64, q: QDensity, cap: usize) -> Result<Self> {
        let tau = (0..=cap)
            .map(|i| if i <= 1 { 1.0 } else { sieve_tau((i - 1) as f64) })
            .collect();
        let h = sieve_masses(cap);
        Self::build(PriorKind::Sieve, tau, b, q, h, None, cap, basis, None)
    }

    /// `tau_{-1} = 1`, `tau_l = 2^{-l(s+1/2)}` at the fixed resolution `cap`.
    pub fn known_smoothness(basis: WaveletBasis, s: f64, b: f64, q: QDensity, cap: usize) -> Result<Self> {
        let tau = (0..=cap)
            .map(|i| if i == 0 { 1.0 } else { (-((i - 1) as f64) * (s + 0.5)).exp2() })
            .collect();
        Self::build(PriorKind::KnownSmoothness, tau, b, q, Vec::new(), Some(s), cap, basis, None)
    }

    /// Prior on `H = log pi_b` with `tau_{-1} = tau_0 = 1`, `tau_l = 2^{-l(s+3/2)} l^{-2}`.
    pub fn invariant_density(
        basis: WaveletBasis,
        s: f64,
        b: f64,
        q: QDensity,
        cap: usize,
        sigma: SigmaSpec,
    ) -> Result<Self> {
        let tau = (0..=cap)
            .map(|i| {
                if i <= 1 {
                    1.0
                } else {
                    let l = (i - 1) as f64;
                    (-l * (s + 1.5)).exp2() / (l * l)
                }
            })
            .collect();
        Self::build(PriorKind::InvariantDensity, tau, b, q, Vec::new(), Some(s), cap, basis, Some(sigma))
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        kind: PriorKind,
        tau: Vec<f64>,
        b: f64,
        q: QDensity,
        h: Vec<f64>,
        s: Option<f64>,
        cap: usize,
        basis: WaveletBasis,
        sigma: Option<SigmaSpec>,
    ) -> Result<Self> {
        q.validate()?;
        if cap == 0 {
            return Err(invalid("prior level cap must be at least 1"));
        }
        if cap > basis.max_level() {
            return Err(domain(format!(
                "prior cap {cap} exceeds basis max_level {}",
                basis.max_level()
            )));
        }
        if !(b > 0.0) {
            return Err(invalid("B must be positive"));
        }
        let (lo, hi) = q.support();
        if lo < -(b + 1.0) - 1e-12 || hi > b + 1.0 + 1e-12 {
            return Err(invalid("q must vanish outside [-(B+1), B+1]"));
        }
        Ok(Self { kind, tau, b, q, h, s, cap, basis, sigma })
    }

    /// Replaces the level weights (for instance to set every `tau_l = 1`).
    pub fn with_tau(mut self, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != self.cap + 1 {
            return Err(invalid(format!("need {} level weights", self.cap + 1)));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn tau_level(&self, l: i32) -> f64 {
        self.tau[(l + 1) as usize]
    }

    /// Weight of the coefficient with global index `j`.
    pub fn tau_index(&self, j: usize) -> f64 {
        if j == 0 {
            self.tau[0]
        } else {
            self.tau[level_shift(j).0 + 1]
        }
    }

    pub fn zeta(&self) -> f64 {
        self.q.zeta(self.b)
    }

    /// Resolution mass `h(m)`.
    pub fn level_mass(&self, m: usize) -> f64 {
        if self.kind != PriorKind::Sieve {
            return if m == self.cap { 1.0 } else { 0.0 };
        }
        if m == 0 || m > self.cap {
            0.0
        } else {
            self.h[m - 1]
        }
    }

    /// `c_{lk} = tau_l u_{lk}`.
    pub fn coefficients(&self, u: &CoefficientVector) -> CoefficientVector {
        let mut c = u.clone();
        for (j, v) in c.values_mut().iter_mut().enumerate() {
            *v *= self.tau_index(j);
        }
        c
    }

    /// Drift associated with coefficients `c` (for the density prior, `c` are those of `H`).
    pub fn drift(&self, c: &CoefficientVector, k0: Option<f64>) -> Result<DriftSpec> {
        match self.kind {
            PriorKind::InvariantDensity => {
                let sigma = self.sigma.as_ref().ok_or_else(|| invalid("density prior without sigma"))?;
                drift_from_logdensity(&self.basis, c, sigma, k0)
            }
            _ => DriftSpec::from_coefficients(&self.basis, c, k0),
        }
    }

    /// A `C^1` bound valid for every draw at resolutions up to `cap`, from
    /// the per-level sums `sup_x sum_k |psi^{(d)}_{lk}(x)|` on the check grid.
    pub fn implied_k0(&self) -> f64 {
        let (lo, hi) = self.q.support();
        let umax = lo.abs().max(hi.abs());
        let sums = |d: usize| -> Vec<f64> {
            (-1..self.cap as i32)
                .map(|l| self.basis.level_sup_sum(l, d, CHECK_GRID))
                .collect()
        };
        let s0 = sums(0);
        let s1 = sums(1);
        match self.kind {
            PriorKind::InvariantDensity => {
                let s2 = sums(2);
                let sigma = self.sigma.as_ref().expect("density prior carries sigma");
                let (sq, dsq, ddsq) = sigma_square_bounds(sigma);
                let mut total = 0.5 * dsq + 0.5 * ddsq;
                for (i, tau) in self.tau.iter().enumerate() {
                    total += tau * umax * (0.5 * sq * (s1[i] + s2[i]) + 0.5 * dsq * s1[i]);
                }
                total
            }
            _ => self
                .tau
                .iter()
                .enumerate()
                .map(|(i, tau)| tau * umax * (s0[i] + s1[i]))
                .sum(),
        }
    }
}

/// `2^{-3l/2} l^{-2}`.
pub fn sieve_tau(l: f64) -> f64 {
    (-1.5 * l).exp2() / (l * l)
}

/// `h(m) = gamma e^{-2^m}` normalized over `m = 1..=cap`.
pub fn sieve_masses(cap: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=cap).map(|m| (-(2f64.powi(m as i32))).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn sigma_square_bounds(sigma: &SigmaSpec) -> (f64, f64, f64) {
    let mut out = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..CHECK_GRID {
        let x = i as f64 / CHECK_GRID as f64;
        let (s, ds, dds) = (sigma.eval(x), sigma.derivative().eval(x), sigma.second_derivative().eval(x));
        out.0 = out.0.max(s * s);
        out.1 = out.1.max((2.0 * s * ds).abs());
        out.2 = out.2.max((2.0 * (ds * ds + s * dds)).abs());
    }
    out
}

/// A draw from the prior: resolution, standardized `u` and coefficients `tau u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDraw {
    pub m: usize,
    pub u: CoefficientVector,
    pub coeffs: CoefficientVector,
}

/// Resolution from `h` (sieve) or the cap, then `u_{lk} ~ q`.
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> PriorDraw {
    let m = match prior.kind {
        PriorKind::Sieve => {
            let mut t = rng.random::<f64>();
            let mut m = prior.cap;
            for (i, h) in prior.h.iter().enumerate() {
                if t < *h {
                    m = i + 1;
                    break;
                }
                t -= h;
            }
            m
        }
        _ => prior.cap,
    };
    sample_prior_at(prior, m, rng)
}

/// `u_{lk} ~ q` at a given resolution.
pub fn sample_prior_at<R: Rng + ?Sized>(prior: &PriorSpec, m: usize, rng: &mut R) -> PriorDraw {
    let mut u = CoefficientVector::zeros(m);
    for v in u.values_mut() {
        *v = prior.q.sample(rng);
    }
    let coeffs = prior.coefficients(&u);
    PriorDraw { m, u, coeffs }
}

/// `b = ((sigma^2)' + sigma^2 H')/2` for `H = sum c_{lk} psi_{lk}`; then
/// `I_b(1) = 0` and `pi_b ∝ e^H`.
pub fn drift_from_logdensity(
    basis: &WaveletBasis,
    h: &CoefficientVector,
    sigma: &SigmaSpec,
    k0: Option<f64>,
) -> Result<DriftSpec> {
    let dh = basis.synthesize_derivative(h, 1)?;
    let d2h = basis.synthesize_derivative(h, 2)?;
    let (s, ds, dds) = (sigma.function().clone(), sigma.derivative().clone(), sigma.second_derivative().clone());
    let (s1, ds1, dh1) = (s.clone(), ds.clone(), dh.clone());
    let b = PeriodicFunction::from_fn(move |x| {
        let sv = s1.eval(x);
        sv * ds1.eval(x) + 0.5 * sv * sv * dh1.eval(x)
    });
    let db = PeriodicFunction::from_fn(move |x| {
        let (sv, dsv, ddsv) = (s.eval(x), ds.eval(x), dds.eval(x));
        dsv * dsv + sv * ddsv + sv * dsv * dh.eval(x) + 0.5 * sv * sv * d2h.eval(x)
    });
    match k0 {
        Some(k0) => DriftSpec::new(b, db, k0),
        None => Ok(DriftSpec::tight(b, db)),
    }
}

/// `y - x` reduced to `(-1/2, 1/2]`.
#[inline]
pub fn wrap_increment(d: f64) -> f64 {
    let r = d - d.round();
    if r <= -0.5 {
        r + 1.0
    } else {
        r
    }
}

/// Euler transition log density `log N(y; x + b(x) Delta, sigma(x)^2 Delta)`
/// evaluated on the wrapped increment.
pub fn transition_log_density(drift: &DriftSpec, sigma: &SigmaSpec, delta: f64, x: f64, y: f64) -> f64 {
    let d = wrap_increment(y - x);
    let var = sigma.eval(x).powi(2) * delta;
    -0.5 * (2.0 * PI * var).ln() - (d - drift.eval(x) * delta).powi(2) / (2.0 * var)
}

/// `log pi_b(X_0 mod 1) + sum log` Euler transition densities.
pub fn log_pseudo_likelihood(drift: &DriftSpec, sigma: &SigmaSpec, obs: &Observations) -> f64 {
    let model = ModelParams::new(drift.clone(), sigma.clone());
    let initial = model.density().value_at(obs.samples[0]).ln();
    initial + transitions_log_likelihood(drift, sigma, obs)
}

/// Sum of the Euler transition log densities only.
pub fn transitions_log_likelihood(drift: &DriftSpec, sigma: &SigmaSpec, obs: &Observations) -> f64 {
    obs.samples
        .windows(2)
        .map(|w| transition_log_density(drift, sigma, obs.delta, w[0], w[1]))
        .sum()
}

/// `sum f(X_i)(X_{i+1} - X_i) - 1/2 sum ((b0^2 - b^2)/sigma^2)(X_i) dt`,
/// `f = (b0 - b)/sigma^2`: the log density of `P_{b0}` against `P_b` on the path.
pub fn girsanov_loglik_ratio(b0: &DriftSpec, b: &DriftSpec, sigma: &SigmaSpec, path: &SamplePath) -> f64 {
    let mut ito = 0.0;
    let mut riemann = 0.0;
    for w in path.values.windows(2) {
        let x = w[0];
        let (p, q, s2) = (b0.eval(x), b.eval(x), sigma.eval(x).powi(2));
        ito += (p - q) / s2 * (w[1] - x);
        riemann += (p * p - q * q) / s2;
    }
    ito - 0.5 * riemann * path.dt
}

/// Quadratic form of the Euler log-likelihood for drifts affine in the coefficients,
/// `b = a + sum_j c_j g_j`:
/// `loglik(c) = constant + c^T v - (Delta/2) c^T G c`.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub dim: usize,
    pub delta: f64,
    /// Row-major `dim x dim`.
    pub gram: Vec<f64>,
    pub v: Vec<f64>,
    pub constant: f64,
}

impl SufficientStats {
    pub fn new(
        obs: &Observations,
        sigma: &SigmaSpec,
        dim: usize,
        features: impl Fn(f64, &mut [f64]),
        offset: impl Fn(f64) -> f64,
    ) -> Self {
        let delta = obs.delta;
        let mut gram = vec![0.0; dim * dim];
        let mut v = vec![0.0; dim];
        let mut constant = 0.0;
        let mut phi = vec![0.0; dim];
        let mut nz = Vec::with_capacity(dim);
        for w in obs.samples.windows(2) {
            let x = w[0];
            let d = wrap_increment(w[1] - x);
            let s2 = sigma.eval(x).powi(2);
            let wt = 1.0 / s2;
            let a = offset(x);
            constant += -0.5 * (2.0 * PI * s2 * delta).ln() - d * d * wt / (2.0 * delta) + wt * d * a
                - 0.5 * delta * wt * a * a;
            features(x, &mut phi);
            nz.clear();
            nz.extend((0..dim).filter(|&j| phi[j] != 0.0));
            let r = wt * (d - a * delta);
            for &i in &nz {
                v[i] += r * phi[i];
                let row = &mut gram[i * dim..(i + 1) * dim];
                for &j in &nz {
                    row[j] += wt * phi[i] * phi[j];
                }
            }
        }
        Self { dim, delta, gram, v, constant }
    }

    /// Statistics for the prior's drift parametrization at its cap.
    pub fn for_prior(prior: &PriorSpec, obs: &Observations, sigma: &SigmaSpec) -> Result<Self> {
        let m = prior.cap;
        let dim = WaveletBasis::dimension(m);
        let basis = prior.basis.clone();
        match prior.kind {
            PriorKind::InvariantDensity => {
                let sig = prior.sigma.clone().ok_or_else(|| invalid("density prior without sigma"))?;
                let sig2 = sig.clone();
                Ok(Self::new(
                    obs,
                    sigma,
                    dim,
                    move |x, out| {
                        basis.eval_all(m, x, 1, out);
                        let half = 0.5 * sig.eval(x).powi(2);
                        for o in out.iter_mut() {
                            *o *= half;
                        }
                    },
                    move |x| sig2.eval(x) * sig2.derivative().eval(x),
                ))
            }
            _ => Ok(Self::new(obs, sigma, dim, move |x, out| basis.eval_all(m, x, 0, out), |_| 0.0)),
        }
    }

    /// Log-likelihood at coefficients `c` (length `<= dim`; missing entries are zero).
    pub fn loglik(&self, c: &[f64]) -> f64 {
        let k = c.len().min(self.dim);
        let mut lin = 0.0;
        let mut quad = 0.0;
        for i in 0..k {
            lin += c[i] * self.v[i];
            let row = &self.gram[i * self.dim..i * self.dim + k];
            let gi: f64 = row.iter().zip(&c[..k]).map(|(g, cj)| g * cj).sum();
            quad += c[i] * gi;
        }
        self.constant + lin - 0.5 * self.delta * quad
    }
}

/// Which likelihood the sampler targets.
#[derive(Debug, Clone, Copy)]
pub enum Likelihood<'a> {
    /// Constant likelihood: the chain targets the prior.
    Flat,
    Euler(&'a SufficientStats),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iters: usize,
    pub burnin: usize,
    /// Initial random-walk scale as a fraction of the width of `q`'s support.
    #[serde(default = "default_step_scale")]
    pub step_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
}

fn default_step_scale() -> f64 {
    0.1
}

fn default_target_accept() -> f64 {
    0.25
}

impl McmcConfig {
    pub fn new(iters: usize, burnin: usize, seed: u64) -> Self {
        Self { iters, burnin, step_scale: default_step_scale(), seed, target_accept: default_target_accept() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveCounter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub m: usize,
    pub coeffs: CoefficientVector,
    pub logpost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    /// Post-burnin draws, one per iteration.
    pub draws: Vec<Draw>,
    pub within: MoveCounter,
    pub birth: MoveCounter,
    pub death: MoveCounter,
    pub seed: u64,
    pub burnin: usize,
}

#[derive(Serialize, Deserialize)]
struct DrawRecord {
    iter: usize,
    m: usize,
    coeffs: CoefficientVector,
    logpost: f64,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Mean of the coefficient vectors, padded to the largest resolution visited.
    pub fn posterior_mean(&self) -> CoefficientVector {
        let m = self.draws.iter().map(|d| d.m).max().unwrap_or(0);
        let mut acc = vec![0.0; 1 << m];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(d.coeffs.values()) {
                *a += v;
            }
        }
        let n = self.draws.len().max(1) as f64;
        CoefficientVector::from_values(m, acc.into_iter().map(|v| v / n).collect())
            .expect("length matches resolution")
    }

    /// Fraction of draws at each resolution `0..=max`.
    pub fn level_frequencies(&self, max: usize) -> Vec<f64> {
        let mut counts = vec![0.0; max + 1];
        for d in &self.draws {
            if d.m <= max {
                counts[d.m] += 1.0;
            }
        }
        let n = self.draws.len().max(1) as f64;
        counts.iter().map(|c| c / n).collect()
    }

    /// One JSON object per draw: `{iter, m, coeffs, logpost}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, d) in self.draws.iter().enumerate() {
            let rec = DrawRecord { iter: self.burnin + i, m: d.m, coeffs: d.coeffs.clone(), logpost: d.logpost };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Draw>> {
        let mut draws = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DrawRecord = serde_json::from_str(&line)?;
            draws.push(Draw { m: rec.m, coeffs: rec.coeffs, logpost: rec.logpost });
        }
        Ok(draws)
    }
}

/// Metropolis–Hastings acceptance probability from log target and log proposal values.
pub fn mh_accept_prob(log_target_current: f64, log_target_proposed: f64, log_q_forward: f64, log_q_reverse: f64) -> f64 {
    let log_ratio = log_target_proposed - log_target_current + log_q_reverse - log_q_forward;
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.exp().min(1.0)
    }
}

/// Folds `u` into `[lo, hi]` by repeated reflection at the endpoints.
pub fn reflect_into(u: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let t = (u - lo).rem_euclid(2.0 * width);
    if t <= width {
        lo + t
    } else {
        hi - (t - width)
    }
}

struct Sampler<'a> {
    prior: &'a PriorSpec,
    lik: Likelihood<'a>,
    dim: usize,
    m: usize,
    u: Vec<f64>,
    c: Vec<f64>,
    gc: Vec<f64>,
    loglik: f64,
    logprior_u: f64,
}

impl<'a> Sampler<'a> {
    fn new(prior: &'a PriorSpec, lik: Likelihood<'a>, m: usize, u: Vec<f64>) -> Self {
        let dim = WaveletBasis::dimension(prior.cap);
        let mut s = Self {
            prior,
            lik,
            dim,
            m,
            u,
            c: vec![0.0; dim],
            gc: vec![0.0; dim],
            loglik: 0.0,
            logprior_u: 0.0,
        };
        s.refresh();
        s
    }

    fn active(&self) -> usize {
        WaveletBasis::dimension(self.m)
    }

    fn refresh(&mut self) {
        let active = self.active();
        for j in 0..self.dim {
            self.c[j] = if j < active { self.prior.tau_index(j) * self.u[j] } else { 0.0 };
        }
        if let Likelihood::Euler(stats) = self.lik {
            for i in 0..self.dim {
                let row = &stats.gram[i * self.dim..(i + 1) * self.dim];
                self.gc[i] = row.iter().zip(&self.c).map(|(g, c)| g * c).sum();
            }
            self.loglik = stats.loglik(&self.c);
        }
        self.logprior_u = self.u[..active].iter().map(|v| self.prior.q.log_density(*v)).sum();
    }

    fn logpost(&self) -> f64 {
        self.loglik + self.logprior_u + self.prior.level_mass(self.m).ln()
    }

    /// Change in log-likelihood when `c_j` moves by `dc`.
    fn delta_loglik(&self, j: usize, dc: f64) -> f64 {
        match self.lik {
            Likelihood::Flat => 0.0,
            Likelihood::Euler(s) => {
                dc * s.v[j] - 0.5 * s.delta * (2.0 * dc * self.gc[j] + dc * dc * s.gram[j * self.dim + j])
            }
        }
    }

    fn apply(&mut self, j: usize, u_new: f64, dll: f64) {
        let dc = self.prior.tau_index(j) * (u_new - self.u[j]);
        self.logprior_u += self.prior.q.log_density(u_new) - self.prior.q.log_density(self.u[j]);
        self.u[j] = u_new;
        self.c[j] += dc;
        self.loglik += dll;
        if let Likelihood::Euler(s) = self.lik {
            for i in 0..self.dim {
                self.gc[i] += dc * s.gram[i * self.dim + j];
            }
        }
    }

    fn loglik_at(&self, m: usize, u: &[f64]) -> f64 {
        match self.lik {
            Likelihood::Flat => 0.0,
            Likelihood::Euler(s) => {
                let active = WaveletBasis::dimension(m);
                let c: Vec<f64> = (0..active).map(|j| self.prior.tau_index(j) * u[j]).collect();
                s.loglik(&c)
            }
        }
    }
}

/// Posterior sampling under the Euler pseudo-likelihood of `obs`.
pub fn run_mcmc(prior: &PriorSpec, obs: &Observations, sigma: &SigmaSpec, config: &McmcConfig) -> Result<PosteriorChain> {
    let stats = SufficientStats::for_prior(prior, obs, sigma)?;
    run_mcmc_with(prior, Likelihood::Euler(&stats), config)
}

/// Componentwise random-walk Metropolis on the standardized coefficients,
/// reflected into the support of `q`, with birth/death moves between adjacent
/// resolutions for the sieve prior. Scales adapt during burnin and are then frozen.
pub fn run_mcmc_with(prior: &PriorSpec, lik: Likelihood<'_>, config: &McmcConfig) -> Result<PosteriorChain> {
    if config.iters == 0 {
        return Err(invalid("iters must be positive"));
    }
    if let Likelihood::Euler(s) = lik {
        if s.dim != WaveletBasis::dimension(prior.cap) {
            return Err(invalid("likelihood statistics do not match the prior cap"));
        }
    }
    let mut rng = rng_for(config.seed);
    let (lo, hi) = prior.q.support();
    let width = hi - lo;
    let dim = WaveletBasis::dimension(prior.cap);

    let start_m = match prior.kind {
        PriorKind::Sieve => 1,
        _ => prior.cap,
    };
    // start at the center of q's support
    let centre = 0.5 * (lo + hi);
    let mut state = Sampler::new(prior, lik, start_m, vec![centre; dim]);

    let mut scales = vec![config.step_scale * width; dim];
    let mut window_acc = vec![0u32; dim];
    let mut window_prop = vec![0u32; dim];
    let adapt_every = 50;

    let mut chain = PosteriorChain {
        draws: Vec::with_capacity(config.iters.saturating_sub(config.burnin)),
        within: MoveCounter::default(),
        birth: MoveCounter::default(),
        death: MoveCounter::default(),
        seed: config.seed,
        burnin: config.burnin,
    };
    let mut burnin_accepts = 0u64;

    for iter in 0..config.iters {
        let in_burnin = iter < config.burnin;
        for j in 0..state.active() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let proposal = reflect_into(state.u[j] + scales[j] * z, lo, hi);
            let dll = state.delta_loglik(j, prior.tau_index(j) * (proposal - state.u[j]));
            let dlp = prior.q.log_density(proposal) - prior.q.log_density(state.u[j]);
            let accept = rng.random::<f64>() < (dll + dlp).exp();
            if accept {
                state.apply(j, proposal, dll);
            }
            if in_burnin {
                window_prop[j] += 1;
                window_acc[j] += accept as u32;
                burnin_accepts += accept as u64;
            } else {
                chain.within.record(accept);
            }
        }

        if prior.kind == PriorKind::Sieve && prior.cap > 1 {
            level_move(&mut state, &mut rng, &mut chain, in_burnin);
        }

        if in_burnin && (iter + 1) % adapt_every == 0 {
            for j in 0..dim {
                if window_prop[j] == 0 {
                    continue;
                }
                let rate = window_acc[j] as f64 / window_prop[j] as f64;
                let factor = ((rate - config.target_accept) * 2.0).exp();
                scales[j] = (scales[j] * factor).clamp(1e-8 * width, width);
                window_acc[j] = 0;
                window_prop[j] = 0;
            }
        }
        if iter + 1 == config.burnin && burnin_accepts == 0 {
            return Err(Error::Numerical(format!(
                "no within-model move accepted during {} burnin iterations",
                config.burnin
            )));
        }
        if !in_burnin {
            // the loglik is tracked incrementally; refresh occasionally against drift
            if (iter + 1) % 1000 == 0 {
                state.refresh();
            }
            let active = state.active();
            chain.draws.push(Draw {
                m: state.m,
                coeffs: CoefficientVector::from_values(state.m, state.c[..active].to_vec())
                    .expect("active length matches resolution"),
                logpost: state.logpost(),
            });
        }
    }
    Ok(chain)
}

fn level_move(state: &mut Sampler<'_>, rng: &mut ChaCha8Rng, chain: &mut PosteriorChain, in_burnin: bool) {
    let prior = state.prior;
    let m = state.m;
    let can_up = m < prior.cap;
    let can_down = m > 1;
    let p_up = |m: usize| -> f64 {
        match (m < prior.cap, m > 1) {
            (true, true) => 0.5,
            (true, false) => 1.0,
            _ => 0.0,
        }
    };
    let up = if can_up && can_down { rng.random::<f64>() < 0.5 } else { can_up };
    if up {
        let (old_d, new_d) = (WaveletBasis::dimension(m), WaveletBasis::dimension(m + 1));
        let mut u = state.u.clone();
        for v in &mut u[old_d..new_d] {
            *v = prior.q.sample(rng);
        }
        let ll_new = state.loglik_at(m + 1, &u);
        // independence proposal from q: the q terms cancel
        let log_ratio = ll_new - state.loglik + (prior.level_mass(m + 1) / prior.level_mass(m)).ln()
            + ((1.0 - p_up(m + 1)) / p_up(m)).ln();
        let accept = rng.random::<f64>() < log_ratio.exp();
        if accept {
            state.u = u;
            state.m = m + 1;
            state.refresh();
        }
        if !in_burnin {
            chain.birth.record(accept);
        }
    } else if can_down {
        let ll_new = state.loglik_at(m - 1, &state.u);
        let log_ratio = ll_new - state.loglik + (prior.level_mass(m - 1) / prior.level_mass(m)).ln()
            + (p_up(m - 1) / (1.0 - p_up(m))).ln();
        let accept = rng.random::<f64>() < log_ratio.exp();
        if accept {
            state.m = m - 1;
            state.refresh();
        }
        if !in_burnin {
            chain.death.record(accept);
        }
    }
}

/// `b_0` in the form needed for exact `L^2` distances to wavelet series:
/// its coefficients at the basis' finest level and the squared residual.
#[derive(Debug, Clone)]
pub struct BallReference {
    pub coeffs: CoefficientVector,
    pub residual_sq: f64,
}

impl BallReference {
    pub fn new(b0: &PeriodicFunction, basis: &WaveletBasis) -> Result<Self> {
        let coeffs = basis.analyze(b0, basis.max_level())?;
        let proj = basis.synthesize(&coeffs)?;
        let residual_sq = l2_distance(&proj, b0).powi(2);
        Ok(Self { coeffs, residual_sq })
    }

    /// `||sum c_j psi_j - b_0||_2` by Parseval.
    pub fn distance(&self, c: &CoefficientVector) -> f64 {
        let r = self.coeffs.values();
        let mut sq = self.residual_sq;
        for (j, bj) in r.iter().enumerate() {
            let cj = c.values().get(j).copied().unwrap_or(0.0);
            sq += (cj - bj).powi(2);
        }
        for cj in c.values().iter().skip(r.len()) {
            sq += cj * cj;
        }
        sq.sqrt()
    }
}

/// Fraction of draws within `radius` of `b_0` in `L^2`.
pub fn posterior_ball_mass(chain: &PosteriorChain, b0: &BallReference, radius: f64) -> f64 {
    if chain.draws.is_empty() {
        return 0.0;
    }
    let inside = chain.draws.iter().filter(|d| b0.distance(&d.coeffs) <= radius).count();
    inside as f64 / chain.draws.len() as f64
}

/// Inputs of [`kl_checks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCheckConfig {
    pub n: usize,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub reps: usize,
    /// Short paths over `[0, Delta]` for the transition divergence.
    pub short_paths: usize,
    #[serde(default = "default_kl_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_kl_substeps() -> usize {
    20
}

/// Monte-Carlo estimates (with standard errors) around the divergence of the
/// path laws of two drifts sharing `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub l2_distance: f64,
    /// `E log(p_0/p_b)` over one step, raw Girsanov average.
    pub kl_transition: Estimate,
    /// Same expectation with the martingale part (mean zero) removed.
    pub kl_transition_cv: Estimate,
    /// `(Delta/2) ||(b0 - b)/sigma||^2_{mu_0}` by quadrature.
    pub kl_transition_oracle: f64,
    /// `Delta ||b0 - b||_2^2`.
    pub kl_transition_bound: f64,
    pub kl_invariant: f64,
    /// `E log(p_0^(n)/p_b^(n))` for the Euler pseudo-densities of `n` transitions.
    pub kl_joint: Estimate,
    /// `K(pi_0, pi_b) + n KL(b0, b)` with the quadrature transition term.
    pub kl_joint_decomposition: f64,
    pub var_joint: Estimate,
    pub var_initial: f64,
    pub var_transition: Estimate,
    /// `3 (Var log(pi_0/pi_b) + n Var log(p_0/p_b))`.
    pub tensorization_rhs: Estimate,
}

impl KlReport {
    /// `var_joint <= rhs + 3 SE`, with SEs of both sides combined.
    pub fn tensorization_holds(&self) -> bool {
        let se = (self.var_joint.se.powi(2) + self.tensorization_rhs.se.powi(2)).sqrt();
        self.var_joint.value <= self.tensorization_rhs.value + 3.0 * se
    }

    pub fn decomposition_residual(&self) -> f64 {
        self.kl_joint.value - self.kl_joint_decomposition
    }
}

/// One-step divergence `KL(b0, b)` over `[0, Delta]` from paths started at `mu_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionKl {
    /// Average of the Girsanov log ratio.
    pub raw: Estimate,
    /// Average of `(1/2) int ((b0 - b)/sigma)^2 dt`: the raw average with the
    /// mean-zero stochastic integral removed.
    pub cv: Estimate,
    /// `(Delta/2) ||(b0 - b)/sigma||^2_{mu_0}` by quadrature.
    pub oracle: f64,
}

pub fn transition_kl(
    model0: &ModelParams,
    model: &ModelParams,
    delta: f64,
    paths: usize,
    substeps: usize,
    seed: u64,
) -> TransitionKl {
    let (raw, cv) = girsanov_samples(model0, model, delta, paths, substeps, seed);
    TransitionKl {
        raw: Estimate::mean_of(&raw),
        cv: Estimate::mean_of(&cv),
        oracle: 0.5 * delta * weighted_sq_norm(model0.drift(), model.drift(), model0.sigma(), model0.density()),
    }
}

/// First two moments of the Girsanov log ratio over `[0, Delta]` under `P_0`,
/// with their small-`Delta` expansions by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirsanovMoments {
    pub mean: Estimate,
    pub second: Estimate,
    /// `(Delta/2) ||f||^2_{mu_0}`, `f = (b0 - b)/sigma`.
    pub mean_oracle: f64,
    /// `Delta ||f||^2_{mu_0}` plus the `Delta^2` term.
    pub second_oracle: f64,
}

pub fn girsanov_moments(
    model0: &ModelParams,
    model: &ModelParams,
    delta: f64,
    paths: usize,
    substeps: usize,
    seed: u64,
) -> GirsanovMoments {
    let (raw, _) = girsanov_samples(model0, model, delta, paths, substeps, seed);
    let sq: Vec<f64> = raw.iter().map(|l| l * l).collect();
    let (b0, b, sigma, pi0) = (model0.drift(), model.drift(), model0.sigma(), model0.density());
    let w = weighted_sq_norm(b0, b, sigma, pi0);
    GirsanovMoments {
        mean: Estimate::mean_of(&raw),
        second: Estimate::mean_of(&sq),
        mean_oracle: 0.5 * delta * w,
        second_oracle: delta * w + delta * delta * girsanov_second_order(b0, b, sigma, pi0),
    }
}

/// Per-path Girsanov log ratios and their drift parts `(1/2) int f^2 dt`.
fn girsanov_samples(
    model0: &ModelParams,
    model: &ModelParams,
    delta: f64,
    paths: usize,
    substeps: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let sigma = model0.sigma();
    let (b0, b) = (model0.drift(), model.drift());
    let coef0 = Coefficients::new(model0);
    let pi0 = model0.density();
    let dt = delta / substeps as f64;
    let mut raw = Vec::with_capacity(paths);
    let mut cv = Vec::with_capacity(paths);
    let mut rng = rng_for(seed);
    for _ in 0..paths {
        let x0 = pi0.sample(&mut rng);
        let path = simulate_fine(&coef0, x0, dt, substeps, &mut rng);
        raw.push(girsanov_loglik_ratio(b0, b, sigma, &path));
        let drift_part: f64 = path.values[..path.values.len() - 1]
            .iter()
            .map(|x| (b0.eval(*x) - b.eval(*x)).powi(2) / sigma.eval(*x).powi(2))
            .sum::<f64>()
            * 0.5
            * dt;
        cv.push(drift_part);
    }
    (raw, cv)
}

/// Single-step Euler log ratio `log(p_0/p_b)(Delta, x, y)`.
fn euler_log_ratio(b0: f64, b: f64, s2: f64, delta: f64, d: f64) -> f64 {
    (b0 - b) * d / s2 - 0.5 * delta * (b0 * b0 - b * b) / s2
}

/// Monte-Carlo KL, variance and tensorization checks between `model0` (truth)
/// and `model` (same sigma).
pub fn kl_checks(model0: &ModelParams, model: &ModelParams, config: &KlCheckConfig) -> Result<KlReport> {
    if config.reps < 2 || config.short_paths < 2 {
        return Err(invalid("kl checks need at least two replications"));
    }
    let sigma = model0.sigma();
    let (b0, b) = (model0.drift(), model.drift());
    let delta = config.delta;
    let pi0 = model0.density();
    let pib = model.density();

    let step = transition_kl(model0, model, delta, config.short_paths, config.substeps, config.seed);
    let (kl_transition, kl_transition_cv, kl_transition_oracle) = (step.raw, step.cv, step.oracle);
    let l2 = l2_distance(b0.function(), b.function());
    let kl_inv = kl_invariant(model0, model);

    // joint pseudo-likelihood ratios over n transitions
    let mut joint = Vec::with_capacity(config.reps);
    let mut per_step_var = Vec::with_capacity(config.reps);
    for r in 0..config.reps {
        let cfg = PathConfig::new(config.n, delta, config.seed.wrapping_add(1 + r as u64))
            .with_substeps(config.substeps)
            .out_of_regime();
        let obs = simulate_observations_unchecked(model0, &cfg)?;
        let x0 = obs.samples[0];
        let mut total = (pi0.value_at(x0) / pib.value_at(x0)).ln();
        let mut steps = Vec::with_capacity(config.n);
        for w in obs.samples.windows(2) {
            let x = w[0];
            let d = wrap_increment(w[1] - x);
            let v = euler_log_ratio(b0.eval(x), b.eval(x), sigma.eval(x).powi(2), delta, d);
            steps.push(v);
            total += v;
        }
        joint.push(total);
        per_step_var.push(sample_variance(&steps));
    }
    let kl_joint = Estimate::mean_of(&joint);
    let var_joint = Estimate::variance_of(&joint);
    let var_transition = Estimate::mean_of(&per_step_var);
    let var_initial = invariant_log_ratio_variance(pi0, pib);
    let n = config.n as f64;
    let tensorization_rhs = Estimate {
        value: 3.0 * (var_initial + n * var_transition.value),
        se: 3.0 * n * var_transition.se,
    };

    Ok(KlReport {
        l2_distance: l2,
        kl_transition,
        kl_transition_cv,
        kl_transition_oracle,
        kl_transition_bound: delta * l2 * l2,
        kl_invariant: kl_inv,
        kl_joint,
        kl_joint_decomposition: kl_inv + n * kl_transition_oracle,
        var_joint,
        var_initial,
        var_transition,
        tensorization_rhs,
    })
}

fn simulate_observations_unchecked(model: &ModelParams, cfg: &PathConfig) -> Result<Observations> {
    if cfg.horizon() >= 1.0 {
        return simulate_observations(model, cfg);
    }
    let mut rng = rng_for(cfg.seed);
    let x0 = model.density().sample(&mut rng);
    let coef = Coefficients::new(model);
    let path = simulate_fine(&coef, x0, cfg.fine_step(), cfg.n * cfg.substeps, &mut rng);
    Observations::new(cfg.delta, path.values.iter().step_by(cfg.substeps).copied().collect())
}

/// `||(b0 - b)/sigma||^2_{mu_0}` by trapezoid quadrature on the density grid.
pub fn weighted_sq_norm(b0: &DriftSpec, b: &DriftSpec, sigma: &SigmaSpec, pi0: &crate::model::InvariantDensity) -> f64 {
    let cells = pi0.cells();
    let vals: Vec<f64> = pi0
        .values()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = i as f64 / cells as f64;
            (b0.eval(x) - b.eval(x)).powi(2) / sigma.eval(x).powi(2) * p
        })
        .collect();
    trapezoid(&vals)
}

/// Second-order (`Delta^2`) part of `E[(log p_0/p_b over [0, Delta])^2]`:
/// `1/4 int g^2 pi_0 + 1/2 int (b0 - b) g' pi_0` with `g = (b0 - b)^2/sigma^2`,
/// to be multiplied by `Delta^2`.
pub fn girsanov_second_order(b0: &DriftSpec, b: &DriftSpec, sigma: &SigmaSpec, pi0: &crate::model::InvariantDensity) -> f64 {
    let cells = pi0.cells();
    let g = |x: f64| (b0.eval(x) - b.eval(x)).powi(2) / sigma.eval(x).powi(2);
    let h = 1.0 / cells as f64;
    let vals: Vec<f64> = pi0
        .values()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = i as f64 * h;
            let dg = (g(x + 1e-5) - g(x - 1e-5)) / 2e-5;
            (0.25 * g(x).powi(2) + 0.5 * (b0.eval(x) - b.eval(x)) * dg) * p
        })
        .collect();
    trapezoid(&vals)
}

fn invariant_log_ratio_variance(pi0: &crate::model::InvariantDensity, pib: &crate::model::InvariantDensity) -> f64 {
    let cells = pi0.cells();
    let lr: Vec<f64> = (0..=cells)
        .map(|i| {
            let x = i as f64 / cells as f64;
            (pi0.value_at(x) / pib.value_at(x)).ln()
        })
        .collect();
    let m1: Vec<f64> = lr.iter().zip(pi0.values()).map(|(l, p)| l * p).collect();
    let m2: Vec<f64> = lr.iter().zip(pi0.values()).map(|(l, p)| l * l * p).collect();
    let mean = trapezoid(&m1);
    (trapezoid(&m2) - mean * mean).max(0.0)
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_increment(0.2), 0.2);
        assert!((wrap_increment(0.7) + 0.3).abs() < 1e-15);
        assert_eq!(wrap_increment(-0.5), 0.5);
        assert_eq!(wrap_increment(0.5), 0.5);
    }

    #[test]
    fn reflection_stays_inside() {
        for &u in &[-3.7, -1.0, 0.2, 1.0, 2.5, 7.1] {
            let r = reflect_into(u, -1.0, 1.0);
            assert!((-1.0..=1.0).contains(&r));
        }
        assert!((reflect_into(1.3, -1.0, 1.0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn mh_symmetric_equal_targets() {
        assert_eq!(mh_accept_prob(-3.2, -3.2, 0.1, 0.1), 1.0);
        assert!((mh_accept_prob(0.0, -1.0, 0.0, 0.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn sieve_mass_first_level() {
        let h = sieve_masses(12);
        let direct: f64 = (1..60).map(|j| (-(2f64.powi(j))).exp()).sum();
        assert!((h[0] - (-2.0f64).exp() / direct).abs() < 1e-12);
        assert!((h[0] - 0.8788).abs() < 1e-3);
    }

    #[test]
    fn q_zeta() {
        assert_eq!(QDensity::symmetric_uniform(2.0).zeta(2.0), 0.25);
        assert_eq!(QDensity::Uniform { lo: 0.0, hi: 1.0 }.zeta(1.0), 0.0);
        let g = QDensity::TruncatedGaussian { sd: 1.0, bound: 2.0 };
        assert!(g.zeta(1.0) > 0.0);
        assert!((g.cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn brownian_transition_density() {
        let sigma = SigmaSpec::constant(1.0).unwrap();
        let b = DriftSpec::zero();
        let (x, y, d) = (0.2, 0.23, 0.01);
        let want = -0.5 * (2.0 * PI * d).ln() - (y - x) * (y - x) / (2.0 * d);
        assert!((transition_log_density(&b, &sigma, d, x, y) - want).abs() < 1e-12);
    }
}
