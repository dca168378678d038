//! The periodic diffusion `dX = b(X) dt + sigma(X) dW`: drift and diffusion
//! specifications, the invariant density `pi_b`, its bounds, the scale
//! function, and divergences between invariant laws.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::function::{cumulative_trapezoid, sup_norm, trapezoid, PeriodicFunction, TrigSeries};
use crate::wavelet::{CoefficientVector, WaveletBasis, WaveletFamily};

/// Grid used for sup-norm checks.
pub const CHECK_GRID: usize = 4096;
/// Default number of cells of the model grid.
pub const MODEL_GRID: usize = 4096;

const THETA_TOL: f64 = 1e-9;

/// A periodic drift with its derivative and the `C^1` bound `K0`.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    function: PeriodicFunction,
    derivative: PeriodicFunction,
    k0: f64,
}

impl DriftSpec {
    /// Checks `||b||_inf + ||b'||_inf <= K0` on the check grid.
    pub fn new(function: PeriodicFunction, derivative: PeriodicFunction, k0: f64) -> Result<Self> {
        let spec = Self::unchecked(function, derivative, k0);
        spec.check_theta_membership()?;
        Ok(spec)
    }

    /// Derivative by the function's own rule (analytic for trigonometric
    /// series, central differences otherwise).
    pub fn from_function(function: PeriodicFunction, k0: f64) -> Result<Self> {
        let derivative = function.derivative(CHECK_GRID);
        Self::new(function, derivative, k0)
    }

    /// No membership check; `K0` is taken at face value.
    pub fn unchecked(function: PeriodicFunction, derivative: PeriodicFunction, k0: f64) -> Self {
        Self { function, derivative, k0 }
    }

    /// `K0` set to the measured `C^1` norm.
    pub fn tight(function: PeriodicFunction, derivative: PeriodicFunction) -> Self {
        let mut spec = Self::unchecked(function, derivative, 0.0);
        spec.k0 = spec.c1_norm();
        spec
    }

    pub fn closed_form(series: TrigSeries, k0: f64) -> Result<Self> {
        let d = series.derivative();
        Self::new(PeriodicFunction::trig(series), PeriodicFunction::trig(d), k0)
    }

    pub fn zero() -> Self {
        Self::unchecked(PeriodicFunction::zero(), PeriodicFunction::zero(), 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::unchecked(PeriodicFunction::constant(c), PeriodicFunction::zero(), c.abs())
    }

    /// `b(x) = A cos(2 pi x)` with tight `K0`.
    pub fn cosine(amplitude: f64) -> Self {
        let series = TrigSeries::new(0.0, vec![amplitude], vec![]);
        let d = series.derivative();
        Self::tight(PeriodicFunction::trig(series), PeriodicFunction::trig(d))
    }

    /// A drift synthesized from wavelet coefficients, derivative from the
    /// differentiated series. `K0` defaults to the measured `C^1` norm.
    pub fn from_coefficients(basis: &WaveletBasis, coeffs: &CoefficientVector, k0: Option<f64>) -> Result<Self> {
        let f = basis.synthesize(coeffs)?;
        let d = basis.synthesize_derivative(coeffs, 1)?;
        match k0 {
            Some(k0) => Self::new(f, d, k0),
            None => Ok(Self::tight(f, d)),
        }
    }

    pub fn function(&self) -> &PeriodicFunction {
        &self.function
    }

    pub fn derivative(&self) -> &PeriodicFunction {
        &self.derivative
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.function.eval(x)
    }

    pub fn c1_norm(&self) -> f64 {
        sup_norm(&self.function, CHECK_GRID) + sup_norm(&self.derivative, CHECK_GRID)
    }

    pub fn check_theta_membership(&self) -> Result<()> {
        let norm = self.c1_norm();
        if !norm.is_finite() || norm > self.k0 * (1.0 + THETA_TOL) + THETA_TOL {
            return Err(domain(format!("C^1 norm {norm:.6} exceeds K0 = {}", self.k0)));
        }
        Ok(())
    }

    /// Same drift with evaluators replaced by interpolated tables; used on hot paths.
    pub fn tabulated(&self, len: usize) -> Self {
        Self {
            function: self.function.tabulated(len),
            derivative: self.derivative.tabulated(len),
            k0: self.k0,
        }
    }
}

/// The known diffusion coefficient with bounds `sigma_L <= sigma <= sigma_U`.
#[derive(Debug, Clone)]
pub struct SigmaSpec {
    function: PeriodicFunction,
    derivative: PeriodicFunction,
    second_derivative: PeriodicFunction,
    sigma_l: f64,
    sigma_u: f64,
}

impl SigmaSpec {
    pub fn constant(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            function: PeriodicFunction::constant(sigma),
            derivative: PeriodicFunction::zero(),
            second_derivative: PeriodicFunction::zero(),
            sigma_l: sigma,
            sigma_u: sigma,
        })
    }

    /// Bounds measured on the check grid.
    pub fn from_function(function: PeriodicFunction) -> Result<Self> {
        let values = crate::function::grid_values(&function, CHECK_GRID);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(function, lo, hi)
    }

    pub fn new(function: PeriodicFunction, sigma_l: f64, sigma_u: f64) -> Result<Self> {
        if !(sigma_l > 0.0) || sigma_u < sigma_l {
            return Err(domain(format!("invalid sigma bounds [{sigma_l}, {sigma_u}]")));
        }
        let derivative = function.derivative(CHECK_GRID);
        let second_derivative = derivative.derivative(CHECK_GRID);
        let spec = Self { function, derivative, second_derivative, sigma_l, sigma_u };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        for i in 0..CHECK_GRID {
            let v = self.function.eval(i as f64 / CHECK_GRID as f64);
            if v < self.sigma_l * (1.0 - 1e-12) || v > self.sigma_u * (1.0 + 1e-12) {
                return Err(domain(format!(
                    "sigma({}) = {v} outside [{}, {}]",
                    i as f64 / CHECK_GRID as f64,
                    self.sigma_l,
                    self.sigma_u
                )));
            }
        }
        Ok(())
    }

    pub fn function(&self) -> &PeriodicFunction {
        &self.function
    }

    pub fn derivative(&self) -> &PeriodicFunction {
        &self.derivative
    }

    pub fn second_derivative(&self) -> &PeriodicFunction {
        &self.second_derivative
    }

    pub fn sigma_l(&self) -> f64 {
        self.sigma_l
    }

    pub fn sigma_u(&self) -> f64 {
        self.sigma_u
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.function.eval(x)
    }

    pub fn is_constant(&self) -> Option<f64> {
        self.function.is_constant()
    }

    /// `sigma` scaled by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(domain("sigma scale must be positive"));
        }
        Ok(Self {
            function: self.function.scaled(factor),
            derivative: self.derivative.scaled(factor),
            second_derivative: self.second_derivative.scaled(factor),
            sigma_l: self.sigma_l * factor,
            sigma_u: self.sigma_u * factor,
        })
    }

    pub fn tabulated(&self, len: usize) -> Self {
        Self {
            function: self.function.tabulated(len),
            derivative: self.derivative.tabulated(len),
            second_derivative: self.second_derivative.tabulated(len),
            sigma_l: self.sigma_l,
            sigma_u: self.sigma_u,
        }
    }
}

/// Grid quantities shared by the density and the scale function.
#[derive(Debug)]
struct ModelGrid {
    /// `I_b` at `i / cells`, `i = 0..=cells`.
    integrated: Vec<f64>,
    /// `S(x) = int_0^x exp(-I_b)` at the nodes.
    scale: Vec<f64>,
    density: InvariantDensity,
}

/// Drift, diffusion coefficient and the optional smoothness class `Theta_s(A0)`.
#[derive(Debug, Clone)]
pub struct ModelParams {
    drift: DriftSpec,
    sigma: SigmaSpec,
    smoothness: Option<f64>,
    a0: Option<f64>,
    grid_cells: usize,
    cache: Arc<OnceLock<ModelGrid>>,
}

impl ModelParams {
    pub fn new(drift: DriftSpec, sigma: SigmaSpec) -> Self {
        Self {
            drift,
            sigma,
            smoothness: None,
            a0: None,
            grid_cells: MODEL_GRID,
            cache: Arc::new(OnceLock::new()),
        }
    }

    /// `b(x) = A cos(2 pi x)` with constant `sigma`.
    pub fn cosine(amplitude: f64, sigma: f64) -> Result<Self> {
        Ok(Self::new(DriftSpec::cosine(amplitude), SigmaSpec::constant(sigma)?))
    }

    /// Brownian motion on the circle scaled by `sigma`.
    pub fn brownian(sigma: f64) -> Result<Self> {
        Ok(Self::new(DriftSpec::zero(), SigmaSpec::constant(sigma)?))
    }

    /// Attaches `Theta_s(A0)`; checks the Besov bound through a wavelet analysis.
    pub fn with_smoothness(mut self, s: f64, a0: f64, basis: &WaveletBasis) -> Result<Self> {
        let coeffs = basis.analyze(self.drift.function(), basis.max_level())?;
        let norm = coeffs.besov_norm(s);
        if norm > a0 * (1.0 + 1e-9) {
            return Err(domain(format!("Besov norm {norm:.6} exceeds A0 = {a0}")));
        }
        self.smoothness = Some(s);
        self.a0 = Some(a0);
        Ok(self)
    }

    /// Changes the number of cells used for `I_b`, `pi_b` and `S`.
    pub fn with_grid(mut self, cells: usize) -> Result<Self> {
        if cells < 64 {
            return Err(domain(format!("model grid needs at least 64 cells, got {cells}")));
        }
        self.grid_cells = cells;
        self.cache = Arc::new(OnceLock::new());
        Ok(self)
    }

    pub fn with_drift(&self, drift: DriftSpec) -> Self {
        let mut out = Self::new(drift, self.sigma.clone());
        out.grid_cells = self.grid_cells;
        out
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    pub fn sigma(&self) -> &SigmaSpec {
        &self.sigma
    }

    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    pub fn a0(&self) -> Option<f64> {
        self.a0
    }

    pub fn grid_cells(&self) -> usize {
        self.grid_cells
    }

    fn grid(&self) -> &ModelGrid {
        self.cache.get_or_init(|| build_grid(&self.drift, &self.sigma, self.grid_cells))
    }

    /// `I_b(x) = int_0^x 2b/sigma^2`, linear between grid nodes.
    pub fn integrated_drift(&self, x: f64) -> f64 {
        let values = &self.grid().integrated;
        let cells = values.len() - 1;
        let x = x.clamp(0.0, 1.0);
        let pos = x * cells as f64;
        let i = (pos.floor() as usize).min(cells - 1);
        let frac = pos - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }

    /// The cached invariant density on the model grid.
    pub fn density(&self) -> &InvariantDensity {
        &self.grid().density
    }

    /// Invariant density on a grid of `grid_size` cells.
    pub fn invariant_density(&self, grid_size: usize) -> Result<InvariantDensity> {
        if grid_size < 64 {
            return Err(domain(format!("grid_size must be at least 64, got {grid_size}")));
        }
        if grid_size == self.grid_cells {
            return Ok(self.density().clone());
        }
        Ok(build_grid(&self.drift, &self.sigma, grid_size).density)
    }

    /// `(pi_L, pi_U) = (c, 1/c)` with `c = sigma_L^2 sigma_U^{-2} exp(-12 K0 sigma_L^{-2})`.
    pub fn density_bounds(&self) -> (f64, f64) {
        density_bounds(self.drift.k0(), self.sigma.sigma_l(), self.sigma.sigma_u())
    }

    /// `S(x) = int_0^x exp(-I_b(y)) dy` for `x` in `[0, 1]`.
    pub fn scale_function(&self, x: f64) -> f64 {
        let grid = self.grid();
        let cells = grid.scale.len() - 1;
        let x = x.clamp(0.0, 1.0);
        let pos = x * cells as f64;
        let i = (pos.floor() as usize).min(cells - 1);
        let h = 1.0 / cells as f64;
        let t = (pos - i as f64) * h;
        // integrate the linear interpolant of exp(-I) from node i to x
        let e0 = (-grid.integrated[i]).exp();
        let e1 = (-grid.integrated[i + 1]).exp();
        let ex = e0 + (e1 - e0) * t / h;
        grid.scale[i] + 0.5 * t * (e0 + ex)
    }

    /// Extension of `S` to the real line through `I_b(x + 1) = I_b(x) + I_b(1)`,
    /// so that `S(X_t)` of an unwrapped path is a local martingale.
    pub fn scale_function_unwrapped(&self, x: f64) -> f64 {
        let grid = self.grid();
        let i1 = *grid.integrated.last().expect("non-empty grid");
        let s1 = *grid.scale.last().expect("non-empty grid");
        let whole = x.floor();
        let frac = x - whole;
        let k = whole as i64;
        // sum_{j<k} e^{-j I(1)} for k >= 0, mirrored for k < 0
        let r = (-i1).exp();
        let geometric = |k: i64| -> f64 {
            if i1.abs() < 1e-14 {
                k as f64
            } else {
                (1.0 - r.powi(k as i32)) / (1.0 - r)
            }
        };
        s1 * geometric(k) + r.powi(k as i32) * self.scale_function(frac)
    }

    /// Inverse of `S` on `[0, S(1)]` by bisection to `1e-12`.
    pub fn inverse_scale_function(&self, y: f64) -> Result<f64> {
        let top = self.scale_function(1.0);
        if !(0.0..=top).contains(&y) {
            return Err(domain(format!("{y} outside the range [0, {top}] of S")));
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.scale_function(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.build()
    }
}

/// `(pi_L, pi_U)` from `K0`, `sigma_L`, `sigma_U`.
pub fn density_bounds(k0: f64, sigma_l: f64, sigma_u: f64) -> (f64, f64) {
    let lower = sigma_l.powi(2) / sigma_u.powi(2) * (-12.0 * k0 / sigma_l.powi(2)).exp();
    (lower, 1.0 / lower)
}

fn build_grid(drift: &DriftSpec, sigma: &SigmaSpec, cells: usize) -> ModelGrid {
    let h = 1.0 / cells as f64;
    let ratio = |x: f64| 2.0 * drift.eval(x) / sigma.eval(x).powi(2);
    // cell-wise Simpson for I_b
    let mut integrated = Vec::with_capacity(cells + 1);
    integrated.push(0.0);
    let mut acc = 0.0;
    let mut left = ratio(0.0);
    for i in 0..cells {
        let x0 = i as f64 * h;
        let mid = ratio(x0 + 0.5 * h);
        let right = ratio(x0 + h);
        acc += h / 6.0 * (left + 4.0 * mid + right);
        integrated.push(acc);
        left = right;
    }
    let neg: Vec<f64> = integrated.iter().map(|v| (-v).exp()).collect();
    let scale = cumulative_trapezoid(&neg);
    let total = scale[cells];
    let i1 = integrated[cells];
    let e1 = i1.exp();
    let raw: Vec<f64> = (0..=cells)
        .map(|i| {
            let x = i as f64 * h;
            let inner = e1 * (total - scale[i]) + scale[i];
            integrated[i].exp() / sigma.eval(x).powi(2) * inner
        })
        .collect();
    let normalizer = trapezoid(&raw);
    let values: Vec<f64> = raw.iter().map(|v| v / normalizer).collect();
    let density = InvariantDensity::from_values(values, normalizer);
    ModelGrid { integrated, scale, density }
}

/// `pi_b` on the closed uniform grid `i / cells`, `i = 0..=cells`.
#[derive(Debug, Clone)]
pub struct InvariantDensity {
    values: Vec<f64>,
    normalizer: f64,
    cdf: Vec<f64>,
}

impl InvariantDensity {
    /// Values need not be normalized; the CDF is.
    pub fn from_values(values: Vec<f64>, normalizer: f64) -> Self {
        let mut cdf = cumulative_trapezoid(&values);
        let total = *cdf.last().expect("non-empty density");
        for c in &mut cdf {
            *c /= total;
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;
        Self { values, normalizer, cdf }
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    /// Grid node positions.
    pub fn grid(&self) -> Vec<f64> {
        let cells = self.cells();
        (0..=cells).map(|i| i as f64 / cells as f64).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `H_b`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// `pi_b(x mod 1)` by linear interpolation.
    pub fn value_at(&self, x: f64) -> f64 {
        let cells = self.cells();
        let x = x.rem_euclid(1.0);
        let pos = x * cells as f64;
        let i = (pos.floor() as usize).min(cells - 1);
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Inverse CDF; ties go to the lower node.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let cells = self.cells();
        // first node with cdf >= u
        let j = self.cdf.partition_point(|c| *c < u);
        if j == 0 {
            return 0.0;
        }
        let j = j.min(cells);
        let i = j - 1;
        let (c0, c1) = (self.cdf[i], self.cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        ((i as f64 + frac) / cells as f64).min(1.0 - f64::EPSILON)
    }

    /// A draw from `mu_b` by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Trapezoid integral of the grid values.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn paired_densities(model0: &ModelParams, model: &ModelParams) -> (InvariantDensity, InvariantDensity) {
    let p = model0.density().clone();
    let q = if model.grid_cells == model0.grid_cells {
        model.density().clone()
    } else {
        build_grid(&model.drift, &model.sigma, model0.grid_cells).density
    };
    (p, q)
}

/// `K(pi_0, pi_b) = int pi_0 log(pi_0 / pi_b)`.
pub fn kl_invariant(model0: &ModelParams, model: &ModelParams) -> f64 {
    let (p, q) = paired_densities(model0, model);
    let integrand: Vec<f64> = p
        .values
        .iter()
        .zip(&q.values)
        .map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .collect();
    trapezoid(&integrand).max(0.0)
}

/// Squared Hellinger distance `int (sqrt(pi_0) - sqrt(pi_b))^2`.
pub fn hellinger_invariant(model0: &ModelParams, model: &ModelParams) -> f64 {
    let (p, q) = paired_densities(model0, model);
    let integrand: Vec<f64> = p
        .values
        .iter()
        .zip(&q.values)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .collect();
    trapezoid(&integrand)
}

/// `||pi_0 - pi_b||_2^2` and `sup |pi_0 - pi_b|` on the model grid.
pub fn density_differences(model0: &ModelParams, model: &ModelParams) -> (f64, f64) {
    let (p, q) = paired_densities(model0, model);
    let diff: Vec<f64> = p.values.iter().zip(&q.values).map(|(a, b)| a - b).collect();
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    let sup = diff.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    (trapezoid(&sq), sup)
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub drift: FunctionFile,
    pub sigma: FunctionFile,
    #[serde(rename = "K0", default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(rename = "A0", default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionFile {
    Constant {
        value: f64,
    },
    ClosedForm {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
    Wavelet {
        #[serde(flatten)]
        family: WaveletFamily,
        coefficients: CoefficientVector,
    },
}

impl FunctionFile {
    pub fn closed_form(series: &TrigSeries) -> Self {
        Self::ClosedForm { constant: series.constant, cos: series.cos.clone(), sin: series.sin.clone() }
    }

    /// The function and its analytic (or series) derivative.
    pub fn build(&self) -> Result<(PeriodicFunction, PeriodicFunction)> {
        match self {
            Self::Constant { value } => Ok((PeriodicFunction::constant(*value), PeriodicFunction::zero())),
            Self::ClosedForm { constant, cos, sin } => {
                let t = TrigSeries::new(*constant, cos.clone(), sin.clone());
                let d = t.derivative();
                Ok((PeriodicFunction::trig(t), PeriodicFunction::trig(d)))
            }
            Self::Wavelet { family, coefficients } => {
                let basis = WaveletBasis::new(*family, coefficients.resolution().max(1))?;
                Ok((basis.synthesize(coefficients)?, basis.synthesize_derivative(coefficients, 1)?))
            }
        }
    }
}

impl ModelFile {
    pub fn build(&self) -> Result<ModelParams> {
        let (b, db) = self.drift.build()?;
        let drift = match self.k0 {
            Some(k0) => DriftSpec::new(b, db, k0)?,
            None => DriftSpec::tight(b, db),
        };
        let sigma = match &self.sigma {
            FunctionFile::Constant { value } => SigmaSpec::constant(*value)?,
            other => SigmaSpec::from_function(other.build()?.0)?,
        };
        let model = ModelParams::new(drift, sigma);
        match (self.s, self.a0) {
            (Some(s), Some(a0)) => {
                let basis = WaveletBasis::daubechies(8, 10)?;
                model.with_smoothness(s, a0, &basis)
            }
            (None, None) => Ok(model),
            _ => Err(invalid("s and A0 must be given together")),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
