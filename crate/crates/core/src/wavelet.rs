//! Periodized wavelet approximation spaces `S_m`.
//!
//! `S_m` is spanned by the constant `psi_{-1,0} = 1` and the periodized
//! wavelets `psi_{lk}`, `0 <= l < m`, `0 <= k < 2^l`, so `dim S_m = 2^m`.
//! Coefficients are stored in the global order `j = 0` for `(-1, 0)` and
//! `j = 2^l + k` otherwise, which makes `S_m` a prefix of `S_{m+1}`.
//!
//! Two families are available:
//!
//! * periodized Daubechies wavelets with `order` vanishing moments. The mother
//!   wavelet is tabulated once by the cascade recursion on a dyadic grid of
//!   `2^14` nodes per unit of support and read back by linear interpolation.
//!   For `x` on the quadrature grid the lookups fall exactly on table nodes.
//! * trigonometric polynomials: `j = 2f - 1` is `sqrt(2) cos(2 pi f x)` and
//!   `j = 2f` is `sqrt(2) sin(2 pi f x)`.
//!
//! Inner products use the periodic trapezoid rule on `quad_points` nodes.

use std::collections::HashMap;
use std::f64::consts::{SQRT_2, TAU};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, invalid, Result};
use crate::function::{grid_values, periodic_mean, PeriodicFunction};

/// Default number of quadrature nodes for inner products.
pub const DEFAULT_QUAD_POINTS: usize = 1 << 14;

/// log2 of the number of table nodes per unit of wavelet support.
const TABLE_RES_LOG2: u32 = 14;

const DB4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_6,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_08,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

const DB6: [f64; 12] = [
    0.111_540_743_350_109_46,
    0.494_623_890_398_453_1,
    0.751_133_908_021_095_4,
    0.315_250_351_709_197_6,
    -0.226_264_693_965_439_82,
    -0.129_766_867_567_261_94,
    0.097_501_605_587_323_05,
    0.027_522_865_530_305_73,
    -0.031_582_039_317_486_03,
    0.000_553_842_201_161_496_1,
    0.004_777_257_510_945_511,
    -0.001_077_301_085_308_479_6,
];

const DB8: [f64; 16] = [
    0.054_415_842_243_104_01,
    0.312_871_590_914_299_97,
    0.675_630_736_297_289_8,
    0.585_354_683_654_206_7,
    -0.015_829_105_256_349_306,
    -0.284_015_542_961_546_9,
    0.000_472_484_573_913_282_8,
    0.128_747_426_620_478_46,
    -0.017_369_301_001_807_546,
    -0.044_088_253_930_794_75,
    0.013_981_027_917_398_282,
    0.008_746_094_047_405_777,
    -0.004_870_352_993_451_574,
    -0.000_391_740_373_376_947_05,
    0.000_675_449_406_450_569_4,
    -0.000_117_476_784_124_769_53,
];

#[allow(clippy::excessive_precision)]
const DB10: [f64; 20] = [
    0.026_670_057_900_555_554,
    0.188_176_800_077_691_5,
    0.527_201_188_931_725_6,
    0.688_459_039_453_603_6,
    0.281_172_343_660_577_46,
    -0.249_846_424_327_315_38,
    -0.195_946_274_377_377_04,
    0.127_369_340_335_793_26,
    0.093_057_364_603_572_35,
    -0.071_394_147_166_397_09,
    -0.029_457_536_821_875_813,
    0.033_212_674_059_341_0,
    0.003_606_553_566_956_169_7,
    -0.010_733_175_483_330_575,
    0.001_395_351_747_052_901_2,
    0.001_992_405_295_185_056_1,
    -0.000_685_856_694_959_711_6,
    -0.000_116_466_855_129_285_45,
    0.000_093_588_670_320_069_59,
    -0.000_013_264_202_894_521_245,
];

/// Low-pass filter of the Daubechies wavelet with `order` vanishing moments.
pub fn daubechies_filter(order: usize) -> Option<&'static [f64]> {
    match order {
        4 => Some(&DB4),
        6 => Some(&DB6),
        8 => Some(&DB8),
        10 => Some(&DB10),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WaveletFamily {
    Daubechies { order: usize },
    Fourier,
}

impl Default for WaveletFamily {
    fn default() -> Self {
        Self::Daubechies { order: 8 }
    }
}

/// Tabulated scaling function and mother wavelet with two derivatives.
struct MotherWavelet {
    support: usize,
    res: usize,
    phi: Vec<f64>,
    psi: Vec<f64>,
    dpsi: Vec<f64>,
    d2psi: Vec<f64>,
}

impl MotherWavelet {
    fn cached(order: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<MotherWavelet>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("wavelet cache poisoned");
        if let Some(w) = guard.get(&order) {
            return Ok(w.clone());
        }
        let filter = daubechies_filter(order)
            .ok_or_else(|| invalid(format!("no Daubechies filter of order {order}")))?;
        let w = Arc::new(Self::cascade(filter)?);
        guard.insert(order, w.clone());
        Ok(w)
    }

    fn cascade(h: &[f64]) -> Result<Self> {
        let taps = h.len();
        let support = taps - 1;
        let res = 1usize << TABLE_RES_LOG2;
        let last = support * res;

        let phi_int = scaling_at_integers(h)?;
        let mut phi = vec![0.0; last + 1];
        for (i, v) in phi_int.iter().enumerate() {
            phi[i * res] = *v;
        }
        for r in 1..=TABLE_RES_LOG2 {
            let stride = res >> r;
            let mut idx = stride;
            while idx < last {
                let mut acc = 0.0;
                for (k, hk) in h.iter().enumerate() {
                    let t = 2 * idx as isize - (k * res) as isize;
                    if t >= 0 && t <= last as isize {
                        acc += hk * phi[t as usize];
                    }
                }
                phi[idx] = SQRT_2 * acc;
                idx += 2 * stride;
            }
        }

        // psi(x) = sqrt(2) sum_k g_k phi(2x - k), g_k = (-1)^k h_{L-1-k}
        let mut psi = vec![0.0; last + 1];
        for (i, out) in psi.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..taps {
                let t = 2 * i as isize - (k * res) as isize;
                if t >= 0 && t <= last as isize {
                    let g = if k % 2 == 0 { h[taps - 1 - k] } else { -h[taps - 1 - k] };
                    acc += g * phi[t as usize];
                }
            }
            *out = SQRT_2 * acc;
        }

        let step = 1.0 / res as f64;
        let mut dpsi = vec![0.0; last + 1];
        let mut d2psi = vec![0.0; last + 1];
        for i in 1..last {
            dpsi[i] = (psi[i + 1] - psi[i - 1]) / (2.0 * step);
            d2psi[i] = (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) / (step * step);
        }

        Ok(Self { support, res, phi, psi, dpsi, d2psi })
    }

    #[inline]
    fn lookup(&self, table: &[f64], t: f64) -> f64 {
        if !(0.0..self.support as f64).contains(&t) {
            return 0.0;
        }
        let pos = t * self.res as f64;
        let i = pos as usize;
        let frac = pos - i as f64;
        if frac == 0.0 {
            table[i]
        } else {
            table[i] * (1.0 - frac) + table[i + 1] * frac
        }
    }

    fn table(&self, derivative: usize) -> &[f64] {
        match derivative {
            0 => &self.psi,
            1 => &self.dpsi,
            _ => &self.d2psi,
        }
    }
}

/// Values of the scaling function at the integers `0..=L-1`: the eigenvector
/// of the refinement matrix for eigenvalue 1, normalized to unit sum.
fn scaling_at_integers(h: &[f64]) -> Result<Vec<f64>> {
    let taps = h.len();
    // phi vanishes at 0 and L-1; solve on the interior nodes
    let inner = taps - 2;
    let mut a = DMatrix::<f64>::zeros(inner, inner);
    for i in 0..inner {
        for j in 0..inner {
            let idx = 2 * (i + 1) as isize - (j + 1) as isize;
            if (0..taps as isize).contains(&idx) {
                a[(i, j)] = SQRT_2 * h[idx as usize];
            }
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..inner {
        a[(inner - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(inner);
    rhs[inner - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| crate::Error::Numerical("singular refinement system".into()))?;
    let mut out = vec![0.0; taps];
    out[1..=inner].copy_from_slice(sol.as_slice());
    Ok(out)
}

struct BasisInner {
    family: WaveletFamily,
    max_level: usize,
    quad_points: usize,
    mother: Option<Arc<MotherWavelet>>,
    /// Daubechies: periodized `psi_{l,0}` on the quadrature nodes, one row per level.
    /// Fourier: `cos(2 pi i / Q)` and `sin(2 pi i / Q)`.
    quad_tables: Vec<Vec<f64>>,
}

/// An immutable, cheaply clonable handle on a periodized basis.
#[derive(Clone)]
pub struct WaveletBasis {
    inner: Arc<BasisInner>,
}

impl fmt::Debug for WaveletBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveletBasis")
            .field("family", &self.inner.family)
            .field("max_level", &self.inner.max_level)
            .field("quad_points", &self.inner.quad_points)
            .finish()
    }
}

impl WaveletBasis {
    pub fn new(family: WaveletFamily, max_level: usize) -> Result<Self> {
        Self::with_quad_points(family, max_level, DEFAULT_QUAD_POINTS)
    }

    pub fn daubechies(order: usize, max_level: usize) -> Result<Self> {
        Self::new(WaveletFamily::Daubechies { order }, max_level)
    }

    pub fn fourier(max_level: usize) -> Result<Self> {
        Self::new(WaveletFamily::Fourier, max_level)
    }

    pub fn with_quad_points(family: WaveletFamily, max_level: usize, quad_points: usize) -> Result<Self> {
        if !quad_points.is_power_of_two() {
            return Err(invalid(format!("quad_points must be a power of two, got {quad_points}")));
        }
        // at least eight nodes per finest-level shift
        if (1usize << max_level) * 8 > quad_points {
            return Err(invalid(format!(
                "max_level {max_level} too fine for {quad_points} quadrature nodes"
            )));
        }
        let q = quad_points;
        let (mother, quad_tables) = match family {
            WaveletFamily::Daubechies { order } => {
                let mother = MotherWavelet::cached(order)?;
                let tables = (0..max_level)
                    .map(|l| {
                        (0..q)
                            .map(|i| periodized(&mother, &mother.psi, l, 0, i as f64 / q as f64))
                            .collect()
                    })
                    .collect();
                (Some(mother), tables)
            }
            WaveletFamily::Fourier => {
                let cos = (0..q).map(|i| (TAU * i as f64 / q as f64).cos()).collect();
                let sin = (0..q).map(|i| (TAU * i as f64 / q as f64).sin()).collect();
                (None, vec![cos, sin])
            }
        };
        Ok(Self {
            inner: Arc::new(BasisInner { family, max_level, quad_points, mother, quad_tables }),
        })
    }

    pub fn family(&self) -> WaveletFamily {
        self.inner.family
    }

    pub fn max_level(&self) -> usize {
        self.inner.max_level
    }

    pub fn quad_points(&self) -> usize {
        self.inner.quad_points
    }

    /// `D_m = 2^m`.
    pub fn dimension(m: usize) -> usize {
        1 << m
    }

    fn check_level(&self, m: usize) -> Result<()> {
        if m > self.inner.max_level {
            return Err(domain(format!(
                "resolution {m} exceeds basis max_level {}",
                self.inner.max_level
            )));
        }
        Ok(())
    }

    /// Value of `psi_{lk}` at `x` (any real; periodic).
    pub fn evaluate(&self, l: i32, k: usize, x: f64) -> Result<f64> {
        let j = self.checked_index(l, k)?;
        Ok(self.eval_index(j, x))
    }

    fn checked_index(&self, l: i32, k: usize) -> Result<usize> {
        if l == -1 {
            if k != 0 {
                return Err(domain("k must be 0 at level -1"));
            }
            return Ok(0);
        }
        if l < -1 || l as usize >= self.inner.max_level {
            return Err(domain(format!(
                "level {l} outside [-1, {})",
                self.inner.max_level
            )));
        }
        if k >= 1 << l {
            return Err(domain(format!("shift {k} outside [0, 2^{l})")));
        }
        Ok((1 << l) + k)
    }

    /// Value of the basis function with global index `j` at `x`.
    pub fn eval_index(&self, j: usize, x: f64) -> f64 {
        self.eval_index_derivative(j, x, 0)
    }

    pub fn eval_index_derivative(&self, j: usize, x: f64, derivative: usize) -> f64 {
        if j == 0 {
            return if derivative == 0 { 1.0 } else { 0.0 };
        }
        let x = x.rem_euclid(1.0);
        match self.inner.family {
            WaveletFamily::Fourier => fourier_value(j, x, derivative),
            WaveletFamily::Daubechies { .. } => {
                let (l, k) = level_shift(j);
                let mother = self.mother();
                let v = periodized(mother, mother.table(derivative), l, k, x);
                v * ((1u64 << l) as f64).powi(derivative as i32)
            }
        }
    }

    fn mother(&self) -> &MotherWavelet {
        self.inner.mother.as_deref().expect("Daubechies basis without tables")
    }

    /// Writes all `D_m` basis values (or derivatives) at `x` into `out`.
    pub fn eval_all(&self, m: usize, x: f64, derivative: usize, out: &mut [f64]) {
        let dim = 1usize << m;
        assert!(out.len() >= dim, "output buffer shorter than D_m");
        let out = &mut out[..dim];
        out.fill(0.0);
        out[0] = if derivative == 0 { 1.0 } else { 0.0 };
        let x = x.rem_euclid(1.0);
        match self.inner.family {
            WaveletFamily::Fourier => {
                for (j, o) in out.iter_mut().enumerate().skip(1) {
                    *o = fourier_value(j, x, derivative);
                }
            }
            WaveletFamily::Daubechies { .. } => {
                let mother = self.mother();
                let table = mother.table(derivative);
                for l in 0..m {
                    let scale = 1usize << l;
                    let factor = (scale as f64).sqrt() * (scale as f64).powi(derivative as i32);
                    let t = x * scale as f64;
                    let base = t.floor();
                    let a0 = t - base;
                    let base = base as usize;
                    for s in 0..mother.support {
                        let k = (base + scale * mother.support - s) % scale;
                        out[scale + k] += factor * mother.lookup(table, a0 + s as f64);
                    }
                }
            }
        }
    }

    /// `sum_j c_j psi_j(x)` (or its derivative) without allocating.
    pub fn eval_series(&self, coeffs: &CoefficientVector, x: f64, derivative: usize) -> f64 {
        let m = coeffs.m;
        let c = &coeffs.values;
        let x = x.rem_euclid(1.0);
        let mut acc = if derivative == 0 { c[0] } else { 0.0 };
        match self.inner.family {
            WaveletFamily::Fourier => {
                for (j, cj) in c.iter().enumerate().skip(1) {
                    if *cj != 0.0 {
                        acc += cj * fourier_value(j, x, derivative);
                    }
                }
            }
            WaveletFamily::Daubechies { .. } => {
                let mother = self.mother();
                let table = mother.table(derivative);
                for l in 0..m {
                    let scale = 1usize << l;
                    let factor = (scale as f64).sqrt() * (scale as f64).powi(derivative as i32);
                    let t = x * scale as f64;
                    let base = t.floor();
                    let a0 = t - base;
                    let base = base as usize;
                    let mut level = 0.0;
                    for s in 0..mother.support {
                        let k = (base + scale * mother.support - s) % scale;
                        let ck = c[scale + k];
                        if ck != 0.0 {
                            level += ck * mother.lookup(table, a0 + s as f64);
                        }
                    }
                    acc += factor * level;
                }
            }
        }
        acc
    }

    /// The L2 projection coefficients `<f, psi_{lk}>`, `-1 <= l < m`, by the
    /// periodic trapezoid rule.
    pub fn analyze(&self, f: &PeriodicFunction, m: usize) -> Result<CoefficientVector> {
        self.check_level(m)?;
        let samples = grid_values(f, self.inner.quad_points);
        self.analyze_samples(&samples, m)
    }

    /// As [`analyze`](Self::analyze), for values already sampled on the quadrature nodes.
    pub fn analyze_samples(&self, samples: &[f64], m: usize) -> Result<CoefficientVector> {
        self.check_level(m)?;
        let q = self.inner.quad_points;
        if samples.len() != q {
            return Err(invalid(format!("expected {q} samples, got {}", samples.len())));
        }
        let inv_q = 1.0 / q as f64;
        let mut out = CoefficientVector::zeros(m);
        out.values[0] = samples.iter().sum::<f64>() * inv_q;
        match self.inner.family {
            WaveletFamily::Fourier => {
                let (cos, sin) = (&self.inner.quad_tables[0], &self.inner.quad_tables[1]);
                for j in 1..out.values.len() {
                    let freq = j.div_ceil(2);
                    let table = if j % 2 == 1 { cos } else { sin };
                    let mut acc = 0.0;
                    for (i, s) in samples.iter().enumerate() {
                        acc += s * table[(freq * i) % q];
                    }
                    out.values[j] = SQRT_2 * acc * inv_q;
                }
            }
            WaveletFamily::Daubechies { .. } => {
                let support = self.mother().support;
                for l in 0..m {
                    let scale = 1usize << l;
                    let row = &self.inner.quad_tables[l];
                    let shift = q / scale;
                    let window = (support * shift + 1).min(q);
                    for k in 0..scale {
                        let offset = k * shift;
                        let mut acc = 0.0;
                        for (jdx, p) in row[..window].iter().enumerate() {
                            acc += p * samples[(jdx + offset) % q];
                        }
                        out.values[scale + k] = acc * inv_q;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Values of the synthesized series on the quadrature nodes.
    pub fn synthesize_on_quadrature(&self, coeffs: &CoefficientVector) -> Result<Vec<f64>> {
        self.check_level(coeffs.m)?;
        let q = self.inner.quad_points;
        match self.inner.family {
            WaveletFamily::Fourier => Ok((0..q)
                .map(|i| self.eval_series(coeffs, i as f64 / q as f64, 0))
                .collect()),
            WaveletFamily::Daubechies { .. } => {
                let support = self.mother().support;
                let mut out = vec![coeffs.values[0]; q];
                for l in 0..coeffs.m {
                    let scale = 1usize << l;
                    let row = &self.inner.quad_tables[l];
                    let shift = q / scale;
                    let window = (support * shift + 1).min(q);
                    for k in 0..scale {
                        let c = coeffs.values[scale + k];
                        if c == 0.0 {
                            continue;
                        }
                        let offset = k * shift;
                        for (jdx, p) in row[..window].iter().enumerate() {
                            out[(jdx + offset) % q] += c * p;
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// `x -> sum_{lk} c_{lk} psi_{lk}(x)`.
    pub fn synthesize(&self, coeffs: &CoefficientVector) -> Result<PeriodicFunction> {
        self.check_level(coeffs.m)?;
        let basis = self.clone();
        let c = coeffs.clone();
        Ok(PeriodicFunction::from_fn(move |x| basis.eval_series(&c, x, 0)))
    }

    pub fn synthesize_derivative(&self, coeffs: &CoefficientVector, derivative: usize) -> Result<PeriodicFunction> {
        self.check_level(coeffs.m)?;
        let basis = self.clone();
        let c = coeffs.clone();
        Ok(PeriodicFunction::from_fn(move |x| basis.eval_series(&c, x, derivative)))
    }

    /// L2 projection `pi_m f` as a function.
    pub fn project(&self, f: &PeriodicFunction, m: usize) -> Result<PeriodicFunction> {
        self.synthesize(&self.analyze(f, m)?)
    }

    /// `sup_x sum_k |psi^{(d)}_{lk}(x)|` for one level, over a grid of `grid` points.
    /// Level `-1` gives the constant function's value.
    pub fn level_sup_sum(&self, level: i32, derivative: usize, grid: usize) -> f64 {
        if level < 0 {
            return if derivative == 0 { 1.0 } else { 0.0 };
        }
        let l = level as usize;
        let scale = 1usize << l;
        let mut buf = vec![0.0; 2 * scale];
        let mut best = 0.0_f64;
        for i in 0..grid {
            let x = i as f64 / grid as f64;
            self.eval_all(l + 1, x, derivative, &mut buf);
            let s: f64 = buf[scale..2 * scale].iter().map(|v| v.abs()).sum();
            best = best.max(s);
        }
        best
    }

    /// Scaling function `phi` of the Daubechies family at `t` (zero outside its support).
    pub fn scaling_function(&self, t: f64) -> Option<f64> {
        self.inner.mother.as_ref().map(|m| m.lookup(&m.phi, t))
    }

    /// Mother wavelet `psi` of the Daubechies family at `t`.
    pub fn mother_wavelet(&self, t: f64) -> Option<f64> {
        self.inner.mother.as_ref().map(|m| m.lookup(&m.psi, t))
    }
}

/// `(l, k)` for a global index `j >= 1`.
pub fn level_shift(j: usize) -> (usize, usize) {
    debug_assert!(j >= 1);
    let l = (usize::BITS - 1 - j.leading_zeros()) as usize;
    (l, j - (1 << l))
}

fn periodized(mother: &MotherWavelet, table: &[f64], l: usize, k: usize, x: f64) -> f64 {
    let scale = (1usize << l) as f64;
    let mut arg = (x * scale - k as f64).rem_euclid(scale);
    let support = mother.support as f64;
    let mut acc = 0.0;
    while arg < support {
        acc += mother.lookup(table, arg);
        arg += scale;
    }
    acc * scale.sqrt()
}

fn fourier_value(j: usize, x: f64, derivative: usize) -> f64 {
    let freq = j.div_ceil(2) as f64;
    let w = TAU * freq;
    let (s, c) = (w * x).sin_cos();
    let is_cos = j % 2 == 1;
    let v = match (derivative % 4, is_cos) {
        (0, true) => c,
        (0, false) => s,
        (1, true) => -s,
        (1, false) => c,
        (2, true) => -c,
        (2, false) => -s,
        (3, true) => s,
        (_, _) => -c,
    };
    SQRT_2 * v * w.powi(derivative as i32)
}

/// Coefficients `{c_{lk}}` of an element of `S_m`, `D_m = 2^m` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    m: usize,
    values: Vec<f64>,
}

impl CoefficientVector {
    pub fn zeros(m: usize) -> Self {
        Self { m, values: vec![0.0; 1 << m] }
    }

    pub fn from_values(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 1 << m {
            return Err(invalid(format!(
                "resolution {m} needs {} coefficients, got {}",
                1usize << m,
                values.len()
            )));
        }
        Ok(Self { m, values })
    }

    /// Unit vector at `(l, k)`.
    pub fn unit(m: usize, l: i32, k: usize) -> Result<Self> {
        let mut c = Self::zeros(m);
        c.set(l, k, 1.0)?;
        Ok(c)
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn index(&self, l: i32, k: usize) -> Result<usize> {
        if l == -1 && k == 0 {
            return Ok(0);
        }
        if l < 0 || l as usize >= self.m || k >= 1 << l {
            return Err(domain(format!("index ({l},{k}) outside resolution {}", self.m)));
        }
        Ok((1 << l) + k)
    }

    pub fn get(&self, l: i32, k: usize) -> Result<f64> {
        Ok(self.values[self.index(l, k)?])
    }

    pub fn set(&mut self, l: i32, k: usize, v: f64) -> Result<()> {
        let i = self.index(l, k)?;
        self.values[i] = v;
        Ok(())
    }

    /// Iterates `(l, k, value)` in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (i32, usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(j, v)| {
            if j == 0 {
                (-1, 0, *v)
            } else {
                let (l, k) = level_shift(j);
                (l as i32, k, *v)
            }
        })
    }

    /// Zero-padded (or truncated) copy at resolution `m`.
    pub fn resized(&self, m: usize) -> Self {
        let mut values = vec![0.0; 1 << m];
        let n = values.len().min(self.values.len());
        values[..n].copy_from_slice(&self.values[..n]);
        Self { m, values }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { m: self.m, values: self.values.iter().map(|v| alpha * v).collect() }
    }

    /// Euclidean norm of the coefficients, equal to the L2 norm of the synthesis.
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `||a - b||` after padding both to the larger resolution.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        let m = self.m.max(other.m);
        let (a, b) = (self.resized(m), other.resized(m));
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Periodic Besov `B^s_{2,inf}` norm:
    /// `|c_{-1,0}| + max_l 2^{ls} (sum_k c_{lk}^2)^{1/2}`.
    pub fn besov_norm(&self, s: f64) -> f64 {
        let top = (0..self.m)
            .map(|l| {
                let level = &self.values[1 << l..2 << l];
                (l as f64 * s).exp2() * level.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        self.values[0].abs() + top
    }

    /// The `B^s_{inf,1}` norm `|c_{-1,0}| + sum_l 2^{l(s+1/2)} max_k |c_{lk}|`,
    /// reported as a diagnostic only.
    pub fn besov_infty1_norm(&self, s: f64) -> f64 {
        let sum: f64 = (0..self.m)
            .map(|l| {
                let level = &self.values[1 << l..2 << l];
                (l as f64 * (s + 0.5)).exp2() * level.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            })
            .sum();
        self.values[0].abs() + sum
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientFile {
    m: usize,
    coeffs: Vec<(i32, usize, f64)>,
}

impl Serialize for CoefficientVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CoefficientFile { m: self.m, coeffs: self.entries().collect() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = CoefficientFile::deserialize(deserializer)?;
        if file.m > 30 {
            return Err(D::Error::custom("resolution too large"));
        }
        let mut c = CoefficientVector::zeros(file.m);
        for (l, k, v) in file.coeffs {
            c.set(l, k, v).map_err(D::Error::custom)?;
        }
        Ok(c)
    }
}

/// `||f - g||_2` by the periodic trapezoid rule on the default quadrature grid.
pub fn l2_distance(f: &PeriodicFunction, g: &PeriodicFunction) -> f64 {
    l2_distance_with(f, g, DEFAULT_QUAD_POINTS)
}

pub fn l2_distance_with(f: &PeriodicFunction, g: &PeriodicFunction, nodes: usize) -> f64 {
    let (f, g) = (f.clone(), g.clone());
    periodic_mean(&PeriodicFunction::from_fn(move |x| (f.eval(x) - g.eval(x)).powi(2)), nodes).sqrt()
}

pub fn l2_norm(f: &PeriodicFunction) -> f64 {
    l2_distance(f, &PeriodicFunction::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db8(max_level: usize) -> WaveletBasis {
        WaveletBasis::daubechies(8, max_level).unwrap()
    }

    #[test]
    fn filters_are_orthonormal() {
        for order in [4, 6, 8, 10] {
            let h = daubechies_filter(order).unwrap();
            let sum: f64 = h.iter().sum();
            assert!((sum - SQRT_2).abs() < 1e-14, "order {order}");
            for shift in 0..h.len() / 2 {
                let dot: f64 = (0..h.len() - 2 * shift).map(|i| h[i] * h[i + 2 * shift]).sum();
                let want = if shift == 0 { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-14, "order {order} shift {shift}: {dot}");
            }
        }
    }

    #[test]
    fn scaling_function_partition_of_unity() {
        let b = db8(3);
        for &t in &[0.0, 0.3, 0.71, 0.5] {
            let s: f64 = (0..16).map(|n| b.scaling_function(t + n as f64).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-10, "t={t}: {s}");
        }
    }

    #[test]
    fn constant_and_fourier_values() {
        let b = db8(4);
        assert_eq!(b.evaluate(-1, 0, 0.37).unwrap(), 1.0);
        let f = WaveletBasis::fourier(4).unwrap();
        assert!(f.evaluate(0, 0, 0.25).unwrap().abs() < 1e-15);
        assert!((f.evaluate(0, 0, 0.0).unwrap() - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn index_errors() {
        let b = db8(4);
        assert!(b.evaluate(4, 0, 0.1).is_err());
        assert!(b.evaluate(2, 4, 0.1).is_err());
        assert!(b.evaluate(-1, 1, 0.1).is_err());
        assert!(b.evaluate(-2, 0, 0.1).is_err());
        assert!(b.analyze(&PeriodicFunction::zero(), 5).is_err());
    }

    #[test]
    fn eval_all_matches_pointwise() {
        let b = db8(5);
        let mut buf = vec![0.0; 32];
        for &x in &[0.0, 0.123, 0.5, 0.999] {
            b.eval_all(5, x, 0, &mut buf);
            for (j, v) in buf.iter().enumerate() {
                assert!((v - b.eval_index(j, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_vectors_analyze_exactly() {
        let b = db8(4);
        let psi10 = b.synthesize(&CoefficientVector::unit(3, 1, 0).unwrap()).unwrap();
        let c = b.analyze(&psi10, 3).unwrap();
        for (l, k, v) in c.entries() {
            let want = if (l, k) == (1, 0) { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-8, "({l},{k}) = {v}");
        }
        let c = b.analyze(&PeriodicFunction::constant(2.5), 3).unwrap();
        assert!((c.get(-1, 0).unwrap() - 2.5).abs() < 1e-12);
        assert!(c.values()[1..].iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn fourier_cosine_coefficient() {
        let b = WaveletBasis::fourier(3).unwrap();
        let f = PeriodicFunction::from_fn(|x| (TAU * x).cos());
        let c = b.analyze(&f, 1).unwrap();
        assert!((c.get(0, 0).unwrap() - 1.0 / SQRT_2).abs() < 1e-12);
        assert!(c.get(-1, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn besov_examples() {
        let c = CoefficientVector::unit(4, -1, 0).unwrap();
        assert_eq!(c.besov_norm(3.0), 1.0);
        let c = CoefficientVector::unit(4, 3, 5).unwrap();
        assert_eq!(c.besov_norm(2.0), 64.0);
        let mut c = CoefficientVector::zeros(6);
        for l in 0..6 {
            c.set(l, 0, (-(l as f64) * 1.5).exp2()).unwrap();
        }
        assert!((c.besov_norm(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l2_distance_examples() {
        let one = PeriodicFunction::constant(1.0);
        assert_eq!(l2_distance(&one, &one), 0.0);
        assert!((l2_distance(&one, &PeriodicFunction::zero()) - 1.0).abs() < 1e-15);
        let b = db8(3);
        let f = b.synthesize(&CoefficientVector::unit(3, 2, 1).unwrap()).unwrap();
        let g = b.synthesize(&CoefficientVector::unit(3, 2, 2).unwrap()).unwrap();
        assert!((l2_distance(&f, &g) - SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn json_round_trip() {
        let mut c = CoefficientVector::zeros(2);
        c.set(1, 1, -0.5).unwrap();
        c.set(-1, 0, 2.0).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"m":2,"coeffs":[[-1,0,2.0],[0,0,0.0],[1,0,0.0],[1,1,-0.5]]}"#);
        let back: CoefficientVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<CoefficientVector>(r#"{"m":1,"coeffs":[[1,0,1.0]]}"#).is_err());
    }

    #[test]
    fn level_shift_inverse() {
        for j in 1..200 {
            let (l, k) = level_shift(j);
            assert_eq!((1 << l) + k, j);
            assert!(k < 1 << l);
        }
    }
}
