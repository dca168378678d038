//! 1-periodic real functions and the quadrature rules used throughout the crate.
//!
//! Every evaluator receives its argument reduced to `[0, 1)`, so a
//! [`PeriodicFunction`] is its own periodic extension.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Truncated trigonometric series `c + sum_j a_j cos(2 pi j x) + b_j sin(2 pi j x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrigSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn new(constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { constant, cos, sin }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(c, Vec::new(), Vec::new())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let terms = self.cos.len().max(self.sin.len());
        let mut acc = self.constant;
        if terms == 0 {
            return acc;
        }
        let (s1, c1) = (TAU * x).sin_cos();
        // rotate (cos jθ, sin jθ) by θ each step
        let (mut cj, mut sj) = (c1, s1);
        for j in 0..terms {
            if let Some(a) = self.cos.get(j) {
                acc += a * cj;
            }
            if let Some(b) = self.sin.get(j) {
                acc += b * sj;
            }
            let next_c = cj * c1 - sj * s1;
            sj = sj * c1 + cj * s1;
            cj = next_c;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        let terms = self.cos.len().max(self.sin.len());
        let mut cos = vec![0.0; terms];
        let mut sin = vec![0.0; terms];
        for j in 0..terms {
            let w = TAU * (j + 1) as f64;
            let a = self.cos.get(j).copied().unwrap_or(0.0);
            let b = self.sin.get(j).copied().unwrap_or(0.0);
            cos[j] = b * w;
            sin[j] = -a * w;
        }
        Self::new(0.0, cos, sin)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(
            self.constant * factor,
            self.cos.iter().map(|a| a * factor).collect(),
            self.sin.iter().map(|b| b * factor).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let zip = |a: &[f64], b: &[f64]| {
            (0..a.len().max(b.len()))
                .map(|j| a.get(j).copied().unwrap_or(0.0) + b.get(j).copied().unwrap_or(0.0))
                .collect()
        };
        Self::new(
            self.constant + other.constant,
            zip(&self.cos, &other.cos),
            zip(&self.sin, &other.sin),
        )
    }

    /// Exact L2([0,1]) norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        let harmonics: f64 = self.cos.iter().chain(&self.sin).map(|a| a * a).sum();
        (self.constant * self.constant + 0.5 * harmonics).sqrt()
    }
}

/// Values of a periodic function on the uniform grid `i / len`, read back by
/// linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    values: Vec<f64>,
}

impl GridTable {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "grid table needs at least one node");
        Self { values }
    }

    pub fn sample(f: &PeriodicFunction, len: usize) -> Self {
        Self::new(grid_values(f, len))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = x * n as f64;
        let i = pos.floor();
        let frac = pos - i;
        let i = (i as usize) % n;
        let j = (i + 1) % n;
        self.values[i] * (1.0 - frac) + self.values[j] * frac
    }
}

/// A 1-periodic function on the real line.
#[derive(Clone)]
pub enum PeriodicFunction {
    Constant(f64),
    Trig(Arc<TrigSeries>),
    Table(Arc<GridTable>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for PeriodicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Trig(t) => write!(f, "Trig({t:?})"),
            Self::Table(t) => write!(f, "Table(len={})", t.values.len()),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl PeriodicFunction {
    pub fn zero() -> Self {
        Self::Constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::Constant(c)
    }

    pub fn trig(series: TrigSeries) -> Self {
        Self::Trig(Arc::new(series))
    }

    pub fn table(table: GridTable) -> Self {
        Self::Table(Arc::new(table))
    }

    /// Wraps a closure; it is only ever called with arguments in `[0, 1)`.
    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Trig(t) => t.eval(reduce(x)),
            Self::Table(t) => t.eval(reduce(x)),
            Self::Custom(f) => f(reduce(x)),
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            _ => None,
        }
    }

    /// Replaces the evaluator by a linearly interpolated table on `len` nodes.
    pub fn tabulated(&self, len: usize) -> Self {
        match self {
            Self::Constant(_) | Self::Trig(_) => self.clone(),
            _ => Self::table(GridTable::sample(self, len)),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        match (self, other) {
            (Self::Constant(a), Self::Constant(b)) => Self::Constant(a - b),
            (Self::Trig(a), Self::Trig(b)) => Self::trig(a.add(&b.scaled(-1.0))),
            _ => {
                let (f, g) = (self.clone(), other.clone());
                Self::from_fn(move |x| f.eval(x) - g.eval(x))
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self, other) {
            (Self::Constant(a), Self::Constant(b)) => Self::Constant(a + b),
            (Self::Trig(a), Self::Trig(b)) => Self::trig(a.add(b)),
            _ => {
                let (f, g) = (self.clone(), other.clone());
                Self::from_fn(move |x| f.eval(x) + g.eval(x))
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Constant(c) => Self::Constant(c * factor),
            Self::Trig(t) => Self::trig(t.scaled(factor)),
            _ => {
                let f = self.clone();
                Self::from_fn(move |x| factor * f.eval(x))
            }
        }
    }

    /// Analytic derivative where the representation allows one, otherwise a
    /// fourth-order central difference on a grid of `grid` nodes.
    pub fn derivative(&self, grid: usize) -> Self {
        match self {
            Self::Constant(_) => Self::Constant(0.0),
            Self::Trig(t) => Self::trig(t.derivative()),
            _ => Self::table(GridTable::new(central_difference(&grid_values(self, grid)))),
        }
    }
}

#[inline]
fn reduce(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `f(i / len)` for `i = 0..len`.
pub fn grid_values(f: &PeriodicFunction, len: usize) -> Vec<f64> {
    (0..len).map(|i| f.eval(i as f64 / len as f64)).collect()
}

/// Composite trapezoid rule for a periodic integrand over `[0,1]` on `nodes`
/// equispaced points (the endpoint is implied by periodicity).
pub fn periodic_mean(f: &PeriodicFunction, nodes: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..nodes {
        acc += f.eval(i as f64 / nodes as f64);
    }
    acc / nodes as f64
}

/// Fourth-order central difference of periodic samples with spacing `1/len`.
pub fn central_difference(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let at = |d: isize| values[((i as isize + d).rem_euclid(n as isize)) as usize];
            (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
        })
        .collect()
}

/// Sup norm of `f` sampled on `len` grid nodes.
pub fn sup_norm(f: &PeriodicFunction, len: usize) -> f64 {
    grid_values(f, len)
        .into_iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Trapezoid integral of samples on the closed grid `0, h, ..., 1` (`values.len() >= 2`).
pub fn trapezoid(values: &[f64]) -> f64 {
    let n = values.len() - 1;
    let h = 1.0 / n as f64;
    let inner: f64 = values[1..n].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n]))
}

/// Running trapezoid integral on the closed grid, starting at zero.
pub fn cumulative_trapezoid(values: &[f64]) -> Vec<f64> {
    let n = values.len() - 1;
    let h = 1.0 / n as f64;
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trig_derivative_matches_difference() {
        let t = TrigSeries::new(0.3, vec![1.0, -0.5], vec![0.25]);
        let f = PeriodicFunction::trig(t.clone());
        let d = PeriodicFunction::trig(t.derivative());
        let h = 1e-6;
        for &x in &[0.0, 0.13, 0.5, 0.77] {
            let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
            assert!((fd - d.eval(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn periodic_extension() {
        let f = PeriodicFunction::from_fn(|x| x * x);
        assert!((f.eval(1.25) - f.eval(0.25)).abs() < 1e-15);
        assert!((f.eval(-0.75) - f.eval(0.25)).abs() < 1e-15);
        assert_eq!(f.eval(-1e-300), 0.0);
    }

    #[test]
    fn parseval_norm() {
        let t = TrigSeries::new(1.0, vec![2.0], vec![0.0, 1.0]);
        let f = PeriodicFunction::trig(t.clone());
        let sq = PeriodicFunction::from_fn(move |x| f.eval(x).powi(2));
        assert!((periodic_mean(&sq, 256).sqrt() - t.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn central_difference_is_fourth_order() {
        let f = PeriodicFunction::from_fn(|x| (TAU * x).sin());
        let d = central_difference(&grid_values(&f, 512));
        let max_err = d
            .iter()
            .enumerate()
            .map(|(i, v)| (v - TAU * (TAU * i as f64 / 512.0).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-6, "{max_err}");
    }
}
