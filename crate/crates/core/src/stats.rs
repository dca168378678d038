//! Small Monte-Carlo summaries: estimates with standard errors, quantiles,
//! least-squares slopes and Kolmogorov–Smirnov distances.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// Sample mean and `sd / sqrt(n)`.
    pub fn mean_of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { value: mean, se: (var / n).sqrt() }
    }

    /// Unbiased sample variance with the normal-theory-free standard error
    /// `sqrt((m4 - s^4 (n-3)/(n-1)) / n)`.
    pub fn variance_of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let v = (m4 - var * var * (n - 3.0) / (n - 1.0)) / n;
        Self { value: var, se: v.max(0.0).sqrt() }
    }

    /// `|value - target| <= k * se` (with a floor for exact estimates).
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se + 1e-12 * target.abs().max(1.0)
    }
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Standard error of the median from the asymptotic order-statistic band:
/// half the distance between the `1/2 ± 1/sqrt(4n)` quantiles.
pub fn median_se(xs: &[f64]) -> f64 {
    quantile_se(xs, 0.5)
}

/// Standard error of the `p`-quantile: half the distance between the
/// `p ± sqrt(p(1-p)/n)` quantiles.
pub fn quantile_se(xs: &[f64], p: f64) -> f64 {
    let n = xs.len() as f64;
    let d = (p * (1.0 - p) / n).sqrt();
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    0.5 * (quantile_sorted(&v, p + d) - quantile_sorted(&v, p - d))
}

/// The `p`-quantile with its order-statistic standard error.
pub fn quantile_estimate(xs: &[f64], p: f64) -> Estimate {
    Estimate::new(quantile(xs, p), quantile_se(xs, p))
}

/// Ordinary least squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    /// 95% confidence interval for the slope (Student t).
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, half) = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let se = (rss / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
        (se, t * se)
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(LinearFit { intercept, slope, slope_se, ci_low: slope - half, ci_high: slope + half })
}

/// `sup_x |F_n(x) - F(x)|` for a sample against a continuous CDF.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
