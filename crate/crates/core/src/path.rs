//! Euler–Maruyama simulation of the diffusion, subsampling to the observed
//! chain `X_0, X_Delta, ..., X_{n Delta}`, the increment decomposition used by
//! the estimator analysis, and the Hölder modulus diagnostic.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{DriftSpec, ModelParams, SigmaSpec};

/// Nodes of the interpolation tables used for non-closed-form coefficients.
const COEFFICIENT_TABLE: usize = 1 << 14;

/// Sampling design of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n: usize,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "L0", default = "default_l0")]
    pub l0: f64,
    /// Enforce `n Delta^2 log(1/Delta) <= L0`.
    #[serde(default = "default_true")]
    pub high_frequency: bool,
    /// Fixed starting point instead of a draw from the invariant law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

fn default_substeps() -> usize {
    50
}

fn default_l0() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

impl PathConfig {
    pub fn new(n: usize, delta: f64, seed: u64) -> Self {
        Self {
            n,
            delta,
            substeps: default_substeps(),
            seed,
            l0: default_l0(),
            high_frequency: true,
            x0: None,
        }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Drops the regime requirement.
    pub fn out_of_regime(mut self) -> Self {
        self.high_frequency = false;
        self
    }

    /// `n Delta^2 log(1/Delta)`.
    pub fn regime_value(&self) -> f64 {
        regime_value(self.n, self.delta)
    }

    pub fn horizon(&self) -> f64 {
        self.n as f64 * self.delta
    }

    /// Fine step `delta = Delta / substeps`.
    pub fn fine_step(&self) -> f64 {
        self.delta / self.substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.substeps == 0 {
            return Err(invalid("n and substeps must be positive"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(invalid(format!("Delta must be positive, got {}", self.delta)));
        }
        if self.horizon() < 1.0 {
            return Err(invalid(format!("n*Delta = {} is below 1", self.horizon())));
        }
        if self.high_frequency {
            let value = self.regime_value();
            if value > self.l0 {
                return Err(Error::Regime { value, budget: self.l0 });
            }
        }
        Ok(())
    }
}

pub fn regime_value(n: usize, delta: f64) -> f64 {
    n as f64 * delta * delta * (1.0 / delta).ln()
}

/// A fine-grid path; node `i` sits at time `i * dt`. Values are not reduced mod 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.time(i)).collect()
    }

    /// Writes little-endian `f64` values plus a JSON sidecar `<path>.json`.
    pub fn write_binary(&self, path: impl AsRef<Path>, config: &PathConfig) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let sidecar = BinarySidecar {
            n: config.n,
            delta: config.delta,
            substeps: config.substeps,
            seed: config.seed,
        };
        let mut name = path.as_os_str().to_owned();
        name.push(".json");
        std::fs::write(name, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<(Self, BinarySidecar)> {
        let path = path.as_ref();
        let mut name = path.as_os_str().to_owned();
        name.push(".json");
        let sidecar: BinarySidecar = serde_json::from_str(&std::fs::read_to_string(name)?)?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(invalid("binary path length is not a multiple of 8"));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let expected = sidecar.n * sidecar.substeps + 1;
        if values.len() != expected {
            return Err(invalid(format!("expected {expected} values, found {}", values.len())));
        }
        let dt = sidecar.delta / sidecar.substeps as f64;
        Ok((Self { dt, values }, sidecar))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySidecar {
    pub n: usize,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub substeps: usize,
    pub seed: u64,
}

/// The observed chain `X_{k Delta}`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub delta: f64,
    pub samples: Vec<f64>,
}

impl Observations {
    pub fn new(delta: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid("observations need at least two samples"));
        }
        Ok(Self { delta, samples })
    }

    /// Number of transitions.
    pub fn n(&self) -> usize {
        self.samples.len() - 1
    }

    /// `(X_{k Delta}, Delta^{-1}(X_{(k+1)Delta} - X_{k Delta}))` for `k = 0..n`.
    pub fn regression_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let inv = 1.0 / self.delta;
        self.samples.windows(2).map(move |w| (w[0], (w[1] - w[0]) * inv))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "k,t,x")?;
        for (k, x) in self.samples.iter().enumerate() {
            writeln!(w, "{k},{},{x}", k as f64 * self.delta)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the `k,t,x` format; `Delta` is taken from the second row.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| invalid("empty CSV"))??;
        if header.trim() != "k,t,x" {
            return Err(invalid(format!("unexpected CSV header {header:?}")));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(invalid(format!("row {row}: expected 3 fields")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| invalid(format!("row {row}: {e}")))
            };
            times.push(parse(fields[1])?);
            samples.push(parse(fields[2])?);
        }
        if samples.len() < 2 {
            return Err(invalid("observations need at least two samples"));
        }
        let delta = times[1] - times[0];
        if !(delta > 0.0) {
            return Err(invalid("non-increasing time column"));
        }
        Self::new(delta, samples)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Drift and diffusion evaluators prepared for repeated evaluation.
#[derive(Clone)]
pub struct Coefficients {
    drift: DriftSpec,
    sigma: SigmaSpec,
}

impl Coefficients {
    pub fn new(model: &ModelParams) -> Self {
        Self {
            drift: model.drift().tabulated(COEFFICIENT_TABLE),
            sigma: model.sigma().tabulated(COEFFICIENT_TABLE),
        }
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }
}

/// The generator used for replication seeds.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn initial_state(model: &ModelParams, config: &PathConfig, rng: &mut ChaCha8Rng) -> f64 {
    match config.x0 {
        Some(x) => x,
        None => model.density().sample(rng),
    }
}

/// One Euler–Maruyama step of size `dt` (noise scale `sqrt_dt`).
#[inline]
pub fn euler_step(coef: &Coefficients, x: f64, dt: f64, sqrt_dt: f64, xi: f64) -> f64 {
    x + coef.drift(x) * dt + coef.sigma(x) * sqrt_dt * xi
}

/// Full fine path over `[0, n Delta]`.
pub fn simulate_path(model: &ModelParams, config: &PathConfig) -> Result<SamplePath> {
    config.validate()?;
    let mut rng = rng_for(config.seed);
    let x0 = initial_state(model, config, &mut rng);
    let coef = Coefficients::new(model);
    let steps = config.n * config.substeps;
    Ok(simulate_fine(&coef, x0, config.fine_step(), steps, &mut rng))
}

/// Observed chain only, without storing the fine path. Equal to
/// `subsample(simulate_path(..))` for the same inputs.
pub fn simulate_observations(model: &ModelParams, config: &PathConfig) -> Result<Observations> {
    config.validate()?;
    let mut rng = rng_for(config.seed);
    let x0 = initial_state(model, config, &mut rng);
    let coef = Coefficients::new(model);
    let dt = config.fine_step();
    let sqrt_dt = dt.sqrt();
    let mut samples = Vec::with_capacity(config.n + 1);
    let mut x = x0;
    samples.push(x);
    for _ in 0..config.n {
        for _ in 0..config.substeps {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x = euler_step(&coef, x, dt, sqrt_dt, xi);
        }
        samples.push(x);
    }
    Observations::new(config.delta, samples)
}

/// `steps` Euler–Maruyama steps of size `dt` from `x0`; no regime checks.
pub fn simulate_fine(coef: &Coefficients, x0: f64, dt: f64, steps: usize, rng: &mut ChaCha8Rng) -> SamplePath {
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = x0;
    values.push(x);
    for _ in 0..steps {
        let xi: f64 = StandardNormal.sample(rng);
        x = euler_step(coef, x, dt, sqrt_dt, xi);
        values.push(x);
    }
    SamplePath { dt, values }
}

/// Every `substeps`-th fine node.
pub fn subsample(path: &SamplePath, config: &PathConfig) -> Result<Observations> {
    let expected = config.n * config.substeps + 1;
    if path.values.len() != expected {
        return Err(invalid(format!(
            "path has {} nodes, config implies {expected}",
            path.values.len()
        )));
    }
    let samples = path.values.iter().step_by(config.substeps).copied().collect();
    Observations::new(config.delta, samples)
}

/// `Delta^{-1}(X_{(k+1)Delta} - X_{k Delta}) = bterm + z + r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementParts {
    pub bterm: f64,
    pub z: f64,
    pub r: f64,
}

/// Splits each observed increment into drift value, noise and discretization
/// error, the latter by a left Riemann sum over the fine path.
pub fn increments_decomposition(
    path: &SamplePath,
    obs: &Observations,
    drift: &DriftSpec,
) -> Result<Vec<IncrementParts>> {
    let n = obs.n();
    if n == 0 || !(path.values.len() - 1).is_multiple_of(n) {
        return Err(invalid("fine path does not refine the observations"));
    }
    let substeps = (path.values.len() - 1) / n;
    let inv = 1.0 / obs.delta;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let start = k * substeps;
        let xk = path.values[start];
        let bterm = drift.eval(xk);
        let mut r = 0.0;
        for i in start..start + substeps {
            r += (drift.eval(path.values[i]) - bterm) * path.dt;
        }
        r *= inv;
        let y = (path.values[start + substeps] - xk) * inv;
        out.push(IncrementParts { bterm, z: y - bterm - r, r });
    }
    Ok(out)
}

/// `w_m(delta) = delta^{1/2} ((log 1/delta)^{1/2} + (log m)^{1/2})`, with `m`
/// floored at 1.
pub fn holder_modulus(delta: f64, m: f64) -> f64 {
    delta.sqrt() * ((1.0 / delta).ln().sqrt() + m.max(1.0).ln().sqrt())
}

/// `sup |X_t - X_s| / w_m(|t - s|)` over fine-grid pairs with `0 < |t-s| <= mesh_cap`.
pub fn holder_modulus_stat(path: &SamplePath, m: f64, mesh_cap: f64) -> Result<f64> {
    if !(mesh_cap > 0.0) || mesh_cap > (-2.0f64).exp() + 1e-15 {
        return Err(invalid(format!("mesh_cap must lie in (0, e^-2], got {mesh_cap}")));
    }
    let window = ((mesh_cap / path.dt) * (1.0 + 1e-12)).floor() as usize;
    let weights: Vec<f64> = (1..=window).map(|j| 1.0 / holder_modulus(j as f64 * path.dt, m)).collect();
    let v = &path.values;
    let mut best = 0.0_f64;
    for i in 0..v.len() {
        let end = (i + window).min(v.len() - 1);
        for (j, w) in (i + 1..=end).zip(&weights) {
            best = best.max((v[j] - v[i]).abs() * w);
        }
    }
    Ok(best)
}
