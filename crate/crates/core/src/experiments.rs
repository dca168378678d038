//! Study configuration, the Monte-Carlo study drivers and their reports.
//!
//! Every (cell, replication) task draws its own seed `seed + cell * reps + r`,
//! so results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    girsanov_moments, kl_checks, posterior_ball_mass, run_mcmc, sample_prior, sample_prior_at, transition_kl,
    BallReference, KlCheckConfig, McmcConfig, PriorKind, PriorSpec, QDensity,
};
use crate::error::{invalid, Error, Result};
use crate::estimator::{eps_n, fit_minimum_contrast, EstimatorConfig, RateSchedule, ResolutionRule};
use crate::function::{PeriodicFunction, TrigSeries};
use crate::model::{kl_invariant, DriftSpec, ModelParams, SigmaSpec};
use crate::path::{holder_modulus_stat, rng_for, simulate_fine, simulate_observations, Coefficients, PathConfig};
use crate::stats::{linear_fit, median, median_se, quantile, quantile_estimate, Estimate, LinearFit};
use crate::svg::{Chart, Series, Style};
use crate::wavelet::{l2_distance, CoefficientVector, WaveletBasis, WaveletFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Rate,
    Contraction,
    Klcheck,
    Holder,
    Smallball,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Rate => "rate",
            Study::Contraction => "contraction",
            Study::Klcheck => "klcheck",
            Study::Holder => "holder",
            Study::Smallball => "smallball",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate" => Ok(Study::Rate),
            "contraction" => Ok(Study::Contraction),
            "klcheck" => Ok(Study::Klcheck),
            "holder" => Ok(Study::Holder),
            "smallball" => Ok(Study::Smallball),
            other => Err(invalid(format!("unknown study {other:?}"))),
        }
    }
}

/// Sampling interval as a function of `n`: `"n^(-a)"` or `"fixed:<Delta>"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DeltaRule {
    Power { a: f64 },
    Fixed { delta: f64 },
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::Power { a: 0.6 }
    }
}

impl DeltaRule {
    pub fn delta(&self, n: usize) -> f64 {
        match *self {
            DeltaRule::Power { a } => (n as f64).powf(-a),
            DeltaRule::Fixed { delta } => delta,
        }
    }
}

impl FromStr for DeltaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if let Some(v) = t.strip_prefix("fixed:") {
            let delta: f64 = v.parse().map_err(|_| invalid(format!("bad Delta in {s:?}")))?;
            if !(delta > 0.0 && delta < 1.0) {
                return Err(invalid(format!("fixed Delta must lie in (0, 1), got {delta}")));
            }
            return Ok(DeltaRule::Fixed { delta });
        }
        let inner = t
            .strip_prefix("n^(-")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| t.strip_prefix("n^-"))
            .ok_or_else(|| invalid(format!("delta_rule must be \"n^(-a)\" or \"fixed:<Delta>\", got {s:?}")))?;
        let a: f64 = inner.parse().map_err(|_| invalid(format!("bad exponent in {s:?}")))?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid(format!("exponent must be positive, got {a}")));
        }
        Ok(DeltaRule::Power { a })
    }
}

impl TryFrom<String> for DeltaRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DeltaRule> for String {
    fn from(rule: DeltaRule) -> Self {
        rule.to_string()
    }
}

impl fmt::Display for DeltaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaRule::Power { a } => write!(f, "n^(-{a})"),
            DeltaRule::Fixed { delta } => write!(f, "fixed:{delta}"),
        }
    }
}

/// The drift generating the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    /// The drift of the configured model.
    #[default]
    Model,
    /// `c_{-1} = 0`, `c_{lk} = 2^{-l(s+1/2)} * (+-B)` for `l < levels`, signs from `seed`.
    Rough {
        #[serde(rename = "B", default = "one")]
        b: f64,
        #[serde(default = "two")]
        s: f64,
        #[serde(default = "six")]
        levels: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl Truth {
    pub fn drift(&self, model: &ModelParams, basis: &WaveletBasis) -> Result<DriftSpec> {
        match *self {
            Truth::Model => Ok(model.drift().clone()),
            Truth::Rough { b, s, levels, seed } => {
                DriftSpec::from_coefficients(basis, &rough_coefficients(b, s, levels, seed)?, None)
            }
        }
    }
}

pub fn rough_coefficients(b: f64, s: f64, levels: usize, seed: u64) -> Result<CoefficientVector> {
    let mut rng = rng_for(seed);
    let mut c = CoefficientVector::zeros(levels);
    for l in 0..levels {
        let tau = (-(l as f64) * (s + 0.5)).exp2();
        for k in 0..1usize << l {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            c.set(l as i32, k, sign * b * tau)?;
        }
    }
    Ok(c)
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn six() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateOptions {
    pub s: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    pub truth: Truth,
    /// Also fit `pi_L b0` at the fixed level `control_level`.
    pub control: bool,
    pub control_level: usize,
    pub slope_tolerance: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            s: 2.0,
            l1: 0.5,
            l2: 1.0,
            truth: Truth::Rough { b: 1.0, s: 2.0, levels: 6, seed: 0 },
            control: true,
            control_level: 2,
            slope_tolerance: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOptions {
    pub kind: PriorKind,
    #[serde(rename = "B")]
    pub b: f64,
    pub cap: usize,
    pub s: f64,
    /// Defaults to `Unif[-B, B]`.
    pub q: Option<QDensity>,
}

impl Default for PriorOptions {
    fn default() -> Self {
        Self { kind: PriorKind::Sieve, b: 4.0, cap: 6, s: 2.0, q: None }
    }
}

impl PriorOptions {
    pub fn build(&self, basis: &WaveletBasis, sigma: &SigmaSpec) -> Result<PriorSpec> {
        let q = self.q.unwrap_or(QDensity::symmetric_uniform(self.b));
        let basis = basis.clone();
        match self.kind {
            PriorKind::Sieve => PriorSpec::sieve(basis, self.b, q, self.cap),
            PriorKind::KnownSmoothness => PriorSpec::known_smoothness(basis, self.s, self.b, q, self.cap),
            PriorKind::InvariantDensity => {
                PriorSpec::invariant_density(basis, self.s, self.b, q, self.cap, sigma.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionOptions {
    pub prior: PriorOptions,
    pub truth: Truth,
    pub iters: usize,
    pub burnin: usize,
    /// Smoothness used in `eps_n`.
    pub s: f64,
    /// Mass the frozen radius carries at the smallest `n`.
    pub calibration_mass: f64,
    pub mass_tolerance: f64,
    pub min_terminal_mass: f64,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            prior: PriorOptions::default(),
            truth: Truth::Model,
            iters: 20_000,
            burnin: 5_000,
            s: 2.0,
            calibration_mass: 0.5,
            mass_tolerance: 0.05,
            min_terminal_mass: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlOptions {
    pub truth: Truth,
    pub distances: Vec<f64>,
    pub directions: usize,
    pub harmonics: usize,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub short_paths: usize,
    pub substeps: usize,
    /// Factor applied to the largest ratio at the smallest distance.
    pub slack: f64,
    pub ratio_band: f64,
    pub tensor_n: usize,
    #[serde(rename = "tensor_Delta")]
    pub tensor_delta: f64,
    pub tensor_reps: usize,
    pub tensor_distance: f64,
    #[serde(rename = "girsanov_Delta")]
    pub girsanov_delta: f64,
    pub girsanov_paths: usize,
    pub girsanov_distance: f64,
}

impl Default for KlOptions {
    fn default() -> Self {
        Self {
            truth: Truth::Model,
            distances: vec![0.05, 0.1, 0.2],
            directions: 8,
            harmonics: 3,
            delta: 0.01,
            short_paths: 20_000,
            substeps: 20,
            slack: 2.0,
            ratio_band: 1.5,
            tensor_n: 512,
            tensor_delta: 0.005,
            tensor_reps: 2000,
            tensor_distance: 0.2,
            girsanov_delta: 1e-3,
            girsanov_paths: 100_000,
            girsanov_distance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderOptions {
    pub m_grid: Vec<usize>,
    pub paths: usize,
    pub fine_step: f64,
    pub quantile: f64,
    pub band: f64,
    pub sigma_factor: f64,
}

impl Default for HolderOptions {
    fn default() -> Self {
        Self { m_grid: vec![25, 100, 400], paths: 200, fine_step: 0.005, quantile: 0.99, band: 0.25, sigma_factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallBallOptions {
    pub prior: PriorOptions,
    pub truth: Truth,
    pub draws: usize,
    pub m: usize,
    pub eps: f64,
    pub ball_draws: usize,
}

impl Default for SmallBallOptions {
    fn default() -> Self {
        Self {
            prior: PriorOptions::default(),
            truth: Truth::Model,
            draws: 10_000,
            m: 2,
            eps: 0.5,
            ball_draws: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    /// Model JSON; `pi cos(2 pi x)` drift with `sigma = 1` when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub delta_rule: DeltaRule,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(rename = "L0", default = "default_l0")]
    pub l0: f64,
    #[serde(default)]
    pub allow_out_of_regime: bool,
    #[serde(default)]
    pub wavelet: WaveletFamily,
    #[serde(default = "default_max_level")]
    pub max_level: usize,
    #[serde(default)]
    pub plots: bool,
    #[serde(default)]
    pub rate: RateOptions,
    #[serde(default)]
    pub contraction: ContractionOptions,
    #[serde(default)]
    pub kl: KlOptions,
    #[serde(default)]
    pub holder: HolderOptions,
    #[serde(default)]
    pub smallball: SmallBallOptions,
}

fn default_reps() -> usize {
    1
}

fn default_substeps() -> usize {
    50
}

fn default_l0() -> f64 {
    10.0
}

fn default_max_level() -> usize {
    10
}

impl ExperimentConfig {
    pub fn new(study: Study) -> Self {
        Self {
            study,
            model: None,
            n_grid: Vec::new(),
            delta_rule: DeltaRule::default(),
            reps: default_reps(),
            seed: 0,
            output: None,
            substeps: default_substeps(),
            l0: default_l0(),
            allow_out_of_regime: false,
            wavelet: WaveletFamily::default(),
            max_level: default_max_level(),
            plots: false,
            rate: RateOptions::default(),
            contraction: ContractionOptions::default(),
            kl: KlOptions::default(),
            holder: HolderOptions::default(),
            smallball: SmallBallOptions::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config; a relative model path is taken relative to the config file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&fs::read_to_string(path)?)?;
        if let (Some(model), Some(dir)) = (&cfg.model, path.parent()) {
            if model.is_relative() {
                cfg.model = Some(dir.join(model));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps must be positive"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("n_grid must be strictly increasing"));
        }
        if matches!(self.study, Study::Rate | Study::Contraction) && self.n_grid.is_empty() {
            return Err(invalid(format!("the {} study needs a non-empty n_grid", self.study)));
        }
        if let DeltaRule::Power { a } = self.delta_rule {
            if !(a > 0.5 && a < 1.0) && !self.allow_out_of_regime {
                return Err(invalid(format!("delta_rule exponent must lie in (1/2, 1), got {a}")));
            }
        }
        for &n in &self.n_grid {
            self.path_config(n, 0).validate()?;
        }
        Ok(())
    }

    pub fn delta(&self, n: usize) -> f64 {
        self.delta_rule.delta(n)
    }

    pub fn path_config(&self, n: usize, seed: u64) -> PathConfig {
        let mut cfg = PathConfig::new(n, self.delta(n), seed).with_substeps(self.substeps);
        cfg.l0 = self.l0;
        if self.allow_out_of_regime {
            cfg = cfg.out_of_regime();
        }
        cfg
    }

    pub fn load_model(&self) -> Result<ModelParams> {
        match &self.model {
            Some(path) => ModelParams::from_file(path),
            None => ModelParams::cosine(std::f64::consts::PI, 1.0),
        }
    }

    pub fn basis(&self) -> Result<WaveletBasis> {
        WaveletBasis::new(self.wavelet, self.max_level)
    }

    fn task_seed(&self, cell: usize, r: usize) -> u64 {
        self.seed.wrapping_add((cell * self.reps + r) as u64)
    }
}

/// One row of a report. `values` carry Monte-Carlo standard errors; `design`
/// holds deterministic inputs of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Cell {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "Delta", skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub values: BTreeMap<String, Estimate>,
    pub design: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Cell {
    fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), ..Self::default() }
    }

    fn at(label: impl Into<String>, n: usize, delta: f64) -> Self {
        Self { label: label.into(), n: Some(n), delta: Some(delta), ..Self::default() }
    }

    pub fn value(&self, key: &str) -> Option<Estimate> {
        self.values.get(key).copied()
    }
}

/// A pass/fail flag tied to a named acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(criterion: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { criterion: criterion.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: Study,
    pub seed: u64,
    pub cells: Vec<Cell>,
    pub verdicts: Vec<Verdict>,
    pub regressions: BTreeMap<String, LinearFit>,
    /// Main regression slope, when there is one.
    pub slope: Option<f64>,
    /// Calibrated-then-frozen constants.
    pub constants: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    pub runtime_secs: f64,
    #[serde(skip)]
    pub plots: Vec<(String, String)>,
}

impl StudyReport {
    fn new(study: Study, seed: u64) -> Self {
        Self {
            study,
            seed,
            cells: Vec::new(),
            verdicts: Vec::new(),
            regressions: BTreeMap::new(),
            slope: None,
            constants: BTreeMap::new(),
            flags: Vec::new(),
            runtime_secs: 0.0,
            plots: Vec::new(),
        }
    }

    pub fn verdict(&self, criterion: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.criterion == criterion)
    }

    pub fn all_passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn cell(&self, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json` and any plots into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let file = dir.join("report.json");
        fs::write(&file, self.to_json()? + "\n")?;
        for (name, svg) in &self.plots {
            fs::write(dir.join(name), svg)?;
        }
        Ok(file)
    }
}

pub fn run_study(config: &ExperimentConfig) -> Result<StudyReport> {
    let start = Instant::now();
    let mut report = match config.study {
        Study::Rate => run_rate_study(config)?,
        Study::Contraction => run_contraction_study(config)?,
        Study::Klcheck => run_smallball_and_kl(config)?,
        Study::Holder => run_holder_study(config)?,
        Study::Smallball => run_prior_smallball(config)?,
    };
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn first_error<T>(results: Vec<Result<T>>) -> std::result::Result<Vec<T>, String> {
    results.into_iter().collect::<Result<Vec<T>>>().map_err(|e| e.to_string())
}

/// Fits of one truth over the `n` grid; errors are recorded in the cell.
fn rate_cells(
    cfg: &ExperimentConfig,
    model: &ModelParams,
    truth: &PeriodicFunction,
    est: &EstimatorConfig,
    label: &str,
    cell_offset: usize,
) -> Vec<Cell> {
    cfg.n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let delta = cfg.delta(n);
            let mut cell = Cell::at(format!("{label} n={n}"), n, delta);
            cell.design.insert("nDelta".into(), n as f64 * delta);
            let results: Vec<Result<(f64, bool, bool, usize)>> = (0..cfg.reps)
                .into_par_iter()
                .map(|r| {
                    let pc = cfg.path_config(n, cfg.task_seed(cell_offset + i, r));
                    let obs = simulate_observations(model, &pc)?;
                    let fit = fit_minimum_contrast(&obs, est)?;
                    let err = l2_distance(&est.basis.synthesize(&fit.coeffs)?, truth);
                    let md = fit.metadata;
                    Ok((err, md.constraint_active, md.resolution_clamped, md.l_n))
                })
                .collect();
            match first_error(results) {
                Err(e) => cell.error = Some(e),
                Ok(rows) => {
                    let errs: Vec<f64> = rows.iter().map(|r| r.0).collect();
                    cell.values.insert("median_error".into(), Estimate::new(median(&errs), median_se(&errs)));
                    cell.values.insert("q25_error".into(), quantile_estimate(&errs, 0.25));
                    cell.values.insert("q75_error".into(), quantile_estimate(&errs, 0.75));
                    cell.values.insert("mean_error".into(), Estimate::mean_of(&errs));
                    let active: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.1))).collect();
                    cell.values.insert("constraint_active".into(), Estimate::mean_of(&active));
                    cell.design.insert("l_n".into(), rows[0].3 as f64);
                    if rows.iter().any(|r| r.2) {
                        cell.flags.push("resolution clamped".into());
                    }
                }
            }
            cell
        })
        .collect()
}

fn regress_cells(cells: &[Cell]) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .filter_map(|c| {
            let e = c.value("median_error")?;
            let nd = c.design.get("nDelta")?;
            (e.value > 0.0).then(|| (nd.ln(), e.value.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y)
}

fn error_series(name: &str, cells: &[Cell]) -> Series {
    let pts = cells
        .iter()
        .filter_map(|c| Some((*c.design.get("nDelta")?, c.value("median_error")?.value)))
        .collect();
    Series::new(name, pts, Style::LinePoints)
}

/// Minimum-contrast errors over the `n` grid and the slope of log median error on `log(n Delta)`.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let basis = cfg.basis()?;
    let opts = &cfg.rate;
    let mut report = StudyReport::new(Study::Rate, cfg.seed);

    let truth = opts.truth.drift(&model, &basis)?;
    let truth_model = model.with_drift(truth.clone());
    let schedule = RateSchedule::with_constants(opts.s, opts.l1, opts.l2);
    let est = EstimatorConfig::new(ResolutionRule::Rate(schedule), truth.k0(), basis.clone())?;
    let main = rate_cells(cfg, &truth_model, truth.function(), &est, "rate", 0);
    let target = -opts.s / (1.0 + 2.0 * opts.s);
    let fit = regress_cells(&main);
    report.cells.extend(main.iter().cloned());

    let mut chart = Chart::new("median L2 error", "n Delta", "error").log_log().with_series(error_series("rate", &main));
    match fit {
        Some(fit) => {
            report.slope = Some(fit.slope);
            report.regressions.insert("rate".into(), fit);
            let ok = (fit.slope - target).abs() <= opts.slope_tolerance;
            report.verdicts.push(Verdict::new(
                "estimator_rate_slope",
                ok,
                format!(
                    "slope {:.4} (95% CI [{:.4}, {:.4}]), target {target:.4} +- {}",
                    fit.slope, fit.ci_low, fit.ci_high, opts.slope_tolerance
                ),
            ));
        }
        None => report.flags.push("insufficient grid".into()),
    }

    if opts.control && cfg.n_grid.len() >= 2 {
        let level = opts.control_level;
        let ctrl = DriftSpec::from_coefficients(&basis, &basis.analyze(truth.function(), level)?, None)?;
        let ctrl_model = model.with_drift(ctrl.clone());
        let ctrl_est = EstimatorConfig::new(ResolutionRule::Fixed { level }, ctrl.k0(), basis.clone())?;
        let cells = rate_cells(cfg, &ctrl_model, ctrl.function(), &ctrl_est, "control", cfg.n_grid.len());
        if let Some(fit) = regress_cells(&cells) {
            report.regressions.insert("control".into(), fit);
            let ok = (fit.slope + 0.5).abs() <= opts.slope_tolerance;
            report.verdicts.push(Verdict::new(
                "estimator_control_slope",
                ok,
                format!(
                    "slope {:.4} (95% CI [{:.4}, {:.4}]), target -0.5 +- {}",
                    fit.slope, fit.ci_low, fit.ci_high, opts.slope_tolerance
                ),
            ));
        }
        chart = chart.with_series(error_series("control", &cells));
        report.cells.extend(cells);
    }
    if cfg.plots {
        report.plots.push(("rate.svg".into(), chart.render()));
    }
    Ok(report)
}

struct ChainSummary {
    distances: Vec<f64>,
    mean_error: f64,
    acceptance: f64,
    mean_level: f64,
    chain: crate::bayes::PosteriorChain,
}

/// Posterior mass of frozen-radius balls `M eps_n` and the posterior-mean error over the `n` grid.
pub fn run_contraction_study(cfg: &ExperimentConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let basis = cfg.basis()?;
    let opts = &cfg.contraction;
    let mut report = StudyReport::new(Study::Contraction, cfg.seed);
    let prior = opts.prior.build(&basis, model.sigma())?;
    let truth = opts.truth.drift(&model, &basis)?;
    let truth_model = model.with_drift(truth.clone());
    let reference = BallReference::new(truth.function(), &basis)?;

    let mut chains: Vec<std::result::Result<Vec<ChainSummary>, String>> = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let results: Vec<Result<ChainSummary>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.task_seed(i, r);
                let obs = simulate_observations(&truth_model, &cfg.path_config(n, seed))?;
                let chain = run_mcmc(&prior, &obs, model.sigma(), &McmcConfig::new(opts.iters, opts.burnin, seed))?;
                let distances = chain.draws.iter().map(|d| reference.distance(&d.coeffs)).collect();
                let mean_error = reference.distance(&chain.posterior_mean());
                let acceptance = chain.within.rate();
                let mean_level = chain.draws.iter().map(|d| d.m as f64).sum::<f64>() / chain.draws.len() as f64;
                Ok(ChainSummary { distances, mean_error, acceptance, mean_level, chain })
            })
            .collect();
        chains.push(first_error(results));
    }

    // calibrate M on the smallest n, then freeze
    let m_const = match &chains[0] {
        Ok(first) => {
            let pooled: Vec<f64> = first.iter().flat_map(|c| c.distances.iter().copied()).collect();
            let n0 = cfg.n_grid[0];
            Some(quantile(&pooled, opts.calibration_mass) / eps_n(n0, cfg.delta(n0), opts.s))
        }
        Err(_) => None,
    };
    if let Some(m) = m_const {
        report.constants.insert("M".into(), m);
    } else {
        report.flags.push("calibration cell failed".into());
    }

    let mut masses = Vec::new();
    let mut errors = Vec::new();
    for ((i, &n), result) in cfg.n_grid.iter().enumerate().zip(&chains) {
        let delta = cfg.delta(n);
        let mut cell = Cell::at(format!("n={n}"), n, delta);
        let eps = eps_n(n, delta, opts.s);
        cell.design.insert("nDelta".into(), n as f64 * delta);
        cell.design.insert("eps_n".into(), eps);
        match (result, m_const) {
            (Err(e), _) => {
                cell.error = Some(e.clone());
                cell.flags.push("mcmc failed".into());
            }
            (Ok(summaries), Some(m)) => {
                let radius = m * eps;
                cell.design.insert("radius".into(), radius);
                let mass: Vec<f64> = summaries.iter().map(|s| posterior_ball_mass(&s.chain, &reference, radius)).collect();
                let err: Vec<f64> = summaries.iter().map(|s| s.mean_error).collect();
                let acc: Vec<f64> = summaries.iter().map(|s| s.acceptance).collect();
                let lvl: Vec<f64> = summaries.iter().map(|s| s.mean_level).collect();
                let mass = Estimate::mean_of(&mass);
                let err = Estimate::mean_of(&err);
                cell.values.insert("ball_mass".into(), mass);
                cell.values.insert("ball_mass_infinite_radius".into(), Estimate::exact(1.0));
                cell.values.insert("posterior_mean_error".into(), err);
                cell.values.insert("acceptance_rate".into(), Estimate::mean_of(&acc));
                cell.values.insert("mean_resolution".into(), Estimate::mean_of(&lvl));
                masses.push((i, mass));
                errors.push((i, err));
            }
            (Ok(_), None) => cell.flags.push("no calibrated radius".into()),
        }
        report.cells.push(cell);
    }

    let complete = masses.len() == cfg.n_grid.len();
    let monotone = complete && masses.windows(2).all(|w| w[1].1.value >= w[0].1.value - opts.mass_tolerance);
    report.verdicts.push(Verdict::new(
        "contraction_mass_nondecreasing",
        monotone,
        format!("masses {:?}, tolerance {}", masses.iter().map(|m| m.1.value).collect::<Vec<_>>(), opts.mass_tolerance),
    ));
    let decreasing = complete
        && errors
            .windows(2)
            .all(|w| w[1].1.value <= w[0].1.value + 3.0 * (w[0].1.se.powi(2) + w[1].1.se.powi(2)).sqrt());
    report.verdicts.push(Verdict::new(
        "contraction_error_decreasing",
        decreasing,
        format!("posterior-mean errors {:?}", errors.iter().map(|e| e.1.value).collect::<Vec<_>>()),
    ));
    let terminal = masses.last().map(|m| m.1.value).unwrap_or(0.0);
    report.verdicts.push(Verdict::new(
        "contraction_terminal_mass",
        complete && terminal >= opts.min_terminal_mass,
        format!("terminal mass {terminal:.4}, required {}", opts.min_terminal_mass),
    ));

    if cfg.plots {
        let nd = |i: usize| cfg.n_grid[i] as f64 * cfg.delta(cfg.n_grid[i]);
        let chart = Chart::new("posterior ball mass at M eps_n", "n Delta", "mass")
            .with_series(Series::new("mass", masses.iter().map(|(i, m)| (nd(*i), m.value)).collect(), Style::LinePoints));
        report.plots.push(("contraction_mass.svg".into(), chart.render()));
        let chart = Chart::new("posterior-mean L2 error", "n Delta", "error")
            .log_log()
            .with_series(Series::new("error", errors.iter().map(|(i, e)| (nd(*i), e.value)).collect(), Style::LinePoints));
        report.plots.push(("contraction_error.svg".into(), chart.render()));
        if let Some(Ok(last)) = chains.last() {
            let trace: Vec<(f64, f64)> =
                last[0].distances.iter().enumerate().map(|(k, d)| (k as f64, *d)).collect();
            let chart = Chart::new("trace of ||b - b0|| at the largest n", "iteration", "distance")
                .with_series(Series::new("chain 0", trace, Style::Line));
            report.plots.push(("contraction_trace.svg".into(), chart.render()));
        }
    }
    Ok(report)
}

/// Unit-`L^2` trigonometric directions with `harmonics` frequencies, mean zero.
pub fn random_directions(count: usize, harmonics: usize, seed: u64) -> Vec<TrigSeries> {
    let mut rng = rng_for(seed);
    (0..count)
        .map(|_| {
            let cos: Vec<f64> = (0..harmonics).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sin: Vec<f64> = (0..harmonics).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = TrigSeries::new(0.0, cos, sin);
            h.scaled(1.0 / h.l2_norm())
        })
        .collect()
}

/// `b0 + h`.
pub fn perturb(model: &ModelParams, h: &TrigSeries) -> ModelParams {
    let f = model.drift().function().add(&PeriodicFunction::trig(h.clone()));
    let d = model.drift().derivative().add(&PeriodicFunction::trig(h.derivative()));
    model.with_drift(DriftSpec::tight(f, d))
}

/// Girsanov moment identities, quadratic KL scaling with frozen constants,
/// and the variance tensorization inequality.
pub fn run_smallball_and_kl(cfg: &ExperimentConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let opts = &cfg.kl;
    if opts.distances.is_empty() || opts.directions == 0 {
        return Err(invalid("kl study needs distances and directions"));
    }
    let base = cfg.load_model()?;
    let basis = cfg.basis()?;
    let model0 = base.with_drift(opts.truth.drift(&base, &basis)?);
    let mut report = StudyReport::new(Study::Klcheck, cfg.seed);

    // Girsanov moments
    let g_dir = &random_directions(1, opts.harmonics, cfg.seed ^ 0x5151)[0];
    let g_model = perturb(&model0, &g_dir.scaled(opts.girsanov_distance));
    let gm = girsanov_moments(&model0, &g_model, opts.girsanov_delta, opts.girsanov_paths, opts.substeps, cfg.seed);
    let mut cell = Cell::new("girsanov");
    cell.delta = Some(opts.girsanov_delta);
    cell.values.insert("mean".into(), gm.mean);
    cell.values.insert("second_moment".into(), gm.second);
    cell.values.insert("mean_oracle".into(), Estimate::exact(gm.mean_oracle));
    cell.values.insert("second_moment_oracle".into(), Estimate::exact(gm.second_oracle));
    cell.design.insert("distance".into(), opts.girsanov_distance);
    report.cells.push(cell);
    report.verdicts.push(Verdict::new(
        "girsanov_mean",
        gm.mean.within(gm.mean_oracle, 3.0),
        format!("{:.6e} +- {:.2e} vs {:.6e}", gm.mean.value, gm.mean.se, gm.mean_oracle),
    ));
    report.verdicts.push(Verdict::new(
        "girsanov_second_moment",
        gm.second.within(gm.second_oracle, 3.0),
        format!("{:.6e} +- {:.2e} vs {:.6e}", gm.second.value, gm.second.se, gm.second_oracle),
    ));

    // identical drifts: every divergence is exactly zero
    let same = transition_kl(&model0, &model0, opts.delta, opts.short_paths.min(1000), opts.substeps, cfg.seed);
    let mut cell = Cell::new("b=b0");
    cell.values.insert("kl_transition".into(), same.raw);
    cell.values.insert("kl_transition_cv".into(), same.cv);
    cell.values.insert("kl_invariant".into(), Estimate::exact(kl_invariant(&model0, &model0)));
    let zero_ok = cell.values.values().all(|e| e.within(0.0, 3.0));
    report.cells.push(cell);
    report.verdicts.push(Verdict::new("identical_model_zero", zero_ok, "all divergences 0 +- 3 SE"));

    // quadratic scaling with the same directions at every distance
    let dirs = random_directions(opts.directions, opts.harmonics, cfg.seed ^ 0xd1d1);
    let mut per_distance = Vec::new();
    for (i, &d) in opts.distances.iter().enumerate() {
        let rows: Vec<(f64, f64, f64, f64)> = dirs
            .par_iter()
            .enumerate()
            .map(|(j, h)| {
                let model = perturb(&model0, &h.scaled(d));
                let dist = l2_distance(model0.drift().function(), model.drift().function());
                let step = transition_kl(
                    &model0,
                    &model,
                    opts.delta,
                    opts.short_paths,
                    opts.substeps,
                    cfg.task_seed(i, j).wrapping_add(1 << 32),
                );
                let scale = opts.delta * dist * dist;
                (step.cv.value / scale, step.cv.se / scale, step.raw.value / step.raw.se.max(f64::MIN_POSITIVE), kl_invariant(&model0, &model) / (dist * dist))
            })
            .collect();
        per_distance.push((d, rows));
    }
    let (_, first_rows) = &per_distance[0];
    let c_kl = opts.slack * first_rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let c_inv = opts.slack * first_rows.iter().map(|r| r.3).fold(0.0, f64::max);
    report.constants.insert("C".into(), c_kl);
    report.constants.insert("C_prime".into(), c_inv);
    let mut means = Vec::new();
    let (mut within_c, mut within_c_inv, mut nonneg) = (true, true, true);
    for (d, rows) in &per_distance {
        let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let inv: Vec<f64> = rows.iter().map(|r| r.3).collect();
        let mean_ratio = Estimate::mean_of(&ratios);
        means.push(mean_ratio.value);
        within_c &= ratios.iter().all(|r| *r <= c_kl);
        within_c_inv &= inv.iter().all(|r| *r <= c_inv);
        nonneg &= rows.iter().all(|r| r.2 >= -3.0);
        let mut cell = Cell::new(format!("distance={d}"));
        cell.delta = Some(opts.delta);
        cell.design.insert("distance".into(), *d);
        cell.values.insert("kl_ratio".into(), mean_ratio);
        cell.values.insert("kl_ratio_max".into(), Estimate::new(
            ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            rows.iter().map(|r| r.1).fold(0.0, f64::max),
        ));
        cell.values.insert("kl_invariant_ratio".into(), Estimate::mean_of(&inv));
        report.cells.push(cell);
    }
    let (lo, hi) = means.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| (a.min(*m), b.max(*m)));
    report.verdicts.push(Verdict::new(
        "kl_ratio_constant",
        hi / lo <= opts.ratio_band,
        format!("mean ratios {means:?}, max/min {:.4}, band {}", hi / lo, opts.ratio_band),
    ));
    report.verdicts.push(Verdict::new("kl_transition_bounded", within_c, format!("C = {c_kl:.4}")));
    report.verdicts.push(Verdict::new("kl_invariant_bounded", within_c_inv, format!("C' = {c_inv:.4}")));
    report.verdicts.push(Verdict::new("kl_nonnegative", nonneg, "raw estimates >= -3 SE"));

    // tensorization
    let t_dir = &dirs[0];
    let t_model = perturb(&model0, &t_dir.scaled(opts.tensor_distance));
    let kc = KlCheckConfig {
        n: opts.tensor_n,
        delta: opts.tensor_delta,
        reps: opts.tensor_reps,
        short_paths: opts.short_paths,
        substeps: opts.substeps,
        seed: cfg.seed.wrapping_add(7),
    };
    let kr = kl_checks(&model0, &t_model, &kc)?;
    let mut cell = Cell::at("tensorization", opts.tensor_n, opts.tensor_delta);
    cell.design.insert("distance".into(), kr.l2_distance);
    cell.values.insert("var_joint".into(), kr.var_joint);
    cell.values.insert("var_initial".into(), Estimate::exact(kr.var_initial));
    cell.values.insert("var_transition".into(), kr.var_transition);
    cell.values.insert("tensorization_rhs".into(), kr.tensorization_rhs);
    cell.values.insert("kl_joint".into(), kr.kl_joint);
    cell.values.insert("kl_joint_decomposition".into(), Estimate::exact(kr.kl_joint_decomposition));
    cell.values.insert("decomposition_residual".into(), Estimate::new(kr.decomposition_residual(), kr.kl_joint.se));
    report.cells.push(cell);
    report.verdicts.push(Verdict::new(
        "variance_tensorization",
        kr.tensorization_holds(),
        format!(
            "Var joint {:.4e} +- {:.2e} <= 3 (Var initial + n Var step) = {:.4e} + 3 SE",
            kr.var_joint.value, kr.var_joint.se, kr.tensorization_rhs.value
        ),
    ));

    if cfg.plots {
        let pts = per_distance
            .iter()
            .zip(&means)
            .map(|((d, _), m)| (*d, *m))
            .collect();
        let chart = Chart::new("KL / (Delta ||b - b0||^2)", "||b - b0||", "ratio")
            .with_series(Series::new("mean over directions", pts, Style::LinePoints));
        report.plots.push(("kl_ratio.svg".into(), chart.render()));
        let pi0 = model0.density();
        let pib = t_model.density();
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let chart = Chart::new("invariant densities", "x", "density")
            .with_series(Series::new("pi_0", grid.iter().map(|x| (*x, pi0.value_at(*x))).collect(), Style::Line))
            .with_series(Series::new("pi_b", grid.iter().map(|x| (*x, pib.value_at(*x))).collect(), Style::Line));
        report.plots.push(("densities.svg".into(), chart.render()));
    }
    Ok(report)
}

fn modulus_quantile(model: &ModelParams, m: usize, opts: &HolderOptions, seed: u64) -> Result<(Estimate, Vec<f64>)> {
    let coef = Coefficients::new(model);
    let steps = (m as f64 / opts.fine_step).round() as usize;
    let stats: Vec<Result<f64>> = (0..opts.paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_for(seed.wrapping_add(p as u64));
            let x0 = model.density().sample(&mut rng);
            let path = simulate_fine(&coef, x0, opts.fine_step, steps, &mut rng);
            holder_modulus_stat(&path, m as f64, (-2.0f64).exp())
        })
        .collect();
    let stats = stats.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok((quantile_estimate(&stats, opts.quantile), stats))
}

/// Upper quantiles of the modulus statistic over horizons `m`, normalized by `sqrt(log m)`.
pub fn run_holder_study(cfg: &ExperimentConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let opts = &cfg.holder;
    if opts.m_grid.is_empty() || opts.m_grid.iter().any(|m| *m < 2) {
        return Err(invalid("m_grid needs horizons of at least 2"));
    }
    let model = cfg.load_model()?;
    let mut report = StudyReport::new(Study::Holder, cfg.seed);
    let mut normalized = Vec::new();
    for (i, &m) in opts.m_grid.iter().enumerate() {
        let (q, _) = modulus_quantile(&model, m, opts, cfg.seed.wrapping_add((i * opts.paths) as u64))?;
        let norm = (m as f64).ln().sqrt();
        let mut cell = Cell::new(format!("m={m}"));
        cell.design.insert("m".into(), m as f64);
        cell.values.insert("quantile".into(), q);
        let nq = Estimate::new(q.value / norm, q.se / norm);
        cell.values.insert("normalized_quantile".into(), nq);
        normalized.push(nq);
        report.cells.push(cell);
    }
    let finite = normalized.iter().all(|e| e.value.is_finite() && e.value > 0.0);
    report.verdicts.push(Verdict::new("holder_quantiles_finite", finite, "quantiles positive and finite"));
    let mean = normalized.iter().map(|e| e.value).sum::<f64>() / normalized.len() as f64;
    let flat = normalized.iter().all(|e| (e.value - mean).abs() <= opts.band * mean);
    report.verdicts.push(Verdict::new(
        "holder_envelope_flat",
        finite && flat,
        format!(
            "normalized {:?}, mean {mean:.4}, band +-{}",
            normalized.iter().map(|e| e.value).collect::<Vec<_>>(),
            opts.band
        ),
    ));

    // scaling in sigma for the driftless model, independent seeds
    let m = opts.m_grid[0];
    let sigma = model.sigma().clone();
    let bm = ModelParams::new(DriftSpec::zero(), sigma.clone());
    let bm2 = ModelParams::new(DriftSpec::zero(), sigma.scaled(opts.sigma_factor)?);
    let base = cfg.seed.wrapping_add(1 << 40);
    let (q1, _) = modulus_quantile(&bm, m, opts, base)?;
    let (q2, _) = modulus_quantile(&bm2, m, opts, base.wrapping_add(opts.paths as u64))?;
    let ratio = q2.value / q1.value;
    let ratio_se = ratio * ((q1.se / q1.value).powi(2) + (q2.se / q2.value).powi(2)).sqrt();
    let ratio = Estimate::new(ratio, ratio_se);
    let mut cell = Cell::new(format!("sigma scaling m={m}"));
    cell.design.insert("factor".into(), opts.sigma_factor);
    cell.values.insert("quantile_sigma".into(), q1);
    cell.values.insert("quantile_scaled_sigma".into(), q2);
    cell.values.insert("ratio".into(), ratio);
    report.cells.push(cell);
    report.verdicts.push(Verdict::new(
        "holder_sigma_scaling",
        ratio.within(opts.sigma_factor, 3.0),
        format!("ratio {:.4} +- {:.4}, expected {}", ratio.value, ratio.se, opts.sigma_factor),
    ));

    if cfg.plots {
        let pts = opts.m_grid.iter().zip(&normalized).map(|(m, e)| (*m as f64, e.value)).collect();
        let chart = Chart::new("normalized modulus quantile", "m", "quantile / sqrt(log m)")
            .with_series(Series::new("envelope", pts, Style::LinePoints));
        report.plots.push(("holder.svg".into(), chart.render()));
    }
    Ok(report)
}

/// Prior draws against the implied `C^1` bound, and the prior mass of a small
/// coefficient ball around `pi_m b0` against `(eps zeta / 2)^{D_m}`.
pub fn run_prior_smallball(cfg: &ExperimentConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let opts = &cfg.smallball;
    let model = cfg.load_model()?;
    let basis = cfg.basis()?;
    let prior = opts.prior.build(&basis, model.sigma())?;
    if opts.m == 0 || opts.m > prior.cap {
        return Err(invalid(format!("ball resolution {} outside 1..={}", opts.m, prior.cap)));
    }
    let mut report = StudyReport::new(Study::Smallball, cfg.seed);

    let k0 = prior.implied_k0();
    let norms: Vec<Result<f64>> = (0..opts.draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed.wrapping_add(i as u64));
            let draw = sample_prior(&prior, &mut rng);
            Ok(prior.drift(&draw.coeffs, None)?.c1_norm())
        })
        .collect();
    let norms = norms.into_iter().collect::<Result<Vec<f64>>>()?;
    let inside = norms.iter().filter(|v| **v <= k0 * (1.0 + 1e-9)).count();
    let worst = norms.iter().copied().fold(0.0, f64::max);
    let mut cell = Cell::new("membership");
    cell.design.insert("K0".into(), k0);
    cell.design.insert("draws".into(), opts.draws as f64);
    cell.values.insert("largest_c1_norm".into(), Estimate::exact(worst));
    cell.values.insert("fraction_inside".into(), Estimate::exact(inside as f64 / opts.draws as f64));
    report.cells.push(cell);
    report.verdicts.push(Verdict::new(
        "prior_support",
        inside == opts.draws,
        format!("{inside}/{} draws with C1 norm <= K0 = {k0:.4} (largest {worst:.4})", opts.draws),
    ));

    let truth = opts.truth.drift(&model, &basis)?;
    let centre = basis.analyze(truth.function(), opts.m)?;
    let hits: Vec<f64> = (0..opts.ball_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed.wrapping_add((opts.draws + i) as u64));
            let draw = sample_prior_at(&prior, opts.m, &mut rng);
            f64::from(u8::from(draw.coeffs.l2_distance(&centre) <= opts.eps))
        })
        .collect();
    let mass = Estimate::mean_of(&hits);
    let dim = WaveletBasis::dimension(opts.m) as i32;
    let zeta = prior.zeta();
    let bound = (opts.eps * zeta / 2.0).powi(dim);
    let mut cell = Cell::new(format!("ball m={} eps={}", opts.m, opts.eps));
    cell.design.insert("zeta".into(), zeta);
    cell.design.insert("bound".into(), bound);
    cell.values.insert("ball_mass".into(), mass);
    report.cells.push(cell);
    report.verdicts.push(Verdict::new(
        "prior_small_ball",
        mass.value >= bound - 3.0 * mass.se,
        format!("mass {:.4e} +- {:.2e} vs bound {bound:.4e}", mass.value, mass.se),
    ));
    Ok(report)
}

/// `L^1` distance between the occupation histogram of `X mod 1` (`bins` cells)
/// over `[0, horizon]` and the invariant law.
pub fn occupation_l1(model: &ModelParams, horizon: f64, dt: f64, bins: usize, seed: u64) -> Result<f64> {
    if bins == 0 || !(dt > 0.0) || !(horizon > dt) {
        return Err(invalid("need bins > 0 and 0 < dt < horizon"));
    }
    let coef = Coefficients::new(model);
    let mut rng = rng_for(seed);
    let x0 = model.density().sample(&mut rng);
    let steps = (horizon / dt).round() as usize;
    let path = simulate_fine(&coef, x0, dt, steps, &mut rng);
    let mut counts = vec![0usize; bins];
    for x in &path.values[1..] {
        let y = x.rem_euclid(1.0);
        counts[((y * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let d = model.density();
    let cdf_at = |x: f64| {
        let cells = d.cells();
        let pos = x * cells as f64;
        let i = (pos.floor() as usize).min(cells - 1);
        let t = pos - i as f64;
        d.cdf()[i] + t * (d.cdf()[i + 1] - d.cdf()[i])
    };
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mass = cdf_at((i + 1) as f64 / bins as f64) - cdf_at(i as f64 / bins as f64);
            (*c as f64 / steps as f64 - mass).abs()
        })
        .sum())
}

/// A Fourier target `sum_k k^{-(s+1/2)} (a_k cos + b_k sin)(2 pi k x)`, `k < 2^top`,
/// with random signs; its dyadic blocks have `L^2` mass of order `2^{-ls}`.
pub fn besov_fourier_target(s: f64, top: usize, seed: u64) -> TrigSeries {
    let mut rng = rng_for(seed);
    let kmax = (1usize << top) - 1;
    let mut cos = Vec::with_capacity(kmax);
    let mut sin = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let w = (k as f64).powf(-(s + 0.5));
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        cos.push(w * theta.cos());
        sin.push(w * theta.sin());
    }
    TrigSeries::new(0.0, cos, sin)
}

/// `||pi_m f - f||_2` for each `m`, on the quadrature nodes of `basis`.
pub fn approximation_errors(basis: &WaveletBasis, f: &PeriodicFunction, levels: &[usize]) -> Result<Vec<f64>> {
    let q = basis.quad_points();
    let samples: Vec<f64> = (0..q).map(|i| f.eval(i as f64 / q as f64)).collect();
    levels
        .iter()
        .map(|&m| {
            let approx = basis.synthesize_on_quadrature(&basis.analyze_samples(&samples, m)?)?;
            let sq: f64 = approx.iter().zip(&samples).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / q as f64;
            Ok(sq.sqrt())
        })
        .collect()
}

/// Slope of `log2 ||pi_m f - f||_2` against `m`.
pub fn approximation_decay(basis: &WaveletBasis, f: &PeriodicFunction, levels: &[usize]) -> Result<LinearFit> {
    let errs = approximation_errors(basis, f, levels)?;
    let x: Vec<f64> = levels.iter().map(|m| *m as f64).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
    linear_fit(&x, &y).ok_or_else(|| invalid("need at least two levels"))
}
