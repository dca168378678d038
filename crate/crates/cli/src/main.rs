use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftbench_core::bayes::{run_mcmc, McmcConfig, PosteriorChain, PriorKind};
use driftbench_core::experiments::{run_study, ExperimentConfig, PriorOptions, Study};
use driftbench_core::svg::{Chart, Series, Style};
use driftbench_core::{
    fit_minimum_contrast, simulate_observations, EstimatorConfig, Error, ModelParams, Observations, PathConfig,
    RateSchedule, ResolutionRule, WaveletBasis, WaveletFamily,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "driftbench", version, about = "Drift estimation and posterior benchmarks for periodic diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate discrete observations and write them as CSV.
    Simulate(SimulateArgs),
    /// Fit the minimum-contrast wavelet estimator to observations.
    Estimate(EstimateArgs),
    /// Sample the posterior under a wavelet prior.
    Posterior(PosteriorArgs),
    /// Run a Monte-Carlo study from a JSON config.
    Study(StudyArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Model JSON; defaults to drift pi cos(2 pi x) with sigma = 1.
    #[arg(long = "config", alias = "model", value_name = "FILE")]
    model: Option<PathBuf>,
}

impl ModelArg {
    fn load(&self) -> Result<ModelParams, Error> {
        match &self.model {
            Some(p) => ModelParams::from_file(p),
            None => ModelParams::cosine(std::f64::consts::PI, 1.0),
        }
    }
}

#[derive(Args)]
struct BasisArgs {
    #[arg(long, value_enum, default_value = "db8")]
    wavelet: Family,
    #[arg(long, default_value_t = 10)]
    max_level: usize,
}

impl BasisArgs {
    fn basis(&self) -> Result<WaveletBasis, Error> {
        let family = match self.wavelet {
            Family::Db4 => WaveletFamily::Daubechies { order: 4 },
            Family::Db6 => WaveletFamily::Daubechies { order: 6 },
            Family::Db8 => WaveletFamily::Daubechies { order: 8 },
            Family::Db10 => WaveletFamily::Daubechies { order: 10 },
            Family::Fourier => WaveletFamily::Fourier,
        };
        WaveletBasis::new(family, self.max_level)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Db4,
    Db6,
    Db8,
    Db10,
    Fourier,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    substeps: usize,
    #[arg(long)]
    x0: Option<f64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_out_of_regime: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Observations CSV.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    basis: BasisArgs,
    /// Fixed resolution; otherwise chosen from `--s`.
    #[arg(long, conflicts_with = "s")]
    level: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    /// Sup-norm bound K0; defaults to the model drift's C1 norm.
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG overlay of the fit and the model drift.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Sieve,
    KnownSmoothness,
    InvariantDensity,
}

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long, value_enum, default_value = "sieve")]
    prior: PriorArg,
    #[arg(long = "B", default_value_t = 4.0)]
    b: f64,
    #[arg(long, default_value_t = 6)]
    cap: usize,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 5_000)]
    burnin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chain as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG trace of the log posterior.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(value_enum)]
    kind: StudyKind,
    #[arg(long)]
    config: PathBuf,
    /// Report directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    allow_out_of_regime: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Rate,
    Contraction,
    Klcheck,
    Holder,
    Smallball,
}

impl From<StudyKind> for Study {
    fn from(k: StudyKind) -> Self {
        match k {
            StudyKind::Rate => Study::Rate,
            StudyKind::Contraction => Study::Contraction,
            StudyKind::Klcheck => Study::Klcheck,
            StudyKind::Holder => Study::Holder,
            StudyKind::Smallball => Study::Smallball,
        }
    }
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let model = args.model.load()?;
    let mut cfg = PathConfig::new(args.n, args.delta, args.seed).with_substeps(args.substeps);
    if let Some(x0) = args.x0 {
        cfg = cfg.with_x0(x0);
    }
    if args.allow_out_of_regime {
        cfg = cfg.out_of_regime();
    }
    let obs = simulate_observations(&model, &cfg)?;
    let mut w = writer(args.out.as_deref())?;
    obs.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<(), Error> {
    let obs = Observations::load_csv(&args.data)?;
    let model = args.model.load()?;
    let basis = args.basis.basis()?;
    let rule = match args.level {
        Some(level) => ResolutionRule::Fixed { level },
        None => ResolutionRule::Rate(RateSchedule::new(args.s)),
    };
    let k0 = args.k0.unwrap_or_else(|| model.drift().c1_norm());
    let config = EstimatorConfig::new(rule, k0, basis.clone())?;
    let fit = fit_minimum_contrast(&obs, &config)?;
    let mut w = writer(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &fit)?;
    writeln!(w)?;
    w.flush()?;
    if let Some(plot) = args.plot {
        let f = basis.synthesize(&fit.coeffs)?;
        let xs: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let chart = Chart::new("drift estimate", "x", "b(x)")
            .with_series(Series::new("estimate", xs.iter().map(|x| (*x, f.eval(*x))).collect(), Style::Line))
            .with_series(Series::new("model", xs.iter().map(|x| (*x, model.drift().eval(*x))).collect(), Style::Line));
        fs::write(plot, chart.render())?;
    }
    Ok(())
}

fn posterior(args: PosteriorArgs) -> Result<(), Error> {
    let obs = Observations::load_csv(&args.data)?;
    let model = args.model.load()?;
    let basis = args.basis.basis()?;
    let kind = match args.prior {
        PriorArg::Sieve => PriorKind::Sieve,
        PriorArg::KnownSmoothness => PriorKind::KnownSmoothness,
        PriorArg::InvariantDensity => PriorKind::InvariantDensity,
    };
    let opts = PriorOptions { kind, b: args.b, cap: args.cap, s: args.s, q: None };
    let prior = opts.build(&basis, model.sigma())?;
    let chain = run_mcmc(&prior, &obs, model.sigma(), &McmcConfig::new(args.iters, args.burnin, args.seed))?;
    if let Some(out) = &args.out {
        let mut w = BufWriter::new(File::create(out)?);
        chain.write_jsonl(&mut w)?;
        w.flush()?;
    }
    if let Some(plot) = &args.plot {
        fs::write(plot, trace_chart(&chain).render())?;
    }
    let summary = json!({
        "draws": chain.len(),
        "posterior_mean": chain.posterior_mean(),
        "level_frequencies": chain.level_frequencies(prior.cap),
        "acceptance": {
            "within": chain.within.rate(),
            "birth": chain.birth.rate(),
            "death": chain.death.rate(),
        },
        "seed": chain.seed,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn trace_chart(chain: &PosteriorChain) -> Chart {
    let pts = chain.draws.iter().enumerate().map(|(i, d)| (i as f64, d.logpost)).collect();
    Chart::new("log posterior trace", "iteration", "log posterior").with_series(Series::new("chain", pts, Style::Line))
}

fn study(args: StudyArgs) -> Result<bool, Error> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    cfg.study = args.kind.into();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.plots |= args.plots;
    cfg.allow_out_of_regime |= args.allow_out_of_regime;
    let report = run_study(&cfg)?;
    let dir = args
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let file = report.write_to(&dir)?;
    for v in &report.verdicts {
        println!("[{}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.criterion, v.detail);
    }
    for flag in &report.flags {
        println!("flag: {flag}");
    }
    println!("report written to {}", file.display());
    Ok(report.all_passed())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical(_) | Error::Domain(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Posterior(a) => posterior(a),
        Command::Study(a) => study(a).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("driftbench: {e}");
            if matches!(e, Error::Regime { .. }) {
                eprintln!("pass --allow-out-of-regime to run anyway");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
