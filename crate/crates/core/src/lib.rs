//! Periodic diffusion models, wavelet drift estimation and posterior sampling,
//! with the Monte-Carlo studies that check their quantitative behaviour.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod function;
pub mod model;
pub mod path;
pub mod stats;
pub mod svg;
pub mod wavelet;

pub use bayes::{
    drift_from_logdensity, girsanov_loglik_ratio, kl_checks, log_pseudo_likelihood, posterior_ball_mass,
    run_mcmc, run_mcmc_with, sample_prior, BallReference, KlCheckConfig, KlReport, Likelihood, McmcConfig,
    PosteriorChain, PriorKind, PriorSpec, QDensity,
};
pub use error::{Error, Result};
pub use estimator::{
    empirical_loss, empirical_norm, fit_minimum_contrast, plug_in_test, select_resolution, EstimatorConfig,
    FitResult, RateSchedule, ResolutionRule,
};
pub use experiments::{run_study, DeltaRule, ExperimentConfig, StudyReport, Study, Truth, Verdict};
pub use function::{PeriodicFunction, TrigSeries};
pub use model::{
    hellinger_invariant, kl_invariant, DriftSpec, InvariantDensity, ModelFile, ModelParams, SigmaSpec,
};
pub use path::{
    holder_modulus_stat, increments_decomposition, simulate_observations, simulate_path, subsample,
    Observations, PathConfig, SamplePath,
};
pub use stats::Estimate;
pub use wavelet::{l2_distance, CoefficientVector, WaveletBasis, WaveletFamily};
