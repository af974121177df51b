//! Simulation and verification library for denoising diffusion sampling
//! with noisy score oracles.
//!
//! The library generates samples from analytically tractable targets by
//! running the standard reverse-diffusion iteration on a two-phase
//! (arithmetic-then-geometric) time grid, perturbs the score oracle with
//! controlled bias and noise, measures the resulting Wasserstein-2 error,
//! and compares it against closed-form error guarantees.
//!
//! Module map:
//!
//! - [`target`]: tractable target distributions with exact smoothed scores,
//!   moments, and posterior (conditional) variances;
//! - [`phi`]: conditional-variance envelope functions and their calculus;
//! - [`tweedie`]: score-Hessian ↔ posterior-variance identities and their
//!   numerical verification;
//! - [`schedule`]: the two-phase discretization grid and its invariants;
//! - [`oracle`]: score oracles — exact, noisy, biased — and accuracy
//!   certification;
//! - [`sampler`]: the reverse-diffusion chain driver with cross-grid noise
//!   coupling;
//! - [`metrics`]: Wasserstein-2 estimators (Gaussian, assignment, sliced)
//!   and a TV/KL ↔ W₂ counterexample family;
//! - [`theory`]: evaluable error bounds and their building blocks;
//! - [`harness`]: experiment configuration, sweeps, bootstrap intervals,
//!   and rate fitting.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod numeric;
pub mod oracle;
pub mod phi;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod target;
pub mod theory;
pub mod tweedie;

pub use error::{Error, Result};
pub use harness::{
    check_monotone, discretization_rate_study, fit_rate, fit_rate_points, noise_excess_study,
    run_experiment, theorem_constants, write_csv, CellFailure, CellPlan, CellResult, CellSeeds,
    CiMethod, ExperimentConfig, ExperimentRecord, MonotoneReport, RateAxis, RateFit, RatePoint,
    RateStudy, ScheduleInput, SweepAxes, TheoremInputs, CSV_HEADER, MAX_SWEEP_CELLS,
    SCHEMA_VERSION,
};
pub use metrics::{
    tvkl_counterexample, w2_bures_fit, w2_exact_empirical, w2_gaussian, w2_sliced,
    EmpiricalW2Result, TvKlReport, W2Aux, W2Method, EXACT_ASSIGNMENT_CAP,
};
pub use oracle::{
    certify_assumption2, parse_oracle_spec, trajectory_probes, CertificationReport, NoiseFamily,
    NoiseSpec, Perturbation, ScoreOracle,
};
pub use phi::PhiFunction;
pub use sampler::{
    ddpm_step, forward_marginal_sample, run_anchored_family, run_ddpm, run_paired, PairedRun,
    RunResult, SampleMatrix, SamplerConfig,
};
pub use schedule::{
    build_schedule, check_contraction_regime, Schedule, ScheduleParams, StepContraction,
};
pub use target::TargetSpec;
pub use theory::{
    contraction_coeff, discr_error_bounds, gaussian_backward_moments, recursion_unroll, thm_bound,
    BoundParams, BoundTerms, ContractionCoeff, GaussianBackwardMoments, TheoremKind, TheoryBound,
};
pub use tweedie::{verify_tweedie_hessian, TweedieReport, TweedieVerdict};

