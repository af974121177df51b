//! Declarative experiment harness: sweeps over grid resolution and oracle
//! corruption, executed cell by cell with deterministically derived seeds.
//!
//! An [`ExperimentConfig`] describes one experiment — a target, a base
//! schedule, a base oracle spec, sample counts, a W₂ estimation method, and
//! optional sweep axes. [`run_experiment`] expands the sweep into cells in a
//! fixed documented order and runs each cell: sample the reverse iteration,
//! draw a forward-smoothed reference sample, estimate W₂ with a bootstrap
//! confidence interval, and attach the theoretical error bound where the
//! target's convexity constants are unambiguous. The resulting
//! [`ExperimentRecord`] serializes to JSON and exports to CSV with a stable
//! column set.
//!
//! On top of records, [`fit_rate`] and [`fit_rate_points`] fit log–log
//! convergence orders against the step size, [`check_monotone`] audits a
//! noise-level sweep for ordering violations, and the coupled-run studies
//! [`discretization_rate_study`] / [`noise_excess_study`] isolate the
//! discretization and oracle-noise error components with common random
//! numbers so the fitted orders are sharp at moderate sample sizes.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    exact_matched_squared_costs, w2_bures_fit, w2_gaussian, w2_sliced, W2Method,
    EXACT_ASSIGNMENT_CAP,
};
use crate::numeric::{fit_loglog, fnv1a64, kahan_sum, splitmix64};
use crate::oracle::{
    certify_assumption2, parse_oracle_spec, trajectory_probes, Perturbation, ScoreOracle,
};
use crate::rng::{chain_rng, Lane};
use crate::sampler::{
    forward_marginal_sample, run_anchored_family, run_ddpm, run_paired, SampleMatrix,
    SamplerConfig,
};
use crate::schedule::{build_schedule, ScheduleParams};
use crate::target::TargetSpec;
use crate::theory::{thm_bound, BoundParams, TheoremKind, TheoryBound};

/// Config format version accepted by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Hard ceiling on cells per experiment; larger sweeps are rejected at
/// validation time rather than silently truncated.
pub const MAX_SWEEP_CELLS: usize = 256;

/// Column set written by [`write_csv`], one row per completed cell. Optional
/// fields (`eps_*`, `bound_total`) are left empty when absent.
pub const CSV_HEADER: &str = "cell,k0,t1,h_max,d,oracle,n_chains,n_reference,w2,\
w2_ci_lower,w2_ci_upper,ci_method,eps_b_hat,eps_v_hat,bound_total,run_seed,wall_ms";

/// Base schedule description inside a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleInput {
    /// Two-phase grid with the error-bound default gap `δ = ½·e^{−2·t1}`.
    Theorem { t1: f64, a: f64, k0: usize },
    /// Two-phase grid with an explicit terminal gap.
    Explicit { t1: f64, a: f64, k0: usize, delta: f64 },
}

impl ScheduleInput {
    /// Steps per phase of the base grid.
    pub fn k0(&self) -> usize {
        match *self {
            ScheduleInput::Theorem { k0, .. } | ScheduleInput::Explicit { k0, .. } => k0,
        }
    }

    /// Grid parameters at the base resolution.
    pub fn params(&self) -> ScheduleParams {
        self.params_with_k0(self.k0())
    }

    /// Grid parameters with the resolution swapped out; everything else —
    /// including an explicit terminal gap — is kept, so cells of a `k0`
    /// sweep differ only in step size.
    pub fn params_with_k0(&self, k0: usize) -> ScheduleParams {
        match *self {
            ScheduleInput::Theorem { t1, a, .. } => ScheduleParams::with_default_delta(t1, a, k0),
            ScheduleInput::Explicit { t1, a, delta, .. } => ScheduleParams { t1, a, k0, delta },
        }
    }
}

/// Optional sweep axes. An empty axis means "use the base value". The cross
/// product is enumerated with `k0` outermost, then `noise_scale`, then
/// `noise_family` innermost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    /// Grid resolutions (steps per phase).
    #[serde(default)]
    pub k0: Vec<usize>,
    /// Oracle noise levels `σ_ζ`; requires an additive-noise base oracle or
    /// a `noise_family` axis to name the noise law.
    #[serde(default)]
    pub noise_scale: Vec<f64>,
    /// Noise families (`gauss`, `uniform`, `laplace`, `student<ν>`); the
    /// scale comes from the `noise_scale` axis or the base oracle spec.
    #[serde(default)]
    pub noise_family: Vec<String>,
}

fn default_n_slices() -> usize {
    128
}

fn default_bootstrap_resamples() -> usize {
    500
}

/// One experiment: target, grid, oracle, sample sizes, estimator, sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    pub target: TargetSpec,
    pub schedule: ScheduleInput,
    /// Base oracle spec (`exact`, `compress`, or `family:scale`); sweep axes
    /// override its family/scale per cell.
    pub oracle: String,
    /// Reverse chains per cell (one endpoint sample each).
    pub n_chains: usize,
    /// Reference sample size, drawn from the smoothing-free forward marginal.
    pub n_reference: usize,
    pub w2_method: W2Method,
    /// Projection count for the sliced estimator (default 128).
    #[serde(default = "default_n_slices")]
    pub n_slices: usize,
    /// Bootstrap resamples behind each confidence interval (default 500);
    /// `0` disables the interval. The sliced estimator never gets one.
    #[serde(default = "default_bootstrap_resamples")]
    pub bootstrap_resamples: usize,
    /// When `> 0` (must be ≥ 2), certify the oracle's bias/deviation
    /// parameters empirically with this many replays per probe point instead
    /// of trusting the construction's declared values.
    #[serde(default)]
    pub certify_reps: usize,
    /// Root seed; every cell derives its own independent seeds from it.
    pub seed: u64,
    /// Trajectory stride for single-run consumers (the CLI `run` command).
    /// Sweep records never store trajectories.
    #[serde(default)]
    pub record_trajectory: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepAxes>,
}

/// One enumerated sweep cell: its index, resolution, and resolved oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPlan {
    pub index: usize,
    pub k0: usize,
    pub oracle_spec: String,
}

/// Combines a base oracle spec with per-cell family/scale overrides.
fn resolve_oracle_spec(base: &str, family: Option<&str>, scale: Option<f64>) -> Result<String> {
    if family.is_none() && scale.is_none() {
        return Ok(base.to_string());
    }
    let base_parts = base.trim().split_once(':');
    let fam = match (family, base_parts) {
        (Some(f), _) => f.to_string(),
        (None, Some((name, _))) => name.to_string(),
        (None, None) => {
            return Err(Error::validation(format!(
                "sweeping noise_scale over base oracle '{base}' needs a noise_family axis \
                 or an additive-noise base spec (family:scale)"
            )));
        }
    };
    let sc = match (scale, base_parts) {
        (Some(s), _) => s,
        (None, Some((_, s))) => s.parse::<f64>().map_err(|_| {
            Error::validation(format!("base oracle '{base}' has a malformed scale"))
        })?,
        (None, None) => {
            return Err(Error::validation(format!(
                "sweeping noise_family over base oracle '{base}' needs a noise_scale axis \
                 or an additive-noise base spec (family:scale)"
            )));
        }
    };
    Ok(format!("{fam}:{sc}"))
}

impl ExperimentConfig {
    /// Expands the sweep into cells in the documented order (`k0` outermost,
    /// then `noise_scale`, then `noise_family`), resolving the oracle spec of
    /// each cell. Fails on unresolvable specs or oversized sweeps.
    pub fn cells(&self) -> Result<Vec<CellPlan>> {
        let default_axes = SweepAxes::default();
        let sweep = self.sweep.as_ref().unwrap_or(&default_axes);
        let k0_axis: Vec<usize> =
            if sweep.k0.is_empty() { vec![self.schedule.k0()] } else { sweep.k0.clone() };
        let scale_axis: Vec<Option<f64>> = if sweep.noise_scale.is_empty() {
            vec![None]
        } else {
            sweep.noise_scale.iter().copied().map(Some).collect()
        };
        let family_axis: Vec<Option<&str>> = if sweep.noise_family.is_empty() {
            vec![None]
        } else {
            sweep.noise_family.iter().map(|f| Some(f.as_str())).collect()
        };
        let total = k0_axis.len() * scale_axis.len() * family_axis.len();
        if total > MAX_SWEEP_CELLS {
            return Err(Error::validation(format!(
                "sweep enumerates {total} cells, above the ceiling {MAX_SWEEP_CELLS}"
            )));
        }
        let mut plans = Vec::with_capacity(total);
        for &k0 in &k0_axis {
            for &scale in &scale_axis {
                for &family in &family_axis {
                    let oracle_spec = resolve_oracle_spec(&self.oracle, family, scale)?;
                    parse_oracle_spec(&oracle_spec, self.target.clone())?;
                    plans.push(CellPlan { index: plans.len(), k0, oracle_spec });
                }
            }
        }
        Ok(plans)
    }

    /// Checks everything that can fail before any cell starts computing:
    /// version, target, every swept grid, sample counts against the
    /// estimator's requirements, and the full cell enumeration.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "config schema_version {} not supported; this build expects {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.target.validate()?;
        if self.n_chains < 2 || self.n_reference < 2 {
            return Err(Error::validation(format!(
                "need at least 2 samples per side, got n_chains = {}, n_reference = {}",
                self.n_chains, self.n_reference
            )));
        }
        match self.w2_method {
            W2Method::ExactAssignment => {
                if self.n_chains != self.n_reference {
                    return Err(Error::validation(format!(
                        "exact assignment pairs samples one-to-one; n_chains = {} must equal \
                         n_reference = {}",
                        self.n_chains, self.n_reference
                    )));
                }
                if self.n_chains > EXACT_ASSIGNMENT_CAP {
                    return Err(Error::validation(format!(
                        "exact assignment is capped at {EXACT_ASSIGNMENT_CAP} samples, got {}; \
                         use the sliced estimator",
                        self.n_chains
                    )));
                }
            }
            W2Method::Sliced => {
                if self.n_slices == 0 {
                    return Err(Error::validation("n_slices must be at least 1"));
                }
            }
            W2Method::BuresGaussianFit => {}
        }
        if self.certify_reps == 1 {
            return Err(Error::validation(
                "certify_reps must be 0 (use declared parameters) or at least 2",
            ));
        }
        if self.record_trajectory == Some(0) {
            return Err(Error::validation("trajectory stride must be at least 1"));
        }
        let plans = self.cells()?;
        let mut seen_k0: Vec<usize> = Vec::new();
        for plan in &plans {
            if !seen_k0.contains(&plan.k0) {
                build_schedule(&self.schedule.params_with_k0(plan.k0))?;
                seen_k0.push(plan.k0);
            }
        }
        Ok(())
    }

    /// Fingerprint of the full config (digest of its canonical JSON form),
    /// stored in the record so results can be traced back to their inputs.
    pub fn digest(&self) -> Result<u64> {
        Ok(fnv1a64(serde_json::to_string(self)?.as_bytes()))
    }
}

/// Seed-derivation roles; each cell gets one independent seed per role so
/// that changing, say, the bootstrap resample count never perturbs the run
/// itself.
const ROLE_RUN: u64 = 0;
const ROLE_REFERENCE: u64 = 1;
const ROLE_SLICES: u64 = 2;
const ROLE_BOOTSTRAP: u64 = 3;
const ROLE_CERTIFY: u64 = 4;

fn derive_seed(root: u64, cell: u64, role: u64) -> u64 {
    let mut state = root
        .wrapping_add(cell.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(role.wrapping_mul(0xd1b5_4a32_d192_ed03));
    // Two rounds decorrelate adjacent (root, cell, role) triples.
    splitmix64(&mut state);
    splitmix64(&mut state)
}

/// The per-cell seeds, recorded for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSeeds {
    pub run: u64,
    pub reference: u64,
    pub slices: u64,
    pub bootstrap: u64,
    pub certify: u64,
}

impl CellSeeds {
    /// Derives the five role seeds for one cell from the config root seed.
    pub fn derive(root: u64, cell: u64) -> Self {
        CellSeeds {
            run: derive_seed(root, cell, ROLE_RUN),
            reference: derive_seed(root, cell, ROLE_REFERENCE),
            slices: derive_seed(root, cell, ROLE_SLICES),
            bootstrap: derive_seed(root, cell, ROLE_BOOTSTRAP),
            certify: derive_seed(root, cell, ROLE_CERTIFY),
        }
    }
}

/// How a cell's confidence interval was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// Resample the matched squared distances of the optimal assignment,
    /// holding the matching fixed. Cheap (no re-solve per resample) and
    /// slightly narrow: it ignores the matching's own adaptivity.
    MatchedPairBootstrap,
    /// Resample rows of both clouds and refit the moment-based estimate.
    ResampleBootstrap,
    /// No interval; lower and upper both equal the point estimate.
    None,
}

impl CiMethod {
    fn as_str(self) -> &'static str {
        match self {
            CiMethod::MatchedPairBootstrap => "matched_pair_bootstrap",
            CiMethod::ResampleBootstrap => "resample_bootstrap",
            CiMethod::None => "none",
        }
    }
}

/// One completed sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: usize,
    pub k0: usize,
    pub t1: f64,
    /// Largest discretization step of this cell's grid (terminal gap
    /// excluded).
    pub h_max: f64,
    pub d: usize,
    /// Resolved oracle descriptor (e.g. `gauss:0.5`).
    pub oracle: String,
    pub n_chains: usize,
    pub n_reference: usize,
    /// Point estimate of W₂ between chain endpoints and the reference.
    pub w2: f64,
    /// 2.5% bootstrap percentile (equals `w2` when no interval was built).
    pub w2_ci_lower: f64,
    /// 97.5% bootstrap percentile (equals `w2` when no interval was built).
    pub w2_ci_upper: f64,
    pub ci_method: CiMethod,
    /// Oracle bias parameter: declared by the construction, or certified
    /// empirically when the config asks for it.
    pub eps_b_hat: Option<f64>,
    /// Oracle deviation parameter; `None` when the perturbation admits no
    /// state-free value (coordinate compression) and certification is off.
    pub eps_v_hat: Option<f64>,
    /// Theoretical W₂ bound at this cell's parameters, when the target's
    /// convexity constants are unambiguous and both `eps` values exist.
    pub bound: Option<TheoryBound>,
    pub seeds: CellSeeds,
    /// Wall-clock duration of the cell. Not covered by determinism
    /// guarantees.
    pub wall_ms: u64,
}

/// Why and where an experiment stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    /// Index of the cell that failed; cells before it completed normally.
    pub cell: usize,
    pub message: String,
    /// True for numerical aborts (non-finite states, broken invariants) as
    /// opposed to per-cell validation failures.
    pub numerical: bool,
}

/// Everything [`run_experiment`] produces: completed cells in enumeration
/// order plus the failure that stopped the sweep, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    /// Digest of the exact config that produced this record.
    pub config_digest: u64,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub failure: Option<CellFailure>,
}

fn percentile_bounds(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let last = values.len() - 1;
    let lo = (last as f64 * 0.025).floor() as usize;
    let hi = (last as f64 * 0.975).ceil() as usize;
    (values[lo], values[hi])
}

fn bootstrap_matched_pairs(costs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = costs.len();
    let mut rng = chain_rng(seed, 0, Lane::Bootstrap);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mean = kahan_sum((0..n).map(|_| costs[rng.random_range(0..n)])) / n as f64;
        values.push(mean.max(0.0).sqrt());
    }
    percentile_bounds(values)
}

fn resample_rows_into(src: &SampleMatrix, dst: &mut SampleMatrix, rng: &mut ChaCha8Rng) {
    for i in 0..dst.n {
        let j = rng.random_range(0..src.n);
        dst.data[i * dst.d..(i + 1) * dst.d].copy_from_slice(src.row(j));
    }
}

fn bootstrap_moment_fit(
    xs: &SampleMatrix,
    ys: &SampleMatrix,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = chain_rng(seed, 0, Lane::Bootstrap);
    let mut rx = SampleMatrix::zeros(xs.n, xs.d);
    let mut ry = SampleMatrix::zeros(ys.n, ys.d);
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        resample_rows_into(xs, &mut rx, &mut rng);
        resample_rows_into(ys, &mut ry, &mut rng);
        values.push(w2_bures_fit(&rx, &ry)?.value);
    }
    Ok(percentile_bounds(values))
}

fn estimate_w2(
    config: &ExperimentConfig,
    outputs: &SampleMatrix,
    reference: &SampleMatrix,
    seeds: &CellSeeds,
) -> Result<(f64, f64, f64, CiMethod)> {
    match config.w2_method {
        W2Method::ExactAssignment => {
            let (costs, _) = exact_matched_squared_costs(outputs, reference)?;
            let w2 = (kahan_sum(costs.iter().copied()) / costs.len() as f64).sqrt();
            if config.bootstrap_resamples == 0 {
                return Ok((w2, w2, w2, CiMethod::None));
            }
            let (lo, hi) =
                bootstrap_matched_pairs(&costs, config.bootstrap_resamples, seeds.bootstrap);
            Ok((w2, lo, hi, CiMethod::MatchedPairBootstrap))
        }
        W2Method::BuresGaussianFit => {
            let w2 = w2_bures_fit(outputs, reference)?.value;
            if config.bootstrap_resamples == 0 {
                return Ok((w2, w2, w2, CiMethod::None));
            }
            let (lo, hi) =
                bootstrap_moment_fit(outputs, reference, config.bootstrap_resamples, seeds.bootstrap)?;
            Ok((w2, lo, hi, CiMethod::ResampleBootstrap))
        }
        W2Method::Sliced => {
            let mut rng = chain_rng(seeds.slices, 0, Lane::Slices);
            let w2 = w2_sliced(outputs, reference, config.n_slices, &mut rng)?.value;
            Ok((w2, w2, w2, CiMethod::None))
        }
    }
}

/// Theorem selection for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub theorem: TheoremKind,
    /// Strong-log-concavity constant for the first bound.
    pub m: Option<f64>,
    /// Semi-log-concavity constant (0 for the log-concave targets handled
    /// here).
    pub b: f64,
    /// Perturbation magnitude constant paired with `b`.
    #[serde(rename = "M")]
    pub big_m: f64,
}

/// Strong-log-concavity constant for targets where it is exact: product
/// Gaussians (`m = 1/σ²_max`), single-component mixtures, and Gaussian
/// smoothings of those (smoothing by `N(0, τ²·I)` maps `m ↦ 1/(1/m + τ²)`).
fn slc_constant(target: &TargetSpec) -> Option<f64> {
    match target {
        TargetSpec::Gaussian { var, .. } => {
            let max_var = var.iter().copied().fold(f64::MIN, f64::max);
            Some(1.0 / max_var)
        }
        TargetSpec::GaussianMixture { means, var, .. } if means.len() == 1 => Some(1.0 / var),
        TargetSpec::Convolution { inner, tau } => {
            slc_constant(inner).map(|m| 1.0 / (1.0 / m + tau * tau))
        }
        _ => None,
    }
}

fn is_log_concave(target: &TargetSpec) -> bool {
    match target {
        TargetSpec::Gaussian { .. } | TargetSpec::UniformBox { .. } => true,
        TargetSpec::GaussianMixture { means, .. } => means.len() == 1,
        TargetSpec::Convolution { inner, .. } => is_log_concave(inner),
        TargetSpec::SubspaceEmbedded { .. } => false,
    }
}

/// Picks the error bound applicable to a target, with its constants, when
/// they are unambiguous:
///
/// * strongly log-concave targets (Gaussians and their smoothings) get the
///   strongly-log-concave bound with the exact constant `m`;
/// * merely log-concave targets (uniform boxes and their smoothings) get the
///   semi-log-concave bound with `b = 0`, `M = 0`;
/// * multi-component mixtures and subspace-embedded targets get `None` —
///   their semi-log-concavity constants depend on geometry this library does
///   not certify, so no bound is attached.
pub fn theorem_constants(target: &TargetSpec) -> Option<TheoremInputs> {
    if let Some(m) = slc_constant(target) {
        return Some(TheoremInputs { theorem: TheoremKind::Thm1, m: Some(m), b: 0.0, big_m: 0.0 });
    }
    if is_log_concave(target) {
        return Some(TheoremInputs { theorem: TheoremKind::Thm2, m: None, b: 0.0, big_m: 0.0 });
    }
    None
}

fn run_cell(config: &ExperimentConfig, plan: &CellPlan) -> Result<CellResult> {
    let started = Instant::now();
    let seeds = CellSeeds::derive(config.seed, plan.index as u64);
    let schedule = build_schedule(&config.schedule.params_with_k0(plan.k0))?;
    let oracle = parse_oracle_spec(&plan.oracle_spec, config.target.clone())?;
    let descriptor = oracle.descriptor();
    let run = run_ddpm(&SamplerConfig {
        schedule: schedule.clone(),
        oracle: oracle.clone(),
        n_chains: config.n_chains,
        seed: seeds.run,
        record_trajectory: None,
    })?;
    let reference =
        forward_marginal_sample(&config.target, 0.0, config.n_reference, seeds.reference)?;
    let (w2, w2_ci_lower, w2_ci_upper, ci_method) =
        estimate_w2(config, &run.outputs, &reference, &seeds)?;
    let (eps_b_hat, eps_v_hat) = if config.certify_reps > 0 {
        let probes = trajectory_probes(&config.target, &schedule, seeds.certify)?;
        let mut rng = chain_rng(seeds.certify, 1, Lane::Oracle);
        let report = certify_assumption2(&oracle, &probes, config.certify_reps, &mut rng)?;
        (Some(report.eps_b_hat), Some(report.eps_v_hat))
    } else {
        (Some(oracle.declared_eps_b), oracle.declared_eps_v)
    };
    let bound = match (theorem_constants(&config.target), eps_b_hat, eps_v_hat) {
        (Some(inputs), Some(eps_b), Some(eps_v)) => Some(thm_bound(
            inputs.theorem,
            &BoundParams {
                m: inputs.m,
                b: inputs.b,
                big_m: inputs.big_m,
                t1: schedule.params.t1,
                h_max: schedule.h_max,
                eps_b,
                eps_v,
                d: config.target.dim(),
            },
        )?),
        _ => None,
    };
    Ok(CellResult {
        cell: plan.index,
        k0: plan.k0,
        t1: schedule.params.t1,
        h_max: schedule.h_max,
        d: config.target.dim(),
        oracle: descriptor,
        n_chains: config.n_chains,
        n_reference: config.n_reference,
        w2,
        w2_ci_lower,
        w2_ci_upper,
        ci_method,
        eps_b_hat,
        eps_v_hat,
        bound,
        seeds,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

/// Runs every cell of the sweep in enumeration order.
///
/// Config problems fail fast with `Err`. Once cells start computing, a
/// failing cell stops the sweep but the completed cells are kept: the record
/// comes back `Ok` with `failure` describing where and why the run stopped,
/// so partial results survive (the CLI still maps the failure to a nonzero
/// exit code).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    config.validate()?;
    let plans = config.cells()?;
    let config_digest = config.digest()?;
    let mut cells = Vec::with_capacity(plans.len());
    let mut failure = None;
    for plan in &plans {
        match run_cell(config, plan) {
            Ok(cell) => cells.push(cell),
            Err(err) => {
                failure = Some(CellFailure {
                    cell: plan.index,
                    message: err.to_string(),
                    numerical: matches!(err, Error::Numerical(_)),
                });
                break;
            }
        }
    }
    Ok(ExperimentRecord {
        schema_version: SCHEMA_VERSION,
        config_digest,
        config: config.clone(),
        cells,
        failure,
    })
}

/// Writes one CSV row per completed cell under [`CSV_HEADER`]. Floats use
/// Rust's shortest round-trip formatting, so the file is bit-faithful to the
/// record.
pub fn write_csv<W: std::io::Write>(record: &ExperimentRecord, out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for c in &record.cells {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.cell,
            c.k0,
            c.t1,
            c.h_max,
            c.d,
            c.oracle,
            c.n_chains,
            c.n_reference,
            c.w2,
            c.w2_ci_lower,
            c.w2_ci_upper,
            c.ci_method.as_str(),
            opt(c.eps_b_hat),
            opt(c.eps_v_hat),
            opt(c.bound.as_ref().map(|b| b.total)),
            c.seeds.run,
            c.wall_ms,
        )?;
    }
    Ok(())
}

/// Which step-size variable a rate is fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAxis {
    /// Fit against `h_max`; a first-order error shows slope ≈ 1.
    HMax,
    /// Fit against `√h_max`; a half-order error shows slope ≈ 1.
    SqrtHMax,
}

/// A fitted log–log convergence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub axis: RateAxis,
    /// Slope of `log(excess)` against `log(axis value)`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Points that survived the positivity filter and entered the fit.
    pub n_used: usize,
    /// Excluded points — cell indices when fitted from a record via
    /// [`fit_rate`], input positions when via [`fit_rate_points`].
    pub dropped: Vec<usize>,
    /// Cell index of the subtracted floor when fitted from a record.
    pub floor: Option<usize>,
}

/// Fits a log–log line through `(axis(h), y)` points, dropping non-positive
/// `y` (a sampling-noise floor can push small excesses at or below zero).
/// Needs at least 3 surviving points spanning more than one step size.
pub fn fit_rate_points(points: &[(f64, f64)], axis: RateAxis) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::validation(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = Vec::new();
    for (i, &(h, y)) in points.iter().enumerate() {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::validation(format!(
                "rate fit needs positive finite step sizes, got {h} at point {i}"
            )));
        }
        if y > 0.0 && y.is_finite() {
            xs.push(match axis {
                RateAxis::HMax => h,
                RateAxis::SqrtHMax => h.sqrt(),
            });
            ys.push(y);
        } else {
            dropped.push(i);
        }
    }
    if xs.len() < 3 {
        return Err(Error::validation(format!(
            "only {} of {} points have positive excess; rate fit needs at least 3",
            xs.len(),
            points.len()
        )));
    }
    let x_min = xs.iter().copied().fold(f64::MAX, f64::min);
    let x_max = xs.iter().copied().fold(f64::MIN, f64::max);
    if !(x_max > x_min) {
        return Err(Error::validation("rate fit needs at least two distinct step sizes"));
    }
    let fit = fit_loglog(&xs, &ys)?;
    Ok(RateFit {
        axis,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        n_used: xs.len(),
        dropped,
        floor: None,
    })
}

/// Fits the convergence order of a `k0` sweep record.
///
/// The finest grid (smallest `h_max`) serves as the floor: its W₂ carries the
/// resolution-independent error components (initialization, sampling noise,
/// terminal smoothing), so the *excess* `w2 − w2_floor` of every coarser cell
/// isolates the h-dependent part. Cells whose excess is non-positive are
/// dropped (reported in the fit); at least 3 must survive. All cells must
/// share one oracle and have pairwise distinct step sizes.
pub fn fit_rate(record: &ExperimentRecord, axis: RateAxis) -> Result<RateFit> {
    let cells = &record.cells;
    if cells.len() < 4 {
        return Err(Error::validation(format!(
            "rate fit needs at least 4 cells (a floor plus 3 points), got {}",
            cells.len()
        )));
    }
    if cells.iter().any(|c| c.oracle != cells[0].oracle) {
        return Err(Error::validation(
            "rate fit needs a pure resolution sweep; found differing oracles across cells",
        ));
    }
    let mut floor = 0;
    for (i, c) in cells.iter().enumerate() {
        for other in &cells[i + 1..] {
            if other.h_max == c.h_max {
                return Err(Error::validation(format!(
                    "cells {} and {} share h_max = {}; rate fit needs distinct step sizes",
                    c.cell, other.cell, c.h_max
                )));
            }
        }
        if c.h_max < cells[floor].h_max {
            floor = i;
        }
    }
    let floor_w2 = cells[floor].w2;
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        if i != floor {
            points.push((c.h_max, c.w2 - floor_w2));
            ids.push(c.cell);
        }
    }
    let mut fit = fit_rate_points(&points, axis)?;
    fit.dropped = fit.dropped.iter().map(|&p| ids[p]).collect();
    fit.floor = Some(cells[floor].cell);
    Ok(fit)
}

/// Ordering audit of a noise-level sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    /// True when no adjacent pair decreases.
    pub ordered: bool,
    /// Adjacent decreases whose confidence intervals overlap — consistent
    /// with sampling noise, flagged but not damning.
    pub soft: Vec<(usize, usize)>,
    /// Adjacent decreases with disjoint confidence intervals.
    pub hard: Vec<(usize, usize)>,
}

/// Checks that W₂ does not decrease along the record's cell order; intended
/// for sweeps that increase the oracle noise level at fixed resolution (all
/// cells must share one grid). Violations are split by whether the two
/// cells' confidence intervals overlap.
pub fn check_monotone(record: &ExperimentRecord) -> Result<MonotoneReport> {
    let cells = &record.cells;
    if cells.len() < 2 {
        return Err(Error::validation("monotonicity check needs at least 2 cells"));
    }
    if cells.iter().any(|c| c.k0 != cells[0].k0) {
        return Err(Error::validation(
            "monotonicity check compares noise levels at fixed resolution; \
             found differing k0 across cells",
        ));
    }
    let mut soft = Vec::new();
    let mut hard = Vec::new();
    for pair in cells.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.w2 < prev.w2 {
            if next.w2_ci_upper >= prev.w2_ci_lower {
                soft.push((prev.cell, next.cell));
            } else {
                hard.push((prev.cell, next.cell));
            }
        }
    }
    Ok(MonotoneReport { ordered: soft.is_empty() && hard.is_empty(), soft, hard })
}

/// One resolution in a rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub k0: usize,
    pub h_max: f64,
    /// The study's raw measurement at this resolution (before any floor
    /// subtraction).
    pub value: f64,
}

/// Outcome of a coupled-run rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub points: Vec<RatePoint>,
    /// The fine-grid floor measurement, when the study uses one.
    pub floor: Option<RatePoint>,
    pub fit: RateFit,
}

/// Measures the discretization error's convergence order with coupled grids.
///
/// All resolutions in `k0_list`, plus a much finer `floor_k0`, run as one
/// anchored family: every grid sees the same initialization and the same
/// Brownian increments, so their moment-fitted W₂-to-target values share the
/// sampling noise and the floor subtraction cancels it along with the
/// resolution-independent error. The excess is fitted against `h_max`; with
/// an exact oracle its slope sits near 1.
///
/// The measurement is the Gaussian-moment W₂ between a grid's endpoints and
/// the target's mean and covariance diagonal, so the study is meaningful for
/// targets with diagonal covariance.
pub fn discretization_rate_study(
    target: &TargetSpec,
    schedule: &ScheduleInput,
    k0_list: &[usize],
    floor_k0: usize,
    n_chains: usize,
    seed: u64,
) -> Result<RateStudy> {
    if k0_list.len() < 3 {
        return Err(Error::validation(format!(
            "discretization study needs at least 3 resolutions, got {}",
            k0_list.len()
        )));
    }
    if k0_list.iter().any(|&k| k >= floor_k0) {
        return Err(Error::validation(format!(
            "floor grid (k0 = {floor_k0}) must be strictly finer than every studied resolution"
        )));
    }
    let mut schedules = Vec::with_capacity(k0_list.len() + 1);
    for &k0 in k0_list {
        schedules.push(build_schedule(&schedule.params_with_k0(k0))?);
    }
    schedules.push(build_schedule(&schedule.params_with_k0(floor_k0))?);
    let oracle = ScoreOracle::exact(target.clone())?;
    let outputs = run_anchored_family(&oracle, &schedules, n_chains, seed)?;
    let target_mean = target.mean_vector();
    let d = target.dim();
    let cov = target.covariance();
    let target_var: Vec<f64> = (0..d).map(|j| cov[j * d + j]).collect();
    let values: Vec<f64> = outputs
        .iter()
        .map(|m| w2_gaussian(&m.mean_vector(), &m.variance_vector(), &target_mean, &target_var))
        .collect::<Result<_>>()?;
    let floor_value = *values.last().expect("family has a floor grid");
    let points: Vec<RatePoint> = k0_list
        .iter()
        .zip(&schedules)
        .zip(&values)
        .map(|((&k0, s), &value)| RatePoint { k0, h_max: s.h_max, value })
        .collect();
    let excess: Vec<(f64, f64)> =
        points.iter().map(|p| (p.h_max, p.value - floor_value)).collect();
    let fit = fit_rate_points(&excess, RateAxis::HMax)?;
    Ok(RateStudy {
        points,
        floor: Some(RatePoint {
            k0: floor_k0,
            h_max: schedules.last().expect("floor grid").h_max,
            value: floor_value,
        }),
        fit,
    })
}

/// Measures how the oracle-noise transport error scales with the step size.
///
/// At every resolution an exact-score chain and a perturbed-oracle chain run
/// on shared initialization and Brownian increments; the RMS endpoint
/// deviation between them is exactly the displacement the perturbation
/// injects. No floor is needed — the deviation vanishes as `h → 0` by
/// construction. Its log–log slope against `h_max` sits near ½ for centered
/// noise (the per-step kicks average out like a random walk).
pub fn noise_excess_study(
    target: &TargetSpec,
    schedule: &ScheduleInput,
    oracle_spec: &str,
    k0_list: &[usize],
    n_chains: usize,
    seed: u64,
) -> Result<RateStudy> {
    if k0_list.len() < 3 {
        return Err(Error::validation(format!(
            "noise study needs at least 3 resolutions, got {}",
            k0_list.len()
        )));
    }
    let oracle = parse_oracle_spec(oracle_spec, target.clone())?;
    if matches!(oracle.perturbation, Perturbation::None) {
        return Err(Error::validation(
            "noise study needs a perturbed oracle; the exact oracle has zero deviation",
        ));
    }
    let mut points = Vec::with_capacity(k0_list.len());
    for &k0 in k0_list {
        let sched = build_schedule(&schedule.params_with_k0(k0))?;
        let paired = run_paired(&sched, &oracle, n_chains, seed)?;
        points.push(RatePoint { k0, h_max: sched.h_max, value: paired.rms_deviation });
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h_max, p.value)).collect();
    let fit = fit_rate_points(&pairs, RateAxis::HMax)?;
    Ok(RateStudy { points, floor: None, fit })
}
