//! Analytically tractable target distributions.
//!
//! Every verification experiment in the library needs ground truth: exact
//! smoothed scores for the oracle, exact moments for error metrics, exact
//! posterior covariances for the smoothing assumption, and exact samples for
//! reference clouds. This module provides a closed family of targets where
//! all of those are available in closed form:
//!
//! - diagonal Gaussians,
//! - Gaussian mixtures with shared isotropic component variance,
//! - centered axis-aligned uniform boxes,
//! - isometric embeddings of a lower-dimensional target into ℝ^D, and
//! - Gaussian convolutions of a compactly supported target.
//!
//! The last two are closure operations, so targets compose: a box embedded in
//! a subspace, a Gaussian-smoothed box, etc. The smoothed marginal of a
//! target at time t is the law of α_t·X + β_t·ξ with α_t = e^{−t} and
//! β_t = √(1−α_t²); the same algebra with a free (α, β) pair underlies both
//! the score oracle and the posterior-variance identities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    kahan_sum, log_norm_cdf_diff, log_norm_pdf, log_sum_exp, norm_cdf_diff,
    norm_pdf, sq_norm, sym_max_eigenvalue, LN_SQRT_2PI,
};
use crate::phi::PhiFunction;
use crate::rng::{chain_rng, Lane};

/// Tolerance for mixture weights summing to one.
const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Tolerance for orthonormality of embedding columns.
const ORTHO_TOL: f64 = 1e-10;
/// Past this many standard deviations, the box score and the truncated
/// posterior moments switch to asymptotic tail branches.
const TAIL_Z: f64 = 8.0;

/// A target distribution with closed-form scores, moments, posterior
/// covariances, and exact sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// N(mean, diag(var)).
    Gaussian {
        /// Mean vector μ ∈ ℝ^D.
        mean: Vec<f64>,
        /// Per-coordinate variances s² (all positive).
        var: Vec<f64>,
    },
    /// Σ_i weights[i]·N(means[i], var·I).
    GaussianMixture {
        /// Positive component weights summing to 1.
        weights: Vec<f64>,
        /// Component mean vectors, all of the same dimension.
        means: Vec<Vec<f64>>,
        /// Shared isotropic component variance s² > 0.
        var: f64,
    },
    /// Uniform on the centered box Π_j [−half_widths[j], half_widths[j]].
    UniformBox {
        /// Per-coordinate half-widths d_j > 0.
        half_widths: Vec<f64>,
    },
    /// X = U·X_inner + offset with U an isometric embedding ℝ^d → ℝ^D.
    SubspaceEmbedded {
        /// The d-dimensional inner target.
        inner: Box<TargetSpec>,
        /// Orthonormal columns of U: `basis[j]` is the j-th column, length D.
        basis: Vec<Vec<f64>>,
        /// Translation in ambient space, length D.
        offset: Vec<f64>,
    },
    /// X = X_inner + τ·ζ with ζ standard Gaussian; inner must be compactly
    /// supported.
    Convolution {
        /// The compactly supported inner target.
        inner: Box<TargetSpec>,
        /// Gaussian smoothing level τ > 0.
        tau: f64,
    },
}

/// The forward-smoothed marginal of a target at time t ≥ 0: the law of
/// α_t·X + β_t·ξ with α_t = e^{−t}, β_t = √(1−α_t²).
#[derive(Clone, Debug)]
pub struct SmoothedMarginal<'a> {
    /// The underlying target.
    pub target: &'a TargetSpec,
    /// Diffusion time.
    pub t: f64,
    /// Signal coefficient e^{−t}.
    pub alpha: f64,
    /// Noise level √(1−e^{−2t}).
    pub beta: f64,
}

impl<'a> SmoothedMarginal<'a> {
    /// The smoothed marginal at time t (t ≥ 0; t = 0 is the target itself).
    pub fn new(target: &'a TargetSpec, t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::validation("smoothed marginal: t must be >= 0"));
        }
        let alpha = (-t).exp();
        // 1 − e^{−2t} through expm1 so that beta is accurate for small t.
        let beta = (-(-2.0 * t).exp_m1()).sqrt();
        Ok(Self { target, t, alpha, beta })
    }

    /// Score ∇ log π(t, ·) at x.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.target.smoothed_score(self.alpha, self.beta, x)
    }

    /// Log-density log π(t, x).
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.target.smoothed_log_density(self.alpha, self.beta, x)
    }
}

/// Monte Carlo posterior-covariance estimate with its uncertainty, produced
/// by self-normalized importance sampling from the prior.
#[derive(Clone, Debug)]
pub struct CondVarEstimate {
    /// Pooled posterior covariance estimate, row-major D×D.
    pub cov: Vec<f64>,
    /// Largest eigenvalue of the pooled covariance.
    pub lambda_max: f64,
    /// Standard error of `lambda_max` from batch means.
    pub se: f64,
    /// Effective sample size of the importance weights.
    pub ess: f64,
}

impl TargetSpec {
    /// Ambient dimension D.
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::GaussianMixture { means, .. } => {
                means.first().map_or(0, Vec::len)
            }
            TargetSpec::UniformBox { half_widths } => half_widths.len(),
            TargetSpec::SubspaceEmbedded { offset, .. } => offset.len(),
            TargetSpec::Convolution { inner, .. } => inner.dim(),
        }
    }

    /// Validate all parameters, recursively for composed targets.
    pub fn validate(&self) -> Result<()> {
        let finite_vec = |v: &[f64], what: &str| -> Result<()> {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::validation(format!("target: {what} must be finite")))
            }
        };
        match self {
            TargetSpec::Gaussian { mean, var } => {
                if mean.is_empty() || mean.len() != var.len() {
                    return Err(Error::validation(
                        "gaussian: mean and var must be nonempty and equal length",
                    ));
                }
                finite_vec(mean, "mean")?;
                finite_vec(var, "var")?;
                if var.iter().any(|&v| v <= 0.0) {
                    return Err(Error::validation("gaussian: variances must be positive"));
                }
            }
            TargetSpec::GaussianMixture { weights, means, var } => {
                if weights.is_empty() || weights.len() != means.len() {
                    return Err(Error::validation(
                        "mixture: weights and means must be nonempty and equal length",
                    ));
                }
                if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                    return Err(Error::validation("mixture: weights must be positive"));
                }
                let total = kahan_sum(weights.iter().cloned());
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::validation(format!(
                        "mixture: weights sum to {total}, expected 1"
                    )));
                }
                let d = means[0].len();
                if d == 0 || means.iter().any(|m| m.len() != d) {
                    return Err(Error::validation(
                        "mixture: component means must be nonempty and equal length",
                    ));
                }
                for m in means {
                    finite_vec(m, "component mean")?;
                }
                if !(*var > 0.0) || !var.is_finite() {
                    return Err(Error::validation("mixture: var must be positive"));
                }
            }
            TargetSpec::UniformBox { half_widths } => {
                if half_widths.is_empty() {
                    return Err(Error::validation("box: half_widths must be nonempty"));
                }
                finite_vec(half_widths, "half_widths")?;
                if half_widths.iter().any(|&d| d <= 0.0) {
                    return Err(Error::validation("box: half-widths must be positive"));
                }
            }
            TargetSpec::SubspaceEmbedded { inner, basis, offset } => {
                inner.validate()?;
                let d = inner.dim();
                let big_d = offset.len();
                finite_vec(offset, "offset")?;
                if basis.len() != d {
                    return Err(Error::validation(
                        "embedding: need one basis column per inner coordinate",
                    ));
                }
                if d >= big_d {
                    return Err(Error::validation(
                        "embedding: inner dimension must be smaller than ambient",
                    ));
                }
                for col in basis {
                    if col.len() != big_d {
                        return Err(Error::validation(
                            "embedding: basis columns must have ambient length",
                        ));
                    }
                    finite_vec(col, "basis column")?;
                }
                for i in 0..d {
                    for j in i..d {
                        let dot = kahan_sum(
                            basis[i].iter().zip(&basis[j]).map(|(&a, &b)| a * b),
                        );
                        let expect = if i == j { 1.0 } else { 0.0 };
                        if (dot - expect).abs() > ORTHO_TOL {
                            return Err(Error::validation(format!(
                                "embedding: columns {i},{j} not orthonormal \
                                 (inner product {dot})"
                            )));
                        }
                    }
                }
            }
            TargetSpec::Convolution { inner, tau } => {
                inner.validate()?;
                if !(*tau > 0.0) || !tau.is_finite() {
                    return Err(Error::validation("convolution: tau must be positive"));
                }
                if inner.half_diameter().is_none() {
                    return Err(Error::validation(
                        "convolution: inner target must be compactly supported",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Half-diameter 𝔇_X of the support, when it is bounded.
    pub fn half_diameter(&self) -> Option<f64> {
        match self {
            TargetSpec::UniformBox { half_widths } => {
                Some(sq_norm(half_widths).sqrt())
            }
            // Isometries preserve diameters.
            TargetSpec::SubspaceEmbedded { inner, .. } => inner.half_diameter(),
            _ => None,
        }
    }

    /// Mean vector E[X].
    pub fn mean_vector(&self) -> Vec<f64> {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.clone(),
            TargetSpec::GaussianMixture { weights, means, .. } => {
                let d = self.dim();
                let mut out = vec![0.0; d];
                for (w, m) in weights.iter().zip(means) {
                    for j in 0..d {
                        out[j] += w * m[j];
                    }
                }
                out
            }
            TargetSpec::UniformBox { half_widths } => vec![0.0; half_widths.len()],
            TargetSpec::SubspaceEmbedded { inner, basis, offset } => {
                let mi = inner.mean_vector();
                let mut out = offset.clone();
                for (j, col) in basis.iter().enumerate() {
                    for (o, &c) in out.iter_mut().zip(col) {
                        *o += c * mi[j];
                    }
                }
                out
            }
            TargetSpec::Convolution { inner, .. } => inner.mean_vector(),
        }
    }

    /// Covariance matrix, row-major D×D.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        match self {
            TargetSpec::Gaussian { var, .. } => diag_matrix(var),
            TargetSpec::GaussianMixture { weights, means, var } => {
                let mbar = self.mean_vector();
                let mut cov = diag_matrix(&vec![*var; d]);
                for (w, m) in weights.iter().zip(means) {
                    for r in 0..d {
                        for c in 0..d {
                            cov[r * d + c] += w * (m[r] - mbar[r]) * (m[c] - mbar[c]);
                        }
                    }
                }
                cov
            }
            TargetSpec::UniformBox { half_widths } => {
                let v: Vec<f64> = half_widths.iter().map(|&h| h * h / 3.0).collect();
                diag_matrix(&v)
            }
            TargetSpec::SubspaceEmbedded { inner, basis, .. } => {
                // U C_in Uᵀ.
                let di = inner.dim();
                let ci = inner.covariance();
                let mut cov = vec![0.0; d * d];
                for p in 0..di {
                    for q in 0..di {
                        let cpq = ci[p * di + q];
                        if cpq == 0.0 {
                            continue;
                        }
                        for r in 0..d {
                            let urp = basis[p][r];
                            if urp == 0.0 {
                                continue;
                            }
                            for c in 0..d {
                                cov[r * d + c] += urp * cpq * basis[q][c];
                            }
                        }
                    }
                }
                cov
            }
            TargetSpec::Convolution { inner, tau } => {
                let mut cov = inner.covariance();
                for j in 0..d {
                    cov[j * d + j] += tau * tau;
                }
                cov
            }
        }
    }

    /// Per-coordinate marginal variances (the covariance diagonal).
    pub fn marginal_variance_vector(&self) -> Vec<f64> {
        let d = self.dim();
        let cov = self.covariance();
        (0..d).map(|j| cov[j * d + j]).collect()
    }

    /// Second moment E‖X‖² = tr(Cov) + ‖E X‖².
    pub fn second_moment(&self) -> f64 {
        let d = self.dim();
        let cov = self.covariance();
        let trace = kahan_sum((0..d).map(|j| cov[j * d + j]));
        trace + sq_norm(&self.mean_vector())
    }

    /// The second-moment normalizer m̄₂ = max(1, E‖X‖²/D) used to rescale
    /// discretization bounds when E‖X‖² exceeds D.
    pub fn m_bar_2(&self) -> f64 {
        (self.second_moment() / self.dim() as f64).max(1.0)
    }

    /// Draw one sample into `out` (length D) using the caller's RNG stream.
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            TargetSpec::Gaussian { mean, var } => {
                for ((o, &m), &v) in out.iter_mut().zip(mean).zip(var) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + v.sqrt() * z;
                }
            }
            TargetSpec::GaussianMixture { weights, means, var } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = means.len() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let s = var.sqrt();
                for (o, &m) in out.iter_mut().zip(&means[pick]) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + s * z;
                }
            }
            TargetSpec::UniformBox { half_widths } => {
                for (o, &h) in out.iter_mut().zip(half_widths) {
                    let u: f64 = rng.random();
                    *o = (2.0 * u - 1.0) * h;
                }
            }
            TargetSpec::SubspaceEmbedded { inner, basis, offset } => {
                let mut p = vec![0.0; inner.dim()];
                inner.sample_into(rng, &mut p);
                out.copy_from_slice(offset);
                for (j, col) in basis.iter().enumerate() {
                    for (o, &c) in out.iter_mut().zip(col) {
                        *o += c * p[j];
                    }
                }
            }
            TargetSpec::Convolution { inner, tau } => {
                inner.sample_into(rng, out);
                for o in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *o += tau * z;
                }
            }
        }
    }

    /// n i.i.d. draws, row-major n×D; bitwise deterministic given the seed
    /// (each row uses its own RNG stream, so the result does not depend on
    /// evaluation order).
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::validation("sample: n must be at least 1"));
        }
        let d = self.dim();
        let mut out = vec![0.0; n * d];
        for (i, row) in out.chunks_exact_mut(d).enumerate() {
            let mut rng = chain_rng(seed, i as u64, Lane::Target);
            self.sample_into(&mut rng, row);
        }
        Ok(out)
    }

    /// Score of the smoothed marginal: ∇_x log density of αX + βξ at x.
    ///
    /// Requires α > 0 and β > 0, except that β = 0 is accepted for targets
    /// with smooth ambient densities (Gaussian, mixture, convolution).
    pub fn smoothed_score(&self, alpha: f64, beta: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.smoothed_score_into(alpha, beta, x, &mut out)?;
        Ok(out)
    }

    /// As [`smoothed_score`](Self::smoothed_score), writing into `out`
    /// (allocation-free for the non-composed kinds; this is the sampler's
    /// hot path).
    pub fn smoothed_score_into(
        &self,
        alpha: f64,
        beta: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        if x.len() != self.dim() || out.len() != x.len() {
            return Err(Error::validation("smoothed_score: dimension mismatch"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("smoothed_score: non-finite input"));
        }
        if !(alpha > 0.0) || !alpha.is_finite() || !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::validation(
                "smoothed_score: need alpha > 0 and beta >= 0",
            ));
        }
        if beta == 0.0 && !self.has_smooth_density() {
            return Err(Error::validation(
                "smoothed_score: beta = 0 requires a smooth target density",
            ));
        }
        match self {
            TargetSpec::Gaussian { mean, var } => {
                for j in 0..x.len() {
                    let v = alpha * alpha * var[j] + beta * beta;
                    out[j] = -(x[j] - alpha * mean[j]) / v;
                }
            }
            TargetSpec::GaussianMixture { weights, means, var } => {
                let v = alpha * alpha * var + beta * beta;
                let resp = mixture_responsibilities(weights, means, alpha, v, x);
                for j in 0..x.len() {
                    let mbar: f64 =
                        resp.iter().zip(means).map(|(r, m)| r * m[j]).sum();
                    out[j] = -(x[j] - alpha * mbar) / v;
                }
            }
            TargetSpec::UniformBox { half_widths } => {
                for j in 0..x.len() {
                    out[j] = box_edge_score(x[j], alpha * half_widths[j], beta);
                }
            }
            TargetSpec::SubspaceEmbedded { inner, basis, offset } => {
                let d = x.len();
                let di = inner.dim();
                // r = x − α·offset; p = Uᵀr; score = U s_in(p) − (r − Up)/β².
                let r: Vec<f64> = (0..d).map(|j| x[j] - alpha * offset[j]).collect();
                let mut p = vec![0.0; di];
                for (j, col) in basis.iter().enumerate() {
                    p[j] = kahan_sum(col.iter().zip(&r).map(|(&c, &rv)| c * rv));
                }
                let mut s_in = vec![0.0; di];
                inner.smoothed_score_into(alpha, beta, &p, &mut s_in)?;
                let b2 = beta * beta;
                for j in 0..d {
                    let up_j: f64 =
                        basis.iter().enumerate().map(|(k, col)| col[j] * p[k]).sum();
                    let s_par: f64 = basis
                        .iter()
                        .enumerate()
                        .map(|(k, col)| col[j] * s_in[k])
                        .sum();
                    out[j] = s_par - (r[j] - up_j) / b2;
                }
            }
            TargetSpec::Convolution { inner, tau } => {
                // αX + βξ = αW + √(α²τ²+β²)·ξ' in law.
                let beta_eff = (alpha * alpha * tau * tau + beta * beta).sqrt();
                inner.smoothed_score_into(alpha, beta_eff, x, out)?;
            }
        }
        Ok(())
    }

    /// Log-density of the smoothed marginal at x (same domain rules as
    /// [`smoothed_score`](Self::smoothed_score); β = 0 additionally requires
    /// a Gaussian/mixture/convolution target).
    pub fn smoothed_log_density(&self, alpha: f64, beta: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::validation("smoothed_log_density: dimension mismatch"));
        }
        if !(alpha > 0.0) || !(beta >= 0.0) {
            return Err(Error::validation(
                "smoothed_log_density: need alpha > 0 and beta >= 0",
            ));
        }
        if beta == 0.0 && !self.has_smooth_density() {
            return Err(Error::validation(
                "smoothed_log_density: beta = 0 requires a smooth target density",
            ));
        }
        Ok(match self {
            TargetSpec::Gaussian { mean, var } => kahan_sum((0..x.len()).map(|j| {
                let v = alpha * alpha * var[j] + beta * beta;
                let z = x[j] - alpha * mean[j];
                -0.5 * z * z / v - 0.5 * v.ln() - LN_SQRT_2PI
            })),
            TargetSpec::GaussianMixture { weights, means, var } => {
                let v = alpha * alpha * var + beta * beta;
                let d = x.len() as f64;
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(means)
                    .map(|(w, m)| {
                        let sq = kahan_sum(
                            x.iter().zip(m).map(|(&xj, &mj)| {
                                let z = xj - alpha * mj;
                                z * z
                            }),
                        );
                        w.ln() - 0.5 * sq / v
                    })
                    .collect();
                log_sum_exp(&terms) - d * (0.5 * v.ln() + LN_SQRT_2PI)
            }
            TargetSpec::UniformBox { half_widths } => {
                kahan_sum(x.iter().zip(half_widths).map(|(&xj, &dj)| {
                    let ad = alpha * dj;
                    let hi = (xj + ad) / beta;
                    let lo = (xj - ad) / beta;
                    log_norm_cdf_diff(hi, lo) - (2.0 * ad).ln()
                }))
            }
            TargetSpec::SubspaceEmbedded { inner, basis, offset } => {
                let d = x.len();
                let di = inner.dim();
                let r: Vec<f64> = (0..d).map(|j| x[j] - alpha * offset[j]).collect();
                let mut p = vec![0.0; di];
                for (j, col) in basis.iter().enumerate() {
                    p[j] = kahan_sum(col.iter().zip(&r).map(|(&c, &rv)| c * rv));
                }
                let ortho_sq = kahan_sum((0..d).map(|j| {
                    let up_j: f64 =
                        basis.iter().enumerate().map(|(k, col)| col[j] * p[k]).sum();
                    let o = r[j] - up_j;
                    o * o
                }));
                let b2 = beta * beta;
                inner.smoothed_log_density(alpha, beta, &p)?
                    - 0.5 * ortho_sq / b2
                    - (d - di) as f64 * (0.5 * b2.ln() + LN_SQRT_2PI)
            }
            TargetSpec::Convolution { inner, tau } => {
                let beta_eff = (alpha * alpha * tau * tau + beta * beta).sqrt();
                inner.smoothed_log_density(alpha, beta_eff, x)?
            }
        })
    }

    /// Score of the forward marginal at time t: ∇ log π(t, x) with
    /// α_t = e^{−t}, β_t = √(1−e^{−2t}).
    ///
    /// t = 0 is allowed only for targets with smooth ambient densities.
    pub fn exact_score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let sm = SmoothedMarginal::new(self, t)?;
        sm.score(x)
    }

    /// Whether the ambient density exists and is smooth at β = 0 (so scores
    /// at t = 0 are well defined).
    fn has_smooth_density(&self) -> bool {
        matches!(
            self,
            TargetSpec::Gaussian { .. }
                | TargetSpec::GaussianMixture { .. }
                | TargetSpec::Convolution { .. }
        )
    }

    /// Exact posterior covariance Var(X | X + σξ = y), row-major D×D.
    ///
    /// Closed forms: Gaussian (independent per-coordinate shrinkage),
    /// mixture (within-component variance plus responsibility-weighted mean
    /// spread), uniform box (truncated-normal variances), and the two
    /// closure kinds by reduction to their inner target.
    pub fn conditional_variance(&self, sigma: f64, y: &[f64]) -> Result<Vec<f64>> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::validation("conditional_variance: sigma must be positive"));
        }
        if y.len() != self.dim() {
            return Err(Error::validation("conditional_variance: dimension mismatch"));
        }
        let d = self.dim();
        let s2 = sigma * sigma;
        Ok(match self {
            TargetSpec::Gaussian { var, .. } => {
                let v: Vec<f64> = var.iter().map(|&s| s * s2 / (s + s2)).collect();
                diag_matrix(&v)
            }
            TargetSpec::GaussianMixture { weights, means, var } => {
                // Given the component, the posterior is Gaussian with
                // variance vw = s²σ²/(s²+σ²) and mean m_i; mixing over the
                // posterior component weights adds the spread of the m_i.
                let v_total = var + s2;
                let vw = var * s2 / v_total;
                let resp = mixture_responsibilities(weights, means, 1.0, v_total, y);
                let post_means: Vec<Vec<f64>> = means
                    .iter()
                    .map(|m| {
                        (0..d)
                            .map(|j| (s2 * m[j] + var * y[j]) / v_total)
                            .collect()
                    })
                    .collect();
                let mut mbar = vec![0.0; d];
                for (r, pm) in resp.iter().zip(&post_means) {
                    for j in 0..d {
                        mbar[j] += r * pm[j];
                    }
                }
                let mut cov = diag_matrix(&vec![vw; d]);
                for (r, pm) in resp.iter().zip(&post_means) {
                    for a in 0..d {
                        for b in 0..d {
                            cov[a * d + b] += r * (pm[a] - mbar[a]) * (pm[b] - mbar[b]);
                        }
                    }
                }
                cov
            }
            TargetSpec::UniformBox { half_widths } => {
                let v: Vec<f64> = half_widths
                    .iter()
                    .zip(y)
                    .map(|(&h, &yj)| truncated_normal_variance(yj, sigma, h))
                    .collect();
                diag_matrix(&v)
            }
            TargetSpec::SubspaceEmbedded { inner, basis, offset } => {
                // Only the in-subspace component of the observation carries
                // information; orthogonal components are deterministic.
                let di = inner.dim();
                let mut p = vec![0.0; di];
                for (j, col) in basis.iter().enumerate() {
                    p[j] = kahan_sum(
                        col.iter().zip(y).zip(offset).map(|((&c, &yv), &ov)| c * (yv - ov)),
                    );
                }
                let vi = inner.conditional_variance(sigma, &p)?;
                let mut cov = vec![0.0; d * d];
                for a in 0..di {
                    for b in 0..di {
                        let vab = vi[a * di + b];
                        if vab == 0.0 {
                            continue;
                        }
                        for r in 0..d {
                            for c in 0..d {
                                cov[r * d + c] += basis[a][r] * vab * basis[b][c];
                            }
                        }
                    }
                }
                cov
            }
            TargetSpec::Convolution { inner, tau } => {
                // Condition first on the inner variable W: X = W + τζ gives
                // a Gaussian shrinkage term, and the posterior of W sees
                // noise level √(τ²+σ²).
                let t2 = tau * tau;
                let v_total = t2 + s2;
                let shrink = t2 * s2 / v_total;
                let w_factor = (s2 / v_total) * (s2 / v_total);
                let vi = inner.conditional_variance(v_total.sqrt(), y)?;
                let mut cov = vec![0.0; d * d];
                for a in 0..d {
                    for b in 0..d {
                        cov[a * d + b] = w_factor * vi[a * d + b];
                        if a == b {
                            cov[a * d + b] += shrink;
                        }
                    }
                }
                cov
            }
        })
    }

    /// Largest eigenvalue of the exact posterior covariance.
    pub fn conditional_variance_lambda_max(&self, sigma: f64, y: &[f64]) -> Result<f64> {
        let cov = self.conditional_variance(sigma, y)?;
        sym_max_eigenvalue(&cov, self.dim())
    }

    /// Monte Carlo posterior covariance by self-normalized importance
    /// sampling with the target as proposal: weights ∝ exp(−‖y−X‖²/(2σ²)).
    ///
    /// Serves as an independent check of both the closed forms and the φ
    /// envelopes. The standard error is estimated from 50 batch means of the
    /// largest eigenvalue.
    pub fn conditional_variance_mc(
        &self,
        sigma: f64,
        y: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<CondVarEstimate> {
        if !(sigma > 0.0) {
            return Err(Error::validation("conditional_variance_mc: sigma must be positive"));
        }
        let d = self.dim();
        if y.len() != d {
            return Err(Error::validation("conditional_variance_mc: dimension mismatch"));
        }
        if n < 1000 {
            return Err(Error::validation("conditional_variance_mc: need n >= 1000"));
        }
        let draws = self.sample(n, seed)?;
        let s2 = sigma * sigma;
        let log_w: Vec<f64> = draws
            .chunks_exact(d)
            .map(|x| {
                -kahan_sum(x.iter().zip(y).map(|(&xj, &yj)| {
                    let z = yj - xj;
                    z * z
                })) / (2.0 * s2)
            })
            .collect();
        let n_batches = 50.min(n / 200).max(2);
        let per_batch = n / n_batches;
        let mut batch_lambdas = Vec::with_capacity(n_batches);
        for b in 0..n_batches {
            let lo = b * per_batch;
            let hi = if b + 1 == n_batches { n } else { lo + per_batch };
            let cov = weighted_covariance(&draws[lo * d..hi * d], &log_w[lo..hi], d)?;
            batch_lambdas.push(sym_max_eigenvalue(&cov, d)?);
        }
        let cov = weighted_covariance(&draws, &log_w, d)?;
        let lambda_max = sym_max_eigenvalue(&cov, d)?;
        let bm = kahan_sum(batch_lambdas.iter().cloned()) / n_batches as f64;
        let bv = kahan_sum(batch_lambdas.iter().map(|&l| (l - bm) * (l - bm)))
            / (n_batches as f64 - 1.0);
        let se = (bv / n_batches as f64).sqrt();
        // Effective sample size of the normalized weights.
        let lmax = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w1 = kahan_sum(log_w.iter().map(|&lw| (lw - lmax).exp()));
        let w2 = kahan_sum(log_w.iter().map(|&lw| (2.0 * (lw - lmax)).exp()));
        let ess = w1 * w1 / w2;
        Ok(CondVarEstimate { cov, lambda_max, se, ess })
    }

    /// The canonical conditional-variance envelope declared for this target.
    ///
    /// Gaussians are strongly log-concave with m = 1/max variance; boxes are
    /// bounded-support; mixtures decompose as Gaussian ⋆ (bounded mean
    /// cloud); embeddings inherit the inner envelope; convolutions use the
    /// Gaussian-convolution formula around the inner envelope.
    pub fn phi(&self) -> Result<PhiFunction> {
        self.validate()?;
        Ok(match self {
            TargetSpec::Gaussian { var, .. } => {
                let vmax = var.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                PhiFunction::StronglyLogConcave { m: 1.0 / vmax }
            }
            TargetSpec::UniformBox { .. } => PhiFunction::BoundedSupport {
                d_x: self.half_diameter().expect("box support is bounded"),
            },
            TargetSpec::GaussianMixture { means, var, .. } => {
                let inv = 1.0 / var;
                PhiFunction::CompositeSlg {
                    m: inv,
                    m_upper: inv,
                    b: mean_cloud_half_diameter(means).powi(2),
                }
            }
            TargetSpec::SubspaceEmbedded { inner, .. } => inner.phi()?,
            TargetSpec::Convolution { inner, tau } => PhiFunction::GaussianConvolution {
                tau: *tau,
                inner: Box::new(inner.phi()?),
            },
        })
    }

    /// Every envelope this target is declared to satisfy, canonical first.
    ///
    /// A Gaussian-smoothed bounded target additionally admits the
    /// "strongly log-concave plus bounded" form with m = M = 1/τ²; a box
    /// additionally admits the flat semi-log-concave composite (M = 0).
    pub fn phi_envelopes(&self) -> Result<Vec<PhiFunction>> {
        let mut out = vec![self.phi()?];
        match self {
            TargetSpec::UniformBox { .. } => {
                let d_x = self.half_diameter().expect("box support is bounded");
                out.push(PhiFunction::CompositeSemiBounded { b: d_x * d_x, m_upper: 0.0 });
            }
            TargetSpec::Convolution { inner, tau } => {
                if let Some(d_x) = inner.half_diameter() {
                    let inv_t2 = 1.0 / (tau * tau);
                    out.push(PhiFunction::SlcPlusBounded {
                        m: inv_t2,
                        m_upper: inv_t2,
                        d_x,
                    });
                }
            }
            _ => {}
        }
        Ok(out)
    }
}

/// Row-major diagonal matrix from a vector.
fn diag_matrix(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d * d];
    for j in 0..d {
        out[j * d + j] = v[j];
    }
    out
}

/// Posterior component probabilities of a mixture observation: given
/// x = α·μ_pick + √v·noise, returns P(pick = i | x) computed in log space.
fn mixture_responsibilities(
    weights: &[f64],
    means: &[Vec<f64>],
    alpha: f64,
    v: f64,
    x: &[f64],
) -> Vec<f64> {
    let logs: Vec<f64> = weights
        .iter()
        .zip(means)
        .map(|(w, m)| {
            let sq = kahan_sum(x.iter().zip(m).map(|(&xj, &mj)| {
                let z = xj - alpha * mj;
                z * z
            }));
            w.ln() - 0.5 * sq / v
        })
        .collect();
    let lz = log_sum_exp(&logs);
    logs.iter().map(|&l| (l - lz).exp()).collect()
}

/// Score of the smoothed uniform marginal in one coordinate: the density is
/// proportional to Φ(A) − Φ(B) with A = (x+αd)/β, B = (x−αd)/β, and the
/// score is (φ(A) − φ(B)) / (β·(Φ(A) − Φ(B))).
///
/// When both arguments sit in the same deep tail the numerator and the
/// denominator underflow together; those branches are evaluated through
/// log-space survival functions, which keeps the ratio accurate arbitrarily
/// far out.
fn box_edge_score(x: f64, alpha_d: f64, beta: f64) -> f64 {
    let a = (x + alpha_d) / beta;
    let b = (x - alpha_d) / beta;
    if b >= TAIL_Z {
        // Both edges deep in the right tail: work with survival functions.
        let lpdf_a = log_norm_pdf(a);
        let lpdf_b = log_norm_pdf(b);
        let l_delta = crate::numeric::log_sub_exp(
            crate::numeric::log_norm_sf(b),
            crate::numeric::log_norm_sf(a),
        );
        -((lpdf_b - l_delta).exp()) * (1.0 - (lpdf_a - lpdf_b).exp()) / beta
    } else if a <= -TAIL_Z {
        // Mirror case: the score is an odd function of x.
        -box_edge_score(-x, alpha_d, beta)
    } else {
        (norm_pdf(a) - norm_pdf(b)) / (beta * norm_cdf_diff(a, b))
    }
}

/// Variance of N(loc, scale²) truncated to [−half, half].
///
/// Standard two-sided truncated-normal second moment, with the density/CDF
/// ratios evaluated in log space; in the far-tail regime (observation many
/// scales beyond the support) it returns the exponential-tail limit
/// scale²/z² instead of a catastrophically cancelled difference.
fn truncated_normal_variance(loc: f64, scale: f64, half: f64) -> f64 {
    let a = (-half - loc) / scale;
    let b = (half - loc) / scale;
    // Far beyond the support the posterior piles up at the near edge with an
    // effectively exponential profile.
    const FAR: f64 = 30.0;
    if b <= -FAR {
        return (scale / b).powi(2).min(half * half);
    }
    if a >= FAR {
        return (scale / a).powi(2).min(half * half);
    }
    // Noise scale vastly wider than the box: the direct second-moment
    // formula cancels catastrophically (the answer is O((half/scale)²)
    // relative to its terms). The posterior is then a gently
    // exponentially-tilted uniform with tilt t = loc·half/scale², whose
    // variance is half²·(1/3 − t²/15 + O(t⁴)).
    if b - a <= 1e-3 {
        let t = loc * half / (scale * scale);
        return half * half * (1.0 / 3.0 - t * t / 15.0);
    }
    let lz = log_norm_cdf_diff(b, a);
    let ra = (log_norm_pdf(a) - lz).exp();
    let rb = (log_norm_pdf(b) - lz).exp();
    let diff = ra - rb;
    let var = scale * scale * (1.0 + a * ra - b * rb - diff * diff);
    // Guard rounding at the extremes; the exact value lies in [0, half²]
    // and below scale² (truncation of a Gaussian to a convex set shrinks
    // variance).
    var.max(0.0).min(half * half).min(scale * scale)
}

/// Half the diameter of a finite point cloud.
fn mean_cloud_half_diameter(means: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..means.len() {
        for j in (i + 1)..means.len() {
            let d2 = kahan_sum(
                means[i].iter().zip(&means[j]).map(|(&p, &q)| (p - q) * (p - q)),
            );
            best = best.max(d2);
        }
    }
    0.5 * best.sqrt()
}

/// Self-normalized weighted covariance of row-major draws with log weights.
fn weighted_covariance(draws: &[f64], log_w: &[f64], d: usize) -> Result<Vec<f64>> {
    let n = log_w.len();
    if draws.len() != n * d || n == 0 {
        return Err(Error::validation("weighted_covariance: shape mismatch"));
    }
    let lmax = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lmax == f64::NEG_INFINITY {
        return Err(Error::numerical("weighted_covariance: all weights zero"));
    }
    let w: Vec<f64> = log_w.iter().map(|&lw| (lw - lmax).exp()).collect();
    let total = kahan_sum(w.iter().cloned());
    let mut mean = vec![0.0; d];
    for (row, &wi) in draws.chunks_exact(d).zip(&w) {
        for j in 0..d {
            mean[j] += wi * row[j];
        }
    }
    for m in mean.iter_mut() {
        *m /= total;
    }
    let mut cov = vec![0.0; d * d];
    for (row, &wi) in draws.chunks_exact(d).zip(&w) {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..d {
                cov[a * d + b] += wi * da * (row[b] - mean[b]);
            }
        }
    }
    for c in cov.iter_mut() {
        *c /= total;
    }
    Ok(cov)
}
