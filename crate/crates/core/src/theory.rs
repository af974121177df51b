//! Closed-form theoretical quantities: the W₂ guarantee right-hand sides,
//! Gaussian backward-process moments, per-step contraction coefficients,
//! discretization-error bounds, and the recursion-unrolling inequality.
//!
//! Everything here is deterministic arithmetic. The point of the module is
//! to make every quantity the guarantees promise *computable*, so that
//! empirical runs (sampler + metrics) can be compared against theory term
//! by term rather than only in aggregate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::phi::PhiFunction;
use crate::schedule::Schedule;

/// Which guarantee a [`TheoryBound`] evaluates.
///
/// * `Thm1` — strongly-log-concave-plus-perturbation targets:
///   `a = 1/m + b`, prefactor `e^{(4/3)·b·M}`;
/// * `Thm2` — log-concave targets with bounded perturbation:
///   `a = max(b, 1)`, prefactor `e^{2·b·M + 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremKind {
    Thm1,
    Thm2,
}

/// Constants a W₂ guarantee is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Strong log-concavity constant of the base density (`Thm1` only;
    /// ignored by `Thm2`).
    pub m: Option<f64>,
    /// Perturbation range: the target density is `e^{-f - g}` with
    /// `osc(g) ≤ b·M` structure; `b` scales the perturbation.
    pub b: f64,
    /// Perturbation smoothness constant paired with `b`.
    #[serde(rename = "M")]
    pub big_m: f64,
    /// Length of the constant-step phase (the initialization error decays
    /// like `e^{−T1}`).
    pub t1: f64,
    /// Largest discretization step of the grid.
    pub h_max: f64,
    /// Uniform score-oracle bias bound `ε^b`.
    pub eps_b: f64,
    /// Uniform score-oracle noise bound `ε^v`.
    pub eps_v: f64,
    /// Ambient dimension.
    pub d: usize,
}

/// The additive pieces of a guarantee, before the common
/// `prefactor · (…) · √D` assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// `2·e^{−T1}` — initialization (forward process not fully mixed).
    pub init: f64,
    /// `7·√(6a)·h_max` — discretization.
    pub discr: f64,
    /// `8·√(6a)·ε^b` — oracle bias.
    pub bias: f64,
    /// `4·√(6a)·√h_max·ε^v` — oracle noise.
    pub var: f64,
    /// `e^{(4/3)bM}` (Thm1) or `e^{2bM+1}` (Thm2).
    pub prefactor: f64,
}

/// An itemized guarantee evaluation:
/// `total = prefactor · (init + discr + bias + var) · √D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryBound {
    pub theorem: TheoremKind,
    pub params: BoundParams,
    /// The envelope constant the theorem derives: `1/m + b` or `max(b, 1)`.
    pub a: f64,
    pub terms: BoundTerms,
    pub total: f64,
}

/// Evaluates a guarantee right-hand side, itemized.
pub fn thm_bound(theorem: TheoremKind, params: &BoundParams) -> Result<TheoryBound> {
    if !(params.b >= 0.0) || !(params.big_m >= 0.0) {
        return Err(Error::validation(format!(
            "perturbation constants must be >= 0, got b = {}, M = {}",
            params.b, params.big_m
        )));
    }
    if !(params.t1 > 0.0) {
        return Err(Error::validation(format!("t1 must be > 0, got {}", params.t1)));
    }
    if !(params.h_max > 0.0) {
        return Err(Error::validation(format!("h_max must be > 0, got {}", params.h_max)));
    }
    if !(params.eps_b >= 0.0) || !(params.eps_v >= 0.0) {
        return Err(Error::validation(format!(
            "oracle error bounds must be >= 0, got eps_b = {}, eps_v = {}",
            params.eps_b, params.eps_v
        )));
    }
    if params.d == 0 {
        return Err(Error::validation("dimension must be at least 1"));
    }
    let (a, prefactor) = match theorem {
        TheoremKind::Thm1 => {
            let m = params.m.ok_or_else(|| {
                Error::validation("Thm1 requires the strong log-concavity constant m")
            })?;
            if !(m > 0.0) {
                return Err(Error::validation(format!(
                    "Thm1 requires m > 0 (a = 1/m + b is undefined otherwise), got {m}"
                )));
            }
            (1.0 / m + params.b, ((4.0 / 3.0) * params.b * params.big_m).exp())
        }
        TheoremKind::Thm2 => {
            (params.b.max(1.0), (2.0 * params.b * params.big_m + 1.0).exp())
        }
    };
    let root_6a = (6.0 * a).sqrt();
    let terms = BoundTerms {
        init: 2.0 * (-params.t1).exp(),
        discr: 7.0 * root_6a * params.h_max,
        bias: 8.0 * root_6a * params.eps_b,
        var: 4.0 * root_6a * params.h_max.sqrt() * params.eps_v,
        prefactor,
    };
    let total = prefactor
        * (terms.init + terms.discr + terms.bias + terms.var)
        * (params.d as f64).sqrt();
    Ok(TheoryBound { theorem, params: params.clone(), a, terms, total })
}

/// Closed-form endpoint moments of the exact backward dynamics for the
/// target `N(0, (σ²+1)·I_D)` when the chain is initialized at `γ^D`
/// instead of the true forward marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBackwardMoments {
    /// `σ²`: the target is `N(0, (σ²+1)·I)`.
    pub sigma2: f64,
    /// Backward horizon.
    pub t: f64,
    /// Endpoint variance `σ²_{Ỹ_T} = (σ²+1)·[1 − σ²(σ²+1)/(σ²+e^{2T})²]`.
    pub var_yt: f64,
    /// `W₂(law(Ỹ_T), target)` per unit `√D`:
    /// `(1 − √(1 − σ²(σ²+1)/(σ²+e^{2T})²))·√(σ²+1)`.
    pub w2_to_target: f64,
    /// `W₂(law(Ỹ_T), target) / W₂(target, γ^D)` — the fraction of the
    /// initial transport distance that survives the backward flow.
    /// Approaches 1 as `σ → ∞` at fixed `T`: no data-processing-type
    /// contraction holds uniformly over targets.
    pub ratio: f64,
}

/// Forward-process variance at time `t` for a centered Gaussian target
/// with variance `s2` per coordinate: `e^{−2t}·s2 + (1 − e^{−2t})`.
pub fn gaussian_forward_variance(s2: f64, t: f64) -> f64 {
    (-2.0 * t).exp() * s2 + (-f64::exp_m1(-2.0 * t))
}

/// Evaluates [`GaussianBackwardMoments`] at `(σ², T)`.
pub fn gaussian_backward_moments(sigma2: f64, t: f64) -> Result<GaussianBackwardMoments> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::validation(format!("sigma2 must be > 0, got {sigma2}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::validation(format!("horizon must be > 0, got {t}")));
    }
    let s2p1 = sigma2 + 1.0;
    let denom = sigma2 + (2.0 * t).exp();
    let q = sigma2 * s2p1 / (denom * denom);
    let var_yt = s2p1 * (1.0 - q);
    // 1 − √(1−q) computed stably as q / (1 + √(1−q)).
    let one_minus_root = q / (1.0 + (1.0 - q).sqrt());
    let w2_to_target = one_minus_root * s2p1.sqrt();
    // W₂(target, γ^D)/√D = √(σ²+1) − 1, computed stably for small σ².
    let dist_to_gamma = sigma2 / (s2p1.sqrt() + 1.0);
    let ratio = w2_to_target / dist_to_gamma;
    Ok(GaussianBackwardMoments { sigma2, t, var_yt, w2_to_target, ratio })
}

/// Per-step contraction data for the reverse iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCoeff {
    /// `m_k = 1 + (2α²/(1−α²))·(1 − φ(β/α)/(1−α²))`; the one-step error
    /// recursion contracts by `(1 − m_k·h_k)` when the step condition
    /// holds.
    pub m_k: f64,
    /// `h·((1+α²)/(1−α²) + m_k) ≤ 2` — the step is small enough for the
    /// contraction estimate to apply.
    pub step_condition_ok: bool,
    /// `1 − m_k·h`.
    pub one_step_factor: f64,
}

/// Evaluates the one-step contraction coefficient at noise level
/// `α ∈ (0,1)` and step `h ≥ 0` under smoothness envelope `phi`.
pub fn contraction_coeff(phi: &PhiFunction, alpha: f64, h: f64) -> Result<ContractionCoeff> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation(format!(
            "alpha must lie in (0, 1) (beta = 0 is singular), got {alpha}"
        )));
    }
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::validation(format!("step must be >= 0, got {h}")));
    }
    let a2 = alpha * alpha;
    let b2 = 1.0 - a2;
    let sigma = b2.sqrt() / alpha;
    let m_k = 1.0 + (2.0 * a2 / b2) * (1.0 - phi.eval(sigma)? / b2);
    let step_condition_ok = h * ((1.0 + a2) / b2 + m_k) <= 2.0;
    Ok(ContractionCoeff { m_k, step_condition_ok, one_step_factor: 1.0 - m_k * h })
}

/// Which smoothness envelope a discretization bound is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DiscrRegime {
    /// `φ(σ) ≤ a` on every step's noise bracket.
    PhiLeqA { a: f64 },
    /// `φ(σ) ≤ ā·σ²` with `ā ≥ 1` on every step's noise bracket.
    PhiQuadratic { a_bar: f64 },
}

/// Tags which formula produced a row of [`discr_error_bounds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepBoundKind {
    /// Interior step under the constant envelope.
    PhiLeqA,
    /// Interior step under the quadratic envelope.
    PhiQuadratic,
    /// Final step (its noise bracket reaches σ = 0, where only the
    /// quadratic-envelope form stays finite).
    LastStep,
}

/// Per-step discretization-error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationErrorBound {
    pub k: usize,
    pub h_k: f64,
    /// Bias of the frozen-score discretization: `½·√(m̄₂·D)·h_k²`.
    pub b_k_bound: f64,
    /// Variance-type error: the same `h²` term plus a regime-dependent
    /// `h^{3/2}` (interior) or `√h` (final step) term.
    pub v_k_bound: f64,
    pub regime: StepBoundKind,
}

/// Evaluates the per-step bias/variance discretization bounds over a grid.
///
/// Interior steps use the regime's interior formula; the final step always
/// uses the `√h`-type last-iterate form, whose hypothesis is the quadratic
/// envelope. Under `PhiLeqA { a }` the final row is therefore evaluated
/// with `ā = max(a, 1)`; that substitution is valid whenever the envelope
/// also decays quadratically near σ = 0 with that constant, which holds
/// for every bundled target family (their conditional variances are
/// ≤ σ² for log-concave shapes, ≤ a·σ²-type for the mixtures on their
/// certified brackets).
pub fn discr_error_bounds(
    schedule: &Schedule,
    regime: DiscrRegime,
    m_bar_2: f64,
    d: usize,
) -> Result<Vec<DiscretizationErrorBound>> {
    if !(m_bar_2 >= 1.0 && m_bar_2.is_finite()) {
        return Err(Error::validation(format!(
            "m_bar_2 is max(1, E‖X‖²/D) and must be >= 1, got {m_bar_2}"
        )));
    }
    if d == 0 {
        return Err(Error::validation("dimension must be at least 1"));
    }
    match regime {
        DiscrRegime::PhiLeqA { a } => {
            if !(a > 0.0) {
                return Err(Error::validation(format!("envelope constant a must be > 0, got {a}")));
            }
        }
        DiscrRegime::PhiQuadratic { a_bar } => {
            if !(a_bar >= 1.0) {
                return Err(Error::validation(format!(
                    "quadratic envelope requires a_bar >= 1, got {a_bar}"
                )));
            }
        }
    }
    let df = d as f64;
    let n_steps = schedule.num_steps();
    let t_final = schedule.t_final;
    let bias_coeff = 0.5 * (m_bar_2 * df).sqrt();
    let noise_coeff = 4.0 * (2.0 * df).sqrt() / 3.0;
    let a_bar_last = match regime {
        DiscrRegime::PhiLeqA { a } => a.max(1.0),
        DiscrRegime::PhiQuadratic { a_bar } => a_bar,
    };
    let mut out = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let h = schedule.steps[k];
        let b_k_bound = bias_coeff * h * h;
        let (v_k_bound, regime_tag) = if k + 1 == n_steps {
            (b_k_bound + 4.5 * a_bar_last * (df * h).sqrt(), StepBoundKind::LastStep)
        } else {
            // Noise level entering step k+1.
            let gap = t_final - schedule.times[k + 1];
            let beta2 = -f64::exp_m1(-2.0 * gap);
            if !(beta2 > 0.0) {
                return Err(Error::validation(format!(
                    "grid reaches the terminal time before its last index (step {k})"
                )));
            }
            match regime {
                DiscrRegime::PhiLeqA { a } => {
                    let alpha2 = (-2.0 * gap).exp();
                    let head = (a * alpha2).max(beta2) / (beta2 * beta2);
                    (b_k_bound + noise_coeff * h.powf(1.5) * head, StepBoundKind::PhiLeqA)
                }
                DiscrRegime::PhiQuadratic { a_bar } => (
                    b_k_bound + noise_coeff * a_bar * h.powf(1.5) / beta2,
                    StepBoundKind::PhiQuadratic,
                ),
            }
        };
        out.push(DiscretizationErrorBound { k, h_k: h, b_k_bound, v_k_bound, regime: regime_tag });
    }
    Ok(out)
}

/// Unrolls the error recursion `x_{k+1}² ≤ (e^{A_k}·x_k + B_k)² + C_k²`
/// (`B_k, C_k ≥ 0`) into the closed-form bound
///
/// ```text
/// x_K ≤ e^{Ā}·x_0 + Σ_j e^{Ā−Ā_j}·B_j + √(Σ_j e^{2(Ā−Ā_j)}·C_j²),
/// ```
///
/// with `Ā_j = A_0 + … + A_j`, evaluated as a pure fold: each step scales
/// the accumulated drift bound by `e^{A_k}` and adds `B_k`, and scales the
/// accumulated squared-noise bound by `e^{2A_k}` and adds `C_k²`.
pub fn recursion_unroll(a: &[f64], b: &[f64], c: &[f64], x0: f64) -> Result<f64> {
    if a.len() != b.len() || a.len() != c.len() {
        return Err(Error::validation(format!(
            "coefficient sequences must share a length, got {}, {}, {}",
            a.len(),
            b.len(),
            c.len()
        )));
    }
    if !(x0 >= 0.0) {
        return Err(Error::validation(format!("x0 must be >= 0, got {x0}")));
    }
    let mut drift = x0;
    let mut noise_sq = KahanSum::new();
    for k in 0..a.len() {
        if !a[k].is_finite() || !(b[k] >= 0.0) || !(c[k] >= 0.0) {
            return Err(Error::validation(format!(
                "step {k}: A must be finite and B, C >= 0 (got {}, {}, {})",
                a[k], b[k], c[k]
            )));
        }
        let gain = a[k].exp();
        drift = gain * drift + b[k];
        noise_sq.scale(gain * gain);
        noise_sq.add(c[k] * c[k]);
    }
    Ok(drift + noise_sq.value().sqrt())
}
