//! Conditional-variance envelope functions.
//!
//! The sampling guarantees require a function φ with
//! Var(X | X + σξ = y) ⪯ φ(σ)·I for all σ > 0 and all y — a quantitative
//! smoothing assumption on the target. This module implements the catalog of
//! known envelope classes, their evaluation, and the conversions into the two
//! canonical parameterizations consumed by the error bounds:
//!
//! - the "strongly log-concave plus bounded part" shape
//!   φ(σ) = σ²/(1+mσ²) + bM²σ⁴/(1+Mσ²)², and
//! - the "bounded support, semi-log-concave" shape
//!   φ(σ) = b ∧ σ²/(1−Mσ²)₊.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A conditional-variance envelope: φ(σ) bounding the largest eigenvalue of
/// the posterior covariance Var(X | X + σξ = y) uniformly in y.
///
/// Variants mirror the standard catalog. Throughout, `m` is a strong
/// log-concavity constant (lower curvature of −log density), `m_upper` is a
/// semi-log-concavity / score-Lipschitz constant (upper curvature), `d_x` is
/// the support half-diameter, `b` a squared half-diameter, and `tau` a
/// Gaussian convolution level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum PhiFunction {
    /// Bounded support of diameter `2·d_x`: φ(σ) ≡ d_x².
    BoundedSupport { d_x: f64 },
    /// `m`-strongly log-concave: φ(σ) = σ²/(1+mσ²).
    StronglyLogConcave { m: f64 },
    /// Semi-log-concave with constant `m_upper` and support half-diameter
    /// `d_x`: φ(σ) = d_x² ∧ σ²/(1−m_upper·σ²)₊.
    SemiLogConcaveBounded { d_x: f64, m_upper: f64 },
    /// Convolution with N(0, τ²I) of a target whose envelope is `inner`:
    /// φ_τ(σ) = τ²σ²/(τ²+σ²) + σ⁴·φ₀(√(τ²+σ²))/(τ²+σ²)².
    GaussianConvolution { tau: f64, inner: Box<PhiFunction> },
    /// Sum of an `m`-strongly log-concave part with `m_upper`-Lipschitz score
    /// and an independent bounded part of half-diameter `d_x`:
    /// φ(σ) = σ²/(1+mσ²) + (m_upper·d_x·σ²)²/(1+m_upper·σ²)².
    SlcPlusBounded { m: f64, m_upper: f64, d_x: f64 },
    /// The general "log-concave plus bounded" composite with explicit squared
    /// half-diameter `b`: φ(σ) = σ²/(1+mσ²) + b·m_upper²σ⁴/(1+m_upper·σ²)².
    CompositeSlg { m: f64, m_upper: f64, b: f64 },
    /// The general "bounded, semi-log-concave" composite:
    /// φ(σ) = b ∧ σ²/(1−m_upper·σ²)₊, second branch +∞ when m_upper·σ² ≥ 1.
    CompositeSemiBounded { b: f64, m_upper: f64 },
}

impl PhiFunction {
    /// Check constants for the class: finiteness, sign constraints, and the
    /// orderings the defining properties require.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("phi: {name} must be finite")))
            }
        };
        match self {
            PhiFunction::BoundedSupport { d_x } => {
                finite(*d_x, "d_x")?;
                if *d_x <= 0.0 {
                    return Err(Error::validation("phi: d_x must be positive"));
                }
            }
            PhiFunction::StronglyLogConcave { m } => {
                finite(*m, "m")?;
                if *m <= 0.0 {
                    return Err(Error::validation("phi: m must be positive"));
                }
            }
            PhiFunction::SemiLogConcaveBounded { d_x, m_upper } => {
                finite(*d_x, "d_x")?;
                finite(*m_upper, "m_upper")?;
                if *d_x <= 0.0 || *m_upper < 0.0 {
                    return Err(Error::validation(
                        "phi: need d_x > 0 and m_upper >= 0",
                    ));
                }
            }
            PhiFunction::GaussianConvolution { tau, inner } => {
                finite(*tau, "tau")?;
                if *tau <= 0.0 {
                    return Err(Error::validation("phi: tau must be positive"));
                }
                inner.validate()?;
            }
            PhiFunction::SlcPlusBounded { m, m_upper, d_x } => {
                finite(*m, "m")?;
                finite(*m_upper, "m_upper")?;
                finite(*d_x, "d_x")?;
                if !(*m > 0.0 && *m_upper >= *m && *d_x >= 0.0) {
                    return Err(Error::validation(
                        "phi: need m_upper >= m > 0 and d_x >= 0",
                    ));
                }
            }
            PhiFunction::CompositeSlg { m, m_upper, b } => {
                finite(*m, "m")?;
                finite(*m_upper, "m_upper")?;
                finite(*b, "b")?;
                if *m < 0.0 || *m_upper < 0.0 || *b < 0.0 {
                    return Err(Error::validation(
                        "phi: composite constants must be nonnegative",
                    ));
                }
            }
            PhiFunction::CompositeSemiBounded { b, m_upper } => {
                finite(*b, "b")?;
                finite(*m_upper, "m_upper")?;
                if *b < 0.0 || *m_upper < 0.0 {
                    return Err(Error::validation(
                        "phi: composite constants must be nonnegative",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Evaluate φ(σ).
    ///
    /// The semi-log-concave branches use the convention that
    /// σ²/(1−Mσ²)₊ = +∞ once Mσ² ≥ 1, so the minimum falls back to the
    /// bounded-support constant there.
    pub fn eval(&self, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::validation("phi_eval: sigma must be positive"));
        }
        self.validate()?;
        let s2 = sigma * sigma;
        Ok(match self {
            PhiFunction::BoundedSupport { d_x } => d_x * d_x,
            PhiFunction::StronglyLogConcave { m } => s2 / (1.0 + m * s2),
            PhiFunction::SemiLogConcaveBounded { d_x, m_upper } => {
                semi_bounded(d_x * d_x, *m_upper, s2)
            }
            PhiFunction::GaussianConvolution { tau, inner } => {
                let t2 = tau * tau;
                let v = t2 + s2;
                t2 * s2 / v + s2 * s2 * inner.eval(v.sqrt())? / (v * v)
            }
            PhiFunction::SlcPlusBounded { m, m_upper, d_x } => {
                let spread = m_upper * d_x * s2 / (1.0 + m_upper * s2);
                s2 / (1.0 + m * s2) + spread * spread
            }
            PhiFunction::CompositeSlg { m, m_upper, b } => {
                let r = m_upper * s2 / (1.0 + m_upper * s2);
                s2 / (1.0 + m * s2) + b * r * r
            }
            PhiFunction::CompositeSemiBounded { b, m_upper } => {
                semi_bounded(*b, *m_upper, s2)
            }
        })
    }

    /// Express this envelope in the "strongly log-concave plus bounded"
    /// shape σ²/(1+mσ²) + bM²σ⁴/(1+Mσ²)², returning `(m, M, b)` when the
    /// class admits it (these are the inputs of the first error theorem).
    ///
    /// A strongly log-concave envelope carries `b = 0`, where `M` is
    /// immaterial; a Gaussian convolution of a bounded-support target is the
    /// `m = M = 1/τ²` case.
    pub fn as_composite_slg(&self) -> Option<(f64, f64, f64)> {
        match self {
            PhiFunction::StronglyLogConcave { m } => Some((*m, *m, 0.0)),
            PhiFunction::SlcPlusBounded { m, m_upper, d_x } => {
                Some((*m, *m_upper, d_x * d_x))
            }
            PhiFunction::CompositeSlg { m, m_upper, b } => {
                Some((*m, *m_upper, *b))
            }
            PhiFunction::GaussianConvolution { tau, inner } => match &**inner {
                PhiFunction::BoundedSupport { d_x } => {
                    let inv_t2 = 1.0 / (tau * tau);
                    Some((inv_t2, inv_t2, d_x * d_x))
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Express this envelope in the "bounded, semi-log-concave" shape
    /// b ∧ σ²/(1−Mσ²)₊, returning `(b, M)` when the class admits it (these
    /// are the inputs of the second error theorem).
    pub fn as_composite_semi_bounded(&self) -> Option<(f64, f64)> {
        match self {
            PhiFunction::BoundedSupport { d_x } => Some((d_x * d_x, 0.0)),
            PhiFunction::SemiLogConcaveBounded { d_x, m_upper } => {
                Some((d_x * d_x, *m_upper))
            }
            PhiFunction::CompositeSemiBounded { b, m_upper } => {
                Some((*b, *m_upper))
            }
            _ => None,
        }
    }
}

/// b ∧ s²/(1−M·s²)₊ on squared arguments, with the +∞ convention.
fn semi_bounded(b: f64, m_upper: f64, s2: f64) -> f64 {
    let denom = 1.0 - m_upper * s2;
    if denom <= 0.0 {
        b
    } else {
        b.min(s2 / denom)
    }
}

/// Evaluate an envelope; free-function form mirroring the library's
/// operation catalog.
pub fn phi_eval(phi: &PhiFunction, sigma: f64) -> Result<f64> {
    phi.eval(sigma)
}
