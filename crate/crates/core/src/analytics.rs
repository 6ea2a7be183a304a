//! Closed-form error theory for weighted recursive training: limiting errors,
//! finite-horizon recursions, optimal and naive weights, and regime
//! classification. Everything here is a pure function of scalar inputs, so
//! the Monte Carlo harness can check every simulation against theory.
//!
//! Conventions shared by all functions: `w ∈ (0,1]` is the total weight on
//! fresh real data, `n` the per-step real-sample count, `m` the per-step
//! synthetic-sample count, and `k = n/m` the mixing ratio. Divergent limits
//! are first-class `+∞` values, not errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("domain error: {0}")]
pub struct DomainError(pub String);

type Result<T> = std::result::Result<T, DomainError>;

/// `|D| < NEAR_THRESHOLD_TOL` in [`gaussian_cov_limit`] is treated as a
/// divergent denominator: cancellation makes `N/D` numerically meaningless
/// that close to the collapse threshold.
pub const NEAR_THRESHOLD_TOL: f64 = 1e-13;

fn check_w(w: f64) -> Result<()> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(DomainError(format!("w must lie in (0,1], got {w}")));
    }
    Ok(())
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(DomainError(format!("k must be positive and finite, got {k}")));
    }
    Ok(())
}

fn check_nm(n: usize, m: usize) -> Result<()> {
    if n < 2 || m < 2 {
        return Err(DomainError(format!("n and m must be at least 2, got n={n}, m={m}")));
    }
    Ok(())
}

// ── Weights and the error factor ────────────────────────────────────────────

/// The limiting error factor `C(w,k) = (w² + (1−w)²k) / (2w − w²)`.
///
/// The weighted estimator's limiting error equals `C(w,k)` times the
/// single-fit error from `n` real samples, so `C < 1` means recursion with
/// mixing beats training on fresh real data alone.
pub fn c_factor(w: f64, k: f64) -> Result<f64> {
    check_w(w)?;
    check_k(k)?;
    Ok((w * w + (1.0 - w) * (1.0 - w) * k) / (2.0 * w - w * w))
}

/// The weight minimizing `C(·,k)`: `w* = (√(k² + 4k) − k)/2`.
///
/// At `k = 1` this is `(√5 − 1)/2`, the reciprocal of the golden ratio.
pub fn optimal_weight(k: f64) -> Result<f64> {
    check_k(k)?;
    Ok(((k * k + 4.0 * k).sqrt() - k) / 2.0)
}

/// The weight implicitly used when real and synthetic data are pooled without
/// reweighting: `w₀ = n/(n+m) = k/(k+1)`. Strictly smaller than
/// [`optimal_weight`] for every `k`, hence strictly suboptimal.
pub fn naive_weight(k: f64) -> Result<f64> {
    check_k(k)?;
    Ok(k / (k + 1.0))
}

// ── Gaussian limits ─────────────────────────────────────────────────────────

/// Limiting mean-estimation error `C(w,k) · tr(Σ)/n`.
pub fn gaussian_mean_limit(w: f64, k: f64, n: usize, tr_sigma: f64) -> Result<f64> {
    if n == 0 {
        return Err(DomainError("n must be positive".into()));
    }
    if !(tr_sigma >= 0.0) {
        return Err(DomainError(format!("tr(Σ) must be nonnegative, got {tr_sigma}")));
    }
    Ok(c_factor(w, k)? * tr_sigma / n as f64)
}

/// The collapse threshold for covariance estimation: the limiting error is
/// `+∞` for `w ≤ 1 − √((m−1)/(m+1))`.
pub fn cov_collapse_threshold(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(DomainError(format!("m must be at least 2, got {m}")));
    }
    Ok(1.0 - ((m as f64 - 1.0) / (m as f64 + 1.0)).sqrt())
}

/// Limiting covariance error with divergence diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovLimit {
    /// Limiting squared-Frobenius error; `+∞` in the collapse regime.
    pub value: f64,
    /// `true` when the value is `+∞` only because the denominator `D` fell
    /// within [`NEAR_THRESHOLD_TOL`] of zero — i.e. `w` sits numerically on
    /// the collapse threshold rather than clearly below it.
    pub near_threshold: bool,
}

/// Limiting covariance-estimation error `N/D − tr(Σ²)`, or `+∞` at and below
/// the collapse threshold `w ≤ 1 − √((m−1)/(m+1))`.
pub fn gaussian_cov_limit(
    w: f64,
    n: usize,
    m: usize,
    tr_sigma: f64,
    tr_sigma_sq: f64,
) -> Result<CovLimit> {
    check_w(w)?;
    check_nm(n, m)?;
    let nu_n = n as f64 - 1.0;
    let nu_m = m as f64 - 1.0;
    if w <= cov_collapse_threshold(m)? {
        return Ok(CovLimit { value: f64::INFINITY, near_threshold: false });
    }
    let s = 2.0 * w - w * w;
    let q = (1.0 - w) * (1.0 - w);
    let tr2 = tr_sigma * tr_sigma;
    let numer = s * tr_sigma_sq
        + q * (tr2 * s + 2.0 * w * w * tr_sigma_sq / nu_n) / (nu_m * s)
        + w * w * (tr2 + tr_sigma_sq) / nu_n;
    let denom = s - 2.0 * q * q / (nu_m * nu_m * s) - q / nu_m;
    if denom.abs() < NEAR_THRESHOLD_TOL {
        return Ok(CovLimit { value: f64::INFINITY, near_threshold: true });
    }
    Ok(CovLimit { value: numer / denom - tr_sigma_sq, near_threshold: false })
}

/// [`gaussian_cov_limit`] reduced to its value (`+∞` in the collapse regime).
pub fn gaussian_cov_limit_finite(
    w: f64,
    n: usize,
    m: usize,
    tr_sigma: f64,
    tr_sigma_sq: f64,
) -> Result<f64> {
    Ok(gaussian_cov_limit(w, n, m, tr_sigma, tr_sigma_sq)?.value)
}

// ── GLM error recursion ─────────────────────────────────────────────────────

/// The scaled (×n) GLM parameter error after `t` recursion steps:
/// iterates `e_t = (1−w)²·e_{t−1} + [(1−w)²k + w²]·tr(Σ₀⁻¹)` from the base
/// case `e_0 = tr(Σ₀⁻¹)`.
pub fn glm_scaled_error(w: f64, k: f64, t: u32, tr_sigma0_inv: f64) -> Result<f64> {
    check_w(w)?;
    check_k(k)?;
    let q = (1.0 - w) * (1.0 - w);
    let inject = (q * k + w * w) * tr_sigma0_inv;
    let mut e = tr_sigma0_inv;
    for _ in 0..t {
        e = q * e + inject;
    }
    Ok(e)
}

/// Limit of [`glm_scaled_error`] as `t → ∞`: `C(w,k) · tr(Σ₀⁻¹)`.
pub fn glm_limit_error(w: f64, k: f64, tr_sigma0_inv: f64) -> Result<f64> {
    Ok(c_factor(w, k)? * tr_sigma0_inv)
}

/// Closed form of [`glm_scaled_error`] at the optimal weight `w*(k)`:
/// `tr(Σ₀⁻¹) · [w* + (1−w*)^(2t+1)]`.
pub fn glm_scaled_error_at_optimal(k: f64, t: u32, tr_sigma0_inv: f64) -> Result<f64> {
    let w = optimal_weight(k)?;
    Ok(tr_sigma0_inv * (w + (1.0 - w).powi(2 * t as i32 + 1)))
}

/// Closed form of [`glm_scaled_error`] at the naive pooled weight `w₀(k)`:
/// `tr(Σ₀⁻¹) · [(k+1)/(k+2) + (1/(k+2))·(1/(k+1))^(2t)]`.
pub fn glm_scaled_error_at_naive(k: f64, t: u32, tr_sigma0_inv: f64) -> Result<f64> {
    check_k(k)?;
    Ok(tr_sigma0_inv
        * ((k + 1.0) / (k + 2.0) + (1.0 / (k + 2.0)) * (k + 1.0).powi(-2 * (t as i32))))
}

/// Finite-horizon factor for the covariance operator-norm bound:
/// `β_T = (1−w)^(2T) + [(1−w)²k + w²]·(1 − (1−w)^(2T)) / (w(2−w))`.
/// `β_0 = 1`, and `β_T → C(w,k)` as `T → ∞`.
pub fn cov_opnorm_beta(w: f64, k: f64, t: u32) -> Result<f64> {
    check_w(w)?;
    check_k(k)?;
    let decay = (1.0 - w).powi(2 * t as i32);
    let q = (1.0 - w) * (1.0 - w);
    Ok(decay + (q * k + w * w) * (1.0 - decay) / (w * (2.0 - w)))
}

// ── CDF estimation limits ───────────────────────────────────────────────────

/// Limiting Cramér–von Mises error of the weighted recursive CDF estimator:
/// `(1/6)·(w²/n + (1−w)²/m) / (1 − (1−w)²(1 − 1/m))`.
pub fn cdf_limit_error(w: f64, n: usize, m: usize) -> Result<f64> {
    check_w(w)?;
    check_nm(n, m)?;
    let q = (1.0 - w) * (1.0 - w);
    let nf = n as f64;
    let mf = m as f64;
    Ok((w * w / nf + q / mf) / (6.0 * (1.0 - q * (1.0 - 1.0 / mf))))
}

/// The weight minimizing [`cdf_limit_error`] at finite `(n, m)`.
///
/// Setting the `w`-derivative of the limit to zero gives the quadratic
/// `(m−1)w² + (n+1)w − n = 0`, whose root in `(0,1)` is
/// `w* = (√(n² + (4m−2)n + 1) − n − 1) / (2m − 2)`; the grid-search oracle in
/// the tests confirms it is the argmin. As `n, m → ∞` with `n/m → k` this
/// approaches the mean-estimation optimal weight `(√(k²+4k) − k)/2`.
pub fn cdf_optimal_weight(n: usize, m: usize) -> Result<f64> {
    check_nm(n, m)?;
    let nf = n as f64;
    let mf = m as f64;
    let disc = nf * nf + (4.0 * mf - 2.0) * nf + 1.0;
    Ok((disc.sqrt() - nf - 1.0) / (2.0 * mf - 2.0))
}

/// Boundary of the no-improvement stage for CDF estimation: recursion with
/// weight `w` beats the plain `n`-sample empirical CDF only when
/// `w > (n−1)/(n+2m−1)`.
pub fn cdf_improvement_threshold(n: usize, m: usize) -> Result<f64> {
    check_nm(n, m)?;
    let nf = n as f64;
    let mf = m as f64;
    Ok((nf - 1.0) / (nf + 2.0 * mf - 1.0))
}

// ── Regime classification ───────────────────────────────────────────────────

/// Which estimation problem a regime query refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    GaussianCov,
    Cdf,
}

/// Qualitative behaviour of recursive training at a given `(w, n, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The limiting error is infinite.
    Collapse,
    /// Finite limiting error, but no better than training on real data alone.
    NoImprovement,
    /// Strictly smaller limiting error than training on real data alone.
    Improvement,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            Regime::Collapse => "collapse",
            Regime::NoImprovement => "no_improvement",
            Regime::Improvement => "improvement",
        };
        f.write_str(tag)
    }
}

/// Classifies `(w, n, m)` into collapse / no-improvement / improvement.
///
/// For [`Setting::GaussianCov`] the improvement comparison is between
/// finite-sample limits at `w` and at `w = 1`, evaluated under the
/// scalar-variance convention `tr(Σ) = tr(Σ²) = 1` (the comparison is a pure
/// ratio, and the stage diagrams this mirrors are one-dimensional). For
/// [`Setting::Cdf`] the limiting error is bounded by 1/6, so collapse never
/// occurs and the boundary is [`cdf_improvement_threshold`].
pub fn classify_regime(setting: Setting, w: f64, n: usize, m: usize) -> Result<Regime> {
    check_w(w)?;
    check_nm(n, m)?;
    match setting {
        Setting::GaussianCov => {
            if w <= cov_collapse_threshold(m)? {
                return Ok(Regime::Collapse);
            }
            let at_w = gaussian_cov_limit(w, n, m, 1.0, 1.0)?;
            let at_one = gaussian_cov_limit(1.0, n, m, 1.0, 1.0)?;
            if at_w.value < at_one.value {
                Ok(Regime::Improvement)
            } else {
                Ok(Regime::NoImprovement)
            }
        }
        Setting::Cdf => {
            if w <= cdf_improvement_threshold(n, m)? {
                Ok(Regime::NoImprovement)
            } else if w < 1.0 {
                Ok(Regime::Improvement)
            } else {
                // w = 1 reproduces the plain empirical CDF exactly.
                Ok(Regime::NoImprovement)
            }
        }
    }
}
