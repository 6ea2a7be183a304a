//! Recursive weighted Gaussian estimation on mixed real + synthetic data.
//!
//! The chain starts from a fit on real data alone. At every later step it
//! draws `m` synthetic samples from the previous iterate `(μ_{t−1}, Σ_{t−1})`
//! and `n` fresh real samples from the truth, then forms the weighted updates
//! `μ_t = w·μ̂_t + (1−w)·μ̃_t` and `Σ_t = w·Ŝ_t + (1−w)·S̃_t`, recording the
//! squared errors `‖μ_t − μ‖²` and `‖Σ_t − Σ‖_F²` at every step.
//!
//! Σ_t is a convex combination of sample covariances and therefore PSD in
//! exact arithmetic; sampling clamps roundoff-negative eigenvalues and flags
//! any step where the clamp was material. Divergent chains (small `w`) are
//! run to completion on purpose — once an iterate overflows to non-finite
//! values the remaining steps are recorded as `+∞` markers.

use crate::linalg::{
    self, cholesky, frob_sq_dist, l2_sq_dist, sample_cov, sample_mean, sample_mvn_into,
    LinalgError, Matrix, Rows,
};
use crate::rng::RngStream;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid mix config: {0}")]
pub struct ConfigError(pub String);

/// Per-step mixing configuration: total weight `w` on the real half, `n` real
/// and `m` synthetic samples per step. The ratio `k = n/m` is derived.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixConfig {
    w: f64,
    n: usize,
    m: usize,
}

impl MixConfig {
    pub fn new(w: f64, n: usize, m: usize) -> Result<Self, ConfigError> {
        if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
            return Err(ConfigError(format!("weight w must lie in [0,1], got {w}")));
        }
        if n < 2 || m < 2 {
            return Err(ConfigError(format!("need n ≥ 2 and m ≥ 2, got n={n}, m={m}")));
        }
        Ok(Self { w, n, m })
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Real-to-synthetic sample ratio `k = n/m`.
    pub fn k(&self) -> f64 {
        self.n as f64 / self.m as f64
    }
}

/// A Gaussian model `N(μ, Σ)`; `sigma` must be symmetric PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
}

impl GaussianModel {
    pub fn new(mu: Vec<f64>, sigma: Matrix) -> Self {
        Self { mu, sigma }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Errors of one chain step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianStep {
    /// `‖μ_t − μ‖₂²`, or `+∞` once the iterate is non-finite.
    pub mean_err: f64,
    /// `‖Σ_t − Σ‖_F²`, or `+∞` once the iterate is non-finite.
    pub cov_err: f64,
    /// Whether sampling from the previous iterate required a material
    /// eigenvalue clamp (always `false` at step 0).
    pub clamped: bool,
}

/// Step-indexed errors of one chain run; entry `t` describes the iterate
/// after `t` recursion steps, so a `T`-step run has `T + 1` entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianTrajectory {
    pub steps: Vec<GaussianStep>,
}

impl GaussianTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mean_errs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mean_err).collect()
    }

    pub fn cov_errs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cov_err).collect()
    }
}

/// `w·mean(real_xs) + (1−w)·mean(synth_xs)`, the minimizer of the weighted
/// squared loss. Both batches must be nonempty and share a dimension.
pub fn weighted_mean_update(
    real_xs: &Rows,
    synth_xs: &Rows,
    w: f64,
) -> Result<Vec<f64>, LinalgError> {
    if real_xs.dim() != synth_xs.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: real_xs.dim(),
            right: synth_xs.dim(),
        });
    }
    let real_mean = sample_mean(real_xs)?;
    let synth_mean = sample_mean(synth_xs)?;
    Ok(real_mean
        .iter()
        .zip(&synth_mean)
        .map(|(r, s)| w * r + (1.0 - w) * s)
        .collect())
}

/// Convex combination `w·s_hat + (1−w)·s_tilde`; preserves symmetry and
/// positive semidefiniteness.
pub fn weighted_cov_update(
    s_hat: &Matrix,
    s_tilde: &Matrix,
    w: f64,
) -> Result<Matrix, LinalgError> {
    if s_hat.dim() != s_tilde.dim() {
        return Err(LinalgError::DimensionMismatch { left: s_hat.dim(), right: s_tilde.dim() });
    }
    let p = s_hat.dim();
    let mut out = Matrix::zeros(p);
    for i in 0..p {
        for j in 0..p {
            out[(i, j)] = w * s_hat[(i, j)] + (1.0 - w) * s_tilde[(i, j)];
        }
    }
    Ok(out)
}

/// Maps a computed squared error to its recorded value: non-finite results
/// (overflow, NaN from overflowed iterates) become `+∞` markers.
#[inline]
fn guard(err: f64) -> f64 {
    if err.is_finite() {
        err
    } else {
        f64::INFINITY
    }
}

fn model_is_finite(mu: &[f64], sigma: &Matrix) -> bool {
    mu.iter().all(|x| x.is_finite()) && sigma.as_slice().iter().all(|x| x.is_finite())
}

/// Runs the full recursion for `steps ≥ 1` steps and records per-step errors.
///
/// Step 0 fits `(μ₀, Σ₀)` from `cfg.n()` real draws only; the weight applies
/// from step 1 onward. The only error source is an invalid `truth` (its
/// covariance must be symmetric PSD): chain iterates themselves never raise
/// `NotPsd` because sampling clamps them, and divergence is reported through
/// `+∞` markers rather than errors.
pub fn run_gaussian_chain(
    truth: &GaussianModel,
    cfg: MixConfig,
    steps: usize,
    stream: RngStream,
) -> Result<GaussianTrajectory, LinalgError> {
    let p = truth.dim();
    if truth.sigma.dim() != p {
        return Err(LinalgError::DimensionMismatch { left: p, right: truth.sigma.dim() });
    }
    let truth_chol = cholesky(&truth.sigma)?;
    let w = cfg.w();
    let mut rng = stream.rng();
    let mut real = Rows::with_capacity(p, cfg.n());
    let mut synth = Rows::with_capacity(p, cfg.m());
    let mut traj = GaussianTrajectory { steps: Vec::with_capacity(steps + 1) };

    sample_mvn_into(&truth.mu, &truth_chol, cfg.n(), &mut rng, &mut real)?;
    let mut mu_t = sample_mean(&real)?;
    let mut sigma_t = sample_cov(&real)?;
    traj.steps.push(GaussianStep {
        mean_err: guard(l2_sq_dist(&mu_t, &truth.mu)?),
        cov_err: guard(frob_sq_dist(&sigma_t, &truth.sigma)?),
        clamped: false,
    });

    for _t in 1..=steps {
        if !model_is_finite(&mu_t, &sigma_t) {
            // Overflowed iterate: the distribution it denotes is meaningless,
            // so stop advancing and pad the trajectory with markers.
            traj.steps.push(GaussianStep {
                mean_err: f64::INFINITY,
                cov_err: f64::INFINITY,
                clamped: false,
            });
            continue;
        }
        // Fast path: Σ_{t−1} is PSD in exact arithmetic, so Cholesky normally
        // succeeds outright; fall back to an eigenvalue clamp on roundoff.
        let (prev_chol, clamped) = match cholesky(&sigma_t) {
            Ok(l) => (l, false),
            Err(_) => linalg::psd_factor(&sigma_t),
        };
        sample_mvn_into(&mu_t, &prev_chol, cfg.m(), &mut rng, &mut synth)?;
        sample_mvn_into(&truth.mu, &truth_chol, cfg.n(), &mut rng, &mut real)?;

        mu_t = weighted_mean_update(&real, &synth, w)?;
        sigma_t = weighted_cov_update(&sample_cov(&real)?, &sample_cov(&synth)?, w)?;
        traj.steps.push(GaussianStep {
            mean_err: guard(l2_sq_dist(&mu_t, &truth.mu)?),
            cov_err: guard(frob_sq_dist(&sigma_t, &truth.sigma)?),
            clamped,
        });
    }
    debug_assert_eq!(traj.len(), steps + 1);
    Ok(traj)
}

/// Test-support variant of the mean chain with explicit per-sample weights
/// `a` (real, length n) and `b` (synthetic, length m), `Σa + Σb = 1`. The
/// covariance update still uses the scalar weight `Σa`. Returns per-step
/// `mean_err`. Used to probe the optimality of uniform within-group weights;
/// not part of the simulator surface.
pub fn run_mean_chain_per_sample_weights(
    truth: &GaussianModel,
    a: &[f64],
    b: &[f64],
    steps: usize,
    stream: RngStream,
) -> Result<Vec<f64>, LinalgError> {
    let p = truth.dim();
    let (n, m) = (a.len(), b.len());
    assert!(n >= 2 && m >= 2, "need at least two samples per group");
    let total: f64 = a.iter().sum::<f64>() + b.iter().sum::<f64>();
    assert!((total - 1.0).abs() < 1e-12, "per-sample weights must sum to 1");
    let w: f64 = a.iter().sum();

    let truth_chol = cholesky(&truth.sigma)?;
    let mut rng = stream.rng();
    let mut real = Rows::with_capacity(p, n);
    let mut synth = Rows::with_capacity(p, m);
    let mut errs = Vec::with_capacity(steps + 1);

    sample_mvn_into(&truth.mu, &truth_chol, n, &mut rng, &mut real)?;
    let mut mu_t = sample_mean(&real)?;
    let mut sigma_t = sample_cov(&real)?;
    errs.push(guard(l2_sq_dist(&mu_t, &truth.mu)?));

    let weighted_sum = |xs: &Rows, ws: &[f64], acc: &mut [f64]| {
        for (row, wi) in xs.iter().zip(ws) {
            for (dst, x) in acc.iter_mut().zip(row) {
                *dst += wi * x;
            }
        }
    };

    for _t in 1..=steps {
        let (sampling_sigma, _) = match cholesky(&sigma_t) {
            Ok(l) => (l, false),
            Err(_) => linalg::psd_factor(&sigma_t),
        };
        sample_mvn_into(&mu_t, &sampling_sigma, m, &mut rng, &mut synth)?;
        sample_mvn_into(&truth.mu, &truth_chol, n, &mut rng, &mut real)?;

        let mut mu_next = vec![0.0; p];
        weighted_sum(&real, a, &mut mu_next);
        weighted_sum(&synth, b, &mut mu_next);
        mu_t = mu_next;
        sigma_t = weighted_cov_update(&linalg::sample_cov(&real)?, &sample_cov(&synth)?, w)?;
        errs.push(guard(l2_sq_dist(&mu_t, &truth.mu)?));
    }
    Ok(errs)
}
