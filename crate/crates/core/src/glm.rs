//! Weighted maximum-likelihood fitting for linear, logistic, and Poisson
//! regression, and the recursive mixed-data training loop built on it.
//!
//! At every step the chain draws fresh covariates for both groups from the
//! known covariate law, generates real responses from the true parameter and
//! synthetic responses from the previous fit, then minimizes
//! `−[(w/n)·Σ log P(y|x,θ) + ((1−w)/m)·Σ log P(ỹ|x̃,θ)]`. The linear family
//! is solved in closed form via weighted normal equations; logistic and
//! Poisson use Newton's method with step-halving. Per-family losses drop
//! additive constants that do not depend on θ (Gaussian normalizer, log y!),
//! which changes no minimizer, gradient, or Hessian.

use crate::gaussian::{GaussianModel, MixConfig};
use crate::linalg::{
    cholesky, sample_mvn_into, solve_spd, LinalgError, Matrix, Rows,
};
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

/// Synthetic Poisson means above this bound signal an exploded iterate; the
/// replication is halted and its remaining steps marked `+∞`.
pub const POISSON_MEAN_LIMIT: f64 = 1e9;
/// Newton iteration cap for logistic/Poisson fits.
pub const MAX_NEWTON_ITERS: usize = 100;
/// Ridge added to a numerically singular Hessian for the single retry.
pub const HESSIAN_RIDGE: f64 = 1e-8;
/// Gradient tolerance is `GRAD_TOL · (1 + ‖gradient at init‖)`.
pub const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("poisson mean {mean:.3e} exceeds overflow guard {POISSON_MEAN_LIMIT:.0e}")]
    PoissonOverflow { mean: f64 },
    #[error("weighted Hessian is singular even after ridge retry")]
    SingularHessian,
    #[error("Newton failed to reach gradient tolerance in {MAX_NEWTON_ITERS} iterations")]
    NoConvergence,
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
}

/// Response family of a generalized linear model with canonical link:
/// identity (linear), logit (logistic), log (Poisson).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GlmFamily {
    Linear { noise_sd: f64 },
    Logistic,
    Poisson,
}

impl GlmFamily {
    pub fn linear(noise_sd: f64) -> Self {
        assert!(
            noise_sd.is_finite() && noise_sd > 0.0,
            "linear noise_sd must be finite and positive, got {noise_sd}"
        );
        GlmFamily::Linear { noise_sd }
    }
}

/// A regression task: true parameter, response family, and the known law of
/// each covariate row.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmProblem {
    pub family: GlmFamily,
    pub theta_star: Vec<f64>,
    pub covariate_law: GaussianModel,
}

impl GlmProblem {
    pub fn new(family: GlmFamily, theta_star: Vec<f64>, covariate_law: GaussianModel) -> Self {
        assert!(theta_star.iter().all(|t| t.is_finite()), "theta_star must be finite");
        assert_eq!(
            theta_star.len(),
            covariate_law.dim(),
            "theta_star and covariate law dimensions must match"
        );
        Self { family, theta_star, covariate_law }
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }
}

/// A regression sample: covariate rows paired with scalar responses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlmData {
    pub xs: Rows,
    pub ys: Vec<f64>,
}

impl GlmData {
    pub fn new(xs: Rows, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len(), "covariates and responses must pair up");
        Self { xs, ys }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }
}

/// One recorded chain step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlmStep {
    /// `‖θ̂_t − θ*‖₂²`, or `+∞` after the replication fails.
    pub theta_err: f64,
    /// Newton iterations spent on this fit (0 for closed-form linear fits).
    pub newton_iters: usize,
    /// False from the first failed step onward.
    pub converged: bool,
}

/// Step-indexed fit errors; a `T`-step run has `T + 1` entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlmTrajectory {
    pub steps: Vec<GlmStep>,
}

impl GlmTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn theta_errs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.theta_err).collect()
    }

    /// Whether every step's fit converged.
    pub fn fully_converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
#[inline]
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Draws one response `y ~ P(· | x, θ)` for the family.
pub fn glm_response<R: Rng + ?Sized>(
    family: GlmFamily,
    x: &[f64],
    theta: &[f64],
    rng: &mut R,
) -> Result<f64, GlmError> {
    assert_eq!(x.len(), theta.len(), "covariate/parameter dimensions must match");
    let eta = dot(x, theta);
    match family {
        GlmFamily::Linear { noise_sd } => {
            let z: f64 = StandardNormal.sample(rng);
            Ok(eta + noise_sd * z)
        }
        GlmFamily::Logistic => {
            let p = sigmoid(eta);
            Ok(if rng.gen::<f64>() < p { 1.0 } else { 0.0 })
        }
        GlmFamily::Poisson => {
            let mean = eta.exp();
            if !(mean <= POISSON_MEAN_LIMIT) {
                return Err(GlmError::PoissonOverflow { mean });
            }
            if mean == 0.0 {
                return Ok(0.0);
            }
            Ok(Poisson::new(mean).expect("guarded mean is valid").sample(rng))
        }
    }
}

/// Per-observation negative log-likelihood with θ-independent constants
/// dropped (the Gaussian normalizer and `log y!`).
#[inline]
fn nll_term(family: GlmFamily, eta: f64, y: f64) -> f64 {
    match family {
        GlmFamily::Linear { noise_sd } => {
            let r = y - eta;
            r * r / (2.0 * noise_sd * noise_sd)
        }
        GlmFamily::Logistic => log1p_exp(eta) - y * eta,
        GlmFamily::Poisson => eta.exp() - y * eta,
    }
}

/// First and second derivatives of the per-observation loss in the linear
/// predictor `eta`.
#[inline]
fn loss_d1_d2(family: GlmFamily, eta: f64, y: f64) -> (f64, f64) {
    match family {
        GlmFamily::Linear { noise_sd } => {
            let inv_var = 1.0 / (noise_sd * noise_sd);
            ((eta - y) * inv_var, inv_var)
        }
        GlmFamily::Logistic => {
            let mu = sigmoid(eta);
            (mu - y, mu * (1.0 - mu))
        }
        GlmFamily::Poisson => {
            let mu = eta.exp();
            (mu - y, mu)
        }
    }
}

/// Information curvature `v(eta) = d²ℓ/dη²`, independent of the response.
#[inline]
fn curvature(family: GlmFamily, eta: f64) -> f64 {
    loss_d1_d2(family, eta, 0.0).1
}

/// The weighted negative log-likelihood
/// `(w/n)·Σ_real ℓ(θ) + ((1−w)/m)·Σ_synth ℓ(θ)`.
///
/// A group whose effective weight is zero is skipped entirely and may be
/// empty; a nonzero-weight group must be nonempty.
pub fn weighted_nll(
    family: GlmFamily,
    theta: &[f64],
    real_data: &GlmData,
    synth_data: &GlmData,
    w: f64,
) -> f64 {
    let mut total = 0.0;
    for (data, weight) in [(real_data, w), (synth_data, 1.0 - w)] {
        if weight == 0.0 {
            continue;
        }
        assert!(!data.is_empty(), "group with weight {weight} must be nonempty");
        let per = weight / data.len() as f64;
        for (x, &y) in data.xs.iter().zip(&data.ys) {
            total += per * nll_term(family, dot(x, theta), y);
        }
    }
    total
}

/// Gradient and Hessian of [`weighted_nll`] at `theta`.
pub fn weighted_nll_grad_hess(
    family: GlmFamily,
    theta: &[f64],
    real_data: &GlmData,
    synth_data: &GlmData,
    w: f64,
) -> (Vec<f64>, Matrix) {
    let p = theta.len();
    let mut grad = vec![0.0; p];
    let mut hess = Matrix::zeros(p);
    for (data, weight) in [(real_data, w), (synth_data, 1.0 - w)] {
        if weight == 0.0 {
            continue;
        }
        assert!(!data.is_empty(), "group with weight {weight} must be nonempty");
        let per = weight / data.len() as f64;
        for (x, &y) in data.xs.iter().zip(&data.ys) {
            let (d1, d2) = loss_d1_d2(family, dot(x, theta), y);
            let g = per * d1;
            let c = per * d2;
            for i in 0..p {
                grad[i] += g * x[i];
                for j in 0..=i {
                    hess[(i, j)] += c * x[i] * x[j];
                }
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            hess[(j, i)] = hess[(i, j)];
        }
    }
    (grad, hess)
}

fn solve_with_ridge(h: &Matrix, rhs: &[f64]) -> Result<Vec<f64>, GlmError> {
    if h.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(GlmError::SingularHessian);
    }
    let finite = |d: Vec<f64>| {
        if d.iter().all(|x| x.is_finite()) {
            Ok(d)
        } else {
            Err(GlmError::SingularHessian)
        }
    };
    match solve_spd(h, rhs) {
        Ok(d) => finite(d),
        Err(_) => {
            let p = h.dim();
            let mut ridged = h.clone();
            for i in 0..p {
                ridged[(i, i)] += HESSIAN_RIDGE;
            }
            match solve_spd(&ridged, rhs) {
                Ok(d) => finite(d),
                Err(_) => Err(GlmError::SingularHessian),
            }
        }
    }
}

/// A completed fit: the estimate and the Newton iterations it took.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub theta: Vec<f64>,
    pub newton_iters: usize,
}

/// Minimizes the weighted NLL. The linear family is solved exactly through
/// weighted normal equations; logistic/Poisson run damped Newton from `init`
/// until `‖gradient‖ ≤ GRAD_TOL·(1 + ‖gradient at init‖)`.
pub fn fit_weighted_mle(
    family: GlmFamily,
    real_data: &GlmData,
    synth_data: &GlmData,
    w: f64,
    init: &[f64],
) -> Result<Fit, GlmError> {
    match family {
        GlmFamily::Linear { .. } => fit_linear(real_data, synth_data, w).map(|theta| Fit {
            theta,
            newton_iters: 0,
        }),
        _ => fit_newton(family, real_data, synth_data, w, init),
    }
}

/// Weighted least squares: solve `A θ = b` with
/// `A = (w/n)·X_rᵀX_r + ((1−w)/m)·X_sᵀX_s` and matching right-hand side.
/// The noise variance scales both sides equally and cancels.
fn fit_linear(real_data: &GlmData, synth_data: &GlmData, w: f64) -> Result<Vec<f64>, GlmError> {
    let p = real_data.xs.dim().max(synth_data.xs.dim());
    let mut a = Matrix::zeros(p);
    let mut b = vec![0.0; p];
    for (data, weight) in [(real_data, w), (synth_data, 1.0 - w)] {
        if weight == 0.0 {
            continue;
        }
        assert!(!data.is_empty(), "group with weight {weight} must be nonempty");
        let per = weight / data.len() as f64;
        for (x, &y) in data.xs.iter().zip(&data.ys) {
            for i in 0..p {
                b[i] += per * y * x[i];
                for j in 0..=i {
                    a[(i, j)] += per * x[i] * x[j];
                }
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
    }
    solve_with_ridge(&a, &b)
}

fn fit_newton(
    family: GlmFamily,
    real_data: &GlmData,
    synth_data: &GlmData,
    w: f64,
    init: &[f64],
) -> Result<Fit, GlmError> {
    let p = init.len();
    let mut theta = init.to_vec();
    let mut nll = weighted_nll(family, &theta, real_data, synth_data, w);
    let (g0, _) = weighted_nll_grad_hess(family, &theta, real_data, synth_data, w);
    let tol = GRAD_TOL * (1.0 + g0.iter().map(|g| g * g).sum::<f64>().sqrt());

    for iter in 0..MAX_NEWTON_ITERS {
        let (grad, hess) = weighted_nll_grad_hess(family, &theta, real_data, synth_data, w);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= tol {
            return Ok(Fit { theta, newton_iters: iter });
        }
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let dir = solve_with_ridge(&hess, &neg_grad)?;
        // Backtracking: halve the step until the objective stops increasing.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = (0..p).map(|i| theta[i] + scale * dir[i]).collect();
            let cand_nll = weighted_nll(family, &cand, real_data, synth_data, w);
            if cand_nll.is_finite() && cand_nll <= nll {
                theta = cand;
                nll = cand_nll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            // No descent even at tiny steps: numerically at a minimum.
            let (grad, _) = weighted_nll_grad_hess(family, &theta, real_data, synth_data, w);
            let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gn <= tol {
                return Ok(Fit { theta, newton_iters: iter });
            }
            return Err(GlmError::NoConvergence);
        }
    }
    let (grad, _) = weighted_nll_grad_hess(family, &theta, real_data, synth_data, w);
    if grad.iter().map(|g| g * g).sum::<f64>().sqrt() <= tol {
        return Ok(Fit { theta, newton_iters: MAX_NEWTON_ITERS });
    }
    Err(GlmError::NoConvergence)
}

/// Fisher information `Σ₀ = E[v(xᵀθ*)·xxᵀ]` under the covariate law.
///
/// Linear has the closed form `(Σ_X + μμᵀ)/σ²`; logistic and Poisson are
/// estimated with `draws` Monte Carlo covariate draws. Callers should invoke
/// this once per problem and reuse the result (it is deterministic given
/// `stream`), not recompute it inside replication loops.
pub fn sigma0(problem: &GlmProblem, draws: usize, stream: RngStream) -> Result<Matrix, GlmError> {
    let p = problem.dim();
    let law = &problem.covariate_law;
    if let GlmFamily::Linear { noise_sd } = problem.family {
        let inv_var = 1.0 / (noise_sd * noise_sd);
        let mut out = Matrix::zeros(p);
        for i in 0..p {
            for j in 0..p {
                out[(i, j)] = inv_var * (law.sigma[(i, j)] + law.mu[i] * law.mu[j]);
            }
        }
        return Ok(out);
    }
    let chol = cholesky(&law.sigma)?;
    let mut rng = stream.rng();
    let mut batch = Rows::with_capacity(p, 1024);
    let mut acc = Matrix::zeros(p);
    let mut remaining = draws;
    while remaining > 0 {
        let count = remaining.min(1024);
        sample_mvn_into(&law.mu, &chol, count, &mut rng, &mut batch)?;
        for x in batch.iter() {
            let v = curvature(problem.family, dot(x, &problem.theta_star));
            for i in 0..p {
                for j in 0..=i {
                    acc[(i, j)] += v * x[i] * x[j];
                }
            }
        }
        remaining -= count;
    }
    for i in 0..p {
        for j in 0..=i {
            acc[(i, j)] /= draws as f64;
            acc[(j, i)] = acc[(i, j)];
        }
    }
    Ok(acc)
}

/// Monte Carlo draw count used for `tr(Σ₀⁻¹)` reference constants.
pub const SIGMA0_MC_DRAWS: usize = 1_000_000;

/// `tr(Σ₀⁻¹)`, the per-step scale of the scaled-error recursion, using the
/// closed form when available and a fixed-stream Monte Carlo otherwise.
pub fn tr_sigma0_inv(problem: &GlmProblem) -> Result<f64, GlmError> {
    let stream = RngStream::new(0x5173_6d61_30u64, 0);
    let s0 = sigma0(problem, SIGMA0_MC_DRAWS, stream)?;
    Ok(crate::linalg::spd_inverse_trace(&s0)?)
}

fn draw_covariates<R: Rng + ?Sized>(
    law: &GaussianModel,
    chol: &Matrix,
    count: usize,
    rng: &mut R,
    out: &mut Rows,
) -> Result<(), GlmError> {
    sample_mvn_into(&law.mu, chol, count, rng, out)?;
    Ok(())
}

fn fill_failed(traj: &mut GlmTrajectory, total_steps: usize) {
    while traj.len() < total_steps + 1 {
        traj.steps.push(GlmStep { theta_err: f64::INFINITY, newton_iters: 0, converged: false });
    }
}

/// Runs the recursive weighted-MLE chain for `steps ≥ 1` steps.
///
/// Step 0 fits on `cfg.n()` real pairs alone. Step `t ≥ 1` draws fresh
/// covariates for both groups, real responses from `θ*`, synthetic responses
/// from `θ̂_{t−1}`, and fits warm-started at `θ̂_{t−1}` (one cold restart at 0
/// if Newton stalls). A replication that still fails — non-convergence,
/// singular Hessian, or a Poisson mean past the overflow guard — is not
/// dropped: the failing step and all later ones are recorded as `+∞` with
/// `converged = false`.
pub fn run_glm_chain(
    problem: &GlmProblem,
    cfg: MixConfig,
    steps: usize,
    stream: RngStream,
) -> Result<GlmTrajectory, GlmError> {
    let p = problem.dim();
    let law = &problem.covariate_law;
    let law_chol = cholesky(&law.sigma)?;
    let mut rng = stream.rng();
    let (n, m) = (cfg.n(), cfg.m());
    let w = cfg.w();
    let mut traj = GlmTrajectory { steps: Vec::with_capacity(steps + 1) };

    let theta_sq_err = |theta: &[f64]| -> f64 {
        let d: f64 = theta
            .iter()
            .zip(&problem.theta_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d.is_finite() {
            d
        } else {
            f64::INFINITY
        }
    };

    let mut real = GlmData::new(Rows::with_capacity(p, n), Vec::with_capacity(n));
    let mut synth = GlmData::new(Rows::with_capacity(p, m), Vec::with_capacity(m));
    let empty = GlmData::default();

    // Step 0: real data only.
    draw_covariates(law, &law_chol, n, &mut rng, &mut real.xs)?;
    real.ys.clear();
    for i in 0..n {
        real.ys.push(glm_response(problem.family, real.xs.row(i), &problem.theta_star, &mut rng)?);
    }
    let mut theta = match fit_weighted_mle(problem.family, &real, &empty, 1.0, &vec![0.0; p]) {
        Ok(fit) => {
            traj.steps.push(GlmStep {
                theta_err: theta_sq_err(&fit.theta),
                newton_iters: fit.newton_iters,
                converged: true,
            });
            fit.theta
        }
        Err(_) => {
            fill_failed(&mut traj, steps);
            return Ok(traj);
        }
    };

    for _t in 1..=steps {
        // Fresh covariates for both groups, then responses: synthetic from
        // the previous fit, real from the truth.
        draw_covariates(law, &law_chol, m, &mut rng, &mut synth.xs)?;
        synth.ys.clear();
        let mut overflowed = false;
        for i in 0..m {
            match glm_response(problem.family, synth.xs.row(i), &theta, &mut rng) {
                Ok(y) => synth.ys.push(y),
                Err(GlmError::PoissonOverflow { .. }) => {
                    overflowed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if overflowed {
            fill_failed(&mut traj, steps);
            return Ok(traj);
        }
        draw_covariates(law, &law_chol, n, &mut rng, &mut real.xs)?;
        real.ys.clear();
        for i in 0..n {
            real.ys
                .push(glm_response(problem.family, real.xs.row(i), &problem.theta_star, &mut rng)?);
        }

        let fit = fit_weighted_mle(problem.family, &real, &synth, w, &theta).or_else(|_| {
            // Cold restart once; iterates can wander far enough that the
            // warm start sits in a flat region.
            fit_weighted_mle(problem.family, &real, &synth, w, &vec![0.0; p])
        });
        match fit {
            Ok(fit) => {
                traj.steps.push(GlmStep {
                    theta_err: theta_sq_err(&fit.theta),
                    newton_iters: fit.newton_iters,
                    converged: true,
                });
                theta = fit.theta;
            }
            Err(_) => {
                fill_failed(&mut traj, steps);
                return Ok(traj);
            }
        }
    }
    debug_assert_eq!(traj.len(), steps + 1);
    Ok(traj)
}
