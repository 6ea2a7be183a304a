//! Simulators and closed-form analytics for recursive estimation on mixed
//! real + synthetic data.
//!
//! Each simulator runs the same loop: at step `t` a model is fitted to `n`
//! fresh samples from the true distribution together with `m` samples drawn
//! from the step `t-1` model, with the real half receiving total weight `w`
//! and the synthetic half `1 - w`. Three model classes are covered:
//!
//! * [`gaussian`] — mean and covariance of a multivariate normal,
//! * [`glm`] — generalized linear models (linear, logistic, Poisson) fitted
//!   by weighted maximum likelihood,
//! * [`cdf`] — one-dimensional distribution functions via weighted empirical
//!   CDFs, scored by Cramér–von Mises error.
//!
//! [`analytics`] provides the matching closed-form error recursions, limits,
//! and optimal weights (notably the golden-ratio weight at `n = m`), so every
//! simulation can be checked against theory. [`harness`] orchestrates the
//! Monte Carlo scenarios behind the `recmix` CLI: replication fan-out over
//! reproducible RNG streams, weight/ratio sweeps, tail-limit estimation, and
//! CSV/JSON emission.

pub mod analytics;
pub mod cdf;
pub mod gaussian;
pub mod glm;
pub mod harness;
pub mod linalg;
pub mod rng;
