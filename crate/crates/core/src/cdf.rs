//! Recursive weighted empirical-CDF estimation with exact Cramér–von Mises
//! error evaluation.
//!
//! The CvM statistic `∫ (F̂(x) − F(x))² dF(x)` is distribution-free, so the
//! continuous truth is fixed to Uniform[0,1] and every atom position lives in
//! probability scale `u = F(x)`. Estimates are weighted step functions; their
//! CvM error against the uniform truth has a closed form (an interval sum of
//! cubics), which the chain records at every step. A discrete-truth variant
//! supports categorical data: positions are fixed rational embeddings and the
//! error integrates the squared CDF discrepancy against the truth's atoms.

use crate::gaussian::MixConfig;
use crate::rng::RngStream;
use rand::Rng;
use thiserror::Error;

/// Total atom weight must be 1 within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdfError {
    #[error("invalid ecdf atoms: {0}")]
    InvalidAtoms(String),
}

/// Neumaier-compensated sum: keeps the weight-sum check meaningful for atom
/// counts where naive accumulation error would exceed `WEIGHT_SUM_TOL`.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// A weighted empirical distribution on [0,1]: sorted atoms of positive
/// weight summing to 1. Equal positions are merged on construction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedEcdf {
    atoms: Vec<(f64, f64)>,
}

impl WeightedEcdf {
    /// Builds from `(position, weight)` pairs: validates the domain, merges
    /// equal positions, drops zero-weight atoms, and sorts.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self, CdfError> {
        for &(u, wt) in &atoms {
            if !(0.0..=1.0).contains(&u) || !u.is_finite() {
                return Err(CdfError::InvalidAtoms(format!("position {u} outside [0,1]")));
            }
            if !(wt >= 0.0) || !wt.is_finite() {
                return Err(CdfError::InvalidAtoms(format!("weight {wt} negative or non-finite")));
            }
        }
        let total = compensated_sum(atoms.iter().map(|a| a.1));
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CdfError::InvalidAtoms(format!("weights sum to {total}, expected 1")));
        }
        atoms.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (u, wt) in atoms {
            if wt == 0.0 {
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.0 == u => last.1 += wt,
                _ => merged.push((u, wt)),
            }
        }
        if merged.is_empty() {
            return Err(CdfError::InvalidAtoms("no atoms with positive weight".into()));
        }
        Ok(Self { atoms: merged })
    }

    /// Sorted `(position, weight)` atoms.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Right-continuous CDF value `G(u) = Σ_{position ≤ u} weight`.
    pub fn eval(&self, u: f64) -> f64 {
        self.atoms.iter().take_while(|a| a.0 <= u).map(|a| a.1).sum()
    }
}

/// Weighted combination of two sample batches in probability scale: `n`
/// atoms of weight `w/n` plus `m` atoms of weight `(1−w)/m`. A group with
/// zero weight may be empty and contributes nothing.
pub fn combine_ecdf(real_us: &[f64], synth_us: &[f64], w: f64) -> WeightedEcdf {
    assert!((0.0..=1.0).contains(&w), "weight w must lie in [0,1], got {w}");
    let mut atoms = Vec::with_capacity(real_us.len() + synth_us.len());
    for (us, weight) in [(real_us, w), (synth_us, 1.0 - w)] {
        if weight == 0.0 {
            continue;
        }
        assert!(!us.is_empty(), "group with weight {weight} must be nonempty");
        let per = weight / us.len() as f64;
        atoms.extend(us.iter().map(|&u| (u, per)));
    }
    WeightedEcdf::from_atoms(atoms).expect("combination of valid batches is a valid ecdf")
}

/// `count` i.i.d. draws from the atom distribution by inverse CDF on the
/// cumulative weights.
pub fn sample_from_ecdf<R: Rng + ?Sized>(f: &WeightedEcdf, count: usize, rng: &mut R) -> Vec<f64> {
    let mut cum = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    for &(_, wt) in f.atoms() {
        acc += wt;
        cum.push(acc);
    }
    let total = acc;
    (0..count)
        .map(|_| {
            let r = rng.gen::<f64>() * total;
            let idx = cum.partition_point(|&c| c < r).min(f.len() - 1);
            f.atoms()[idx].0
        })
        .collect()
}

/// Exact Cramér–von Mises error `∫₀¹ (G(u) − u)² du` of the step function
/// `G` against the uniform truth: over each interval `[a, b)` on which
/// `G ≡ c`, the integral is `[(c − a)³ − (c − b)³] / 3`.
pub fn cvm_error(f: &WeightedEcdf) -> f64 {
    let mut total = 0.0;
    let mut level = 0.0;
    let mut left = 0.0;
    let cube = |x: f64| x * x * x;
    for &(u, wt) in f.atoms() {
        total += (cube(level - left) - cube(level - u)) / 3.0;
        level += wt;
        left = u;
    }
    total += (cube(level - left) - cube(level - 1.0)) / 3.0;
    total
}

/// CvM error of `f` against a discrete truth:
/// `Σ_c (F̂(u_c) − F(u_c))² · p_c` over the truth's atoms, with both CDFs
/// evaluated right-continuously.
pub fn cvm_error_against_discrete(f: &WeightedEcdf, truth: &WeightedEcdf) -> f64 {
    let mut total = 0.0;
    let mut truth_cum = 0.0;
    let mut f_cum = 0.0;
    let mut f_iter = f.atoms().iter().peekable();
    for &(u, p) in truth.atoms() {
        while let Some(&&(fu, fw)) = f_iter.peek() {
            if fu <= u {
                f_cum += fw;
                f_iter.next();
            } else {
                break;
            }
        }
        truth_cum += p;
        let d = f_cum - truth_cum;
        total += d * d * p;
    }
    total
}

/// Step-indexed CvM errors; a `T`-step run has `T + 1` entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CdfTrajectory {
    pub cvm_errs: Vec<f64>,
}

impl CdfTrajectory {
    pub fn len(&self) -> usize {
        self.cvm_errs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cvm_errs.is_empty()
    }
}

/// Runs the recursive weighted-ECDF chain against the Uniform[0,1] truth.
///
/// Step 0 is the plain ECDF of `cfg.n()` uniform draws. Step `t ≥ 1` draws
/// `cfg.m()` synthetic points from the previous estimate and `cfg.n()` fresh
/// uniform points, then combines them with weight `w`. Atom merging keeps
/// every estimate at `O(n + m)` atoms.
pub fn run_cdf_chain(cfg: MixConfig, steps: usize, stream: RngStream) -> CdfTrajectory {
    let truth = None;
    run_chain_impl(truth, cfg, steps, stream)
}

/// Discrete-truth variant: real draws come from `truth` instead of the
/// uniform law and errors are measured by [`cvm_error_against_discrete`].
pub fn run_cdf_chain_discrete(
    truth: &WeightedEcdf,
    cfg: MixConfig,
    steps: usize,
    stream: RngStream,
) -> CdfTrajectory {
    run_chain_impl(Some(truth), cfg, steps, stream)
}

fn run_chain_impl(
    truth: Option<&WeightedEcdf>,
    cfg: MixConfig,
    steps: usize,
    stream: RngStream,
) -> CdfTrajectory {
    let (n, m, w) = (cfg.n(), cfg.m(), cfg.w());
    let mut rng = stream.rng();
    let draw_real = |rng: &mut rand_chacha::ChaCha8Rng, count: usize| -> Vec<f64> {
        match truth {
            None => (0..count).map(|_| rng.gen::<f64>()).collect(),
            Some(t) => sample_from_ecdf(t, count, rng),
        }
    };
    let error = |est: &WeightedEcdf| -> f64 {
        let e = match truth {
            None => cvm_error(est),
            Some(t) => cvm_error_against_discrete(est, t),
        };
        debug_assert!((0.0..=1.0 / 3.0 + 1e-12).contains(&e), "cvm error {e} out of range");
        e
    };

    let mut traj = CdfTrajectory { cvm_errs: Vec::with_capacity(steps + 1) };
    let real0 = draw_real(&mut rng, n);
    let mut est = combine_ecdf(&real0, &[], 1.0);
    traj.cvm_errs.push(error(&est));
    for _t in 1..=steps {
        let synth = sample_from_ecdf(&est, m, &mut rng);
        let real = draw_real(&mut rng, n);
        est = combine_ecdf(&real, &synth, w);
        traj.cvm_errs.push(error(&est));
    }
    debug_assert_eq!(traj.len(), steps + 1);
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics;
    use crate::rng::stream_id;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rayon::prelude::*;

    const SEED: u64 = 0xcdf_0003;

    fn mean_and_se(samples: &[f64]) -> (f64, f64) {
        let r = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / r;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0);
        (mean, (var / r).sqrt())
    }

    // ── construction and combination ─────────────────────────────────────

    #[test]
    fn from_atoms_validates_and_merges() {
        let f = WeightedEcdf::from_atoms(vec![(0.5, 0.25), (0.2, 0.5), (0.5, 0.25)]).unwrap();
        assert_eq!(f.atoms(), &[(0.2, 0.5), (0.5, 0.5)]);
        assert!(WeightedEcdf::from_atoms(vec![(1.5, 1.0)]).is_err());
        assert!(WeightedEcdf::from_atoms(vec![(0.5, -0.1), (0.6, 1.1)]).is_err());
        assert!(WeightedEcdf::from_atoms(vec![(0.5, 0.9)]).is_err());
        assert!(WeightedEcdf::from_atoms(vec![(0.5, 0.0), (0.6, 1.0)])
            .unwrap()
            .atoms()
            .len()
            == 1);
    }

    #[test]
    fn combine_examples() {
        // w=1 is the plain ECDF of the real batch.
        let f = combine_ecdf(&[0.3, 0.1], &[0.9], 1.0);
        assert_eq!(f.atoms(), &[(0.1, 0.5), (0.3, 0.5)]);

        // Two singleton batches at w=1/2.
        let f = combine_ecdf(&[0.2], &[0.8], 0.5);
        assert_eq!(f.atoms(), &[(0.2, 0.5), (0.8, 0.5)]);

        // w = n/(n+m) reduces to the pooled unweighted ECDF.
        let real = [0.1, 0.4, 0.6];
        let synth = [0.2, 0.9];
        let pooled_w = real.len() as f64 / (real.len() + synth.len()) as f64;
        let f = combine_ecdf(&real, &synth, pooled_w);
        let mut all: Vec<f64> = real.iter().chain(&synth).copied().collect();
        all.sort_by(f64::total_cmp);
        let plain = WeightedEcdf::from_atoms(all.iter().map(|&u| (u, 0.2)).collect()).unwrap();
        for (a, b) in f.atoms().iter().zip(plain.atoms()) {
            assert_eq!(a.0, b.0);
            assert_relative_eq!(a.1, b.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn eval_is_right_continuous_cdf() {
        let f = WeightedEcdf::from_atoms(vec![(0.2, 0.5), (0.8, 0.5)]).unwrap();
        assert_eq!(f.eval(0.1), 0.0);
        assert_eq!(f.eval(0.2), 0.5);
        assert_eq!(f.eval(0.5), 0.5);
        assert_eq!(f.eval(0.8), 1.0);
        assert_eq!(f.eval(1.0), 1.0);
    }

    // ── sampling ─────────────────────────────────────────────────────────

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let single = WeightedEcdf::from_atoms(vec![(0.42, 1.0)]).unwrap();
        assert!(sample_from_ecdf(&single, 100, &mut rng).iter().all(|&u| u == 0.42));

        let pair = WeightedEcdf::from_atoms(vec![(0.2, 0.5), (0.8, 0.5)]).unwrap();
        let draws = sample_from_ecdf(&pair, 100_000, &mut rng);
        let frac = draws.iter().filter(|&&u| u == 0.2).count() as f64 / 1e5;
        assert!((frac - 0.5).abs() < 0.01);

        let mut r1 = RngStream::new(SEED, 5).rng();
        let mut r2 = RngStream::new(SEED, 5).rng();
        assert_eq!(sample_from_ecdf(&pair, 50, &mut r1), sample_from_ecdf(&pair, 50, &mut r2));
    }

    // ── CvM closed form ──────────────────────────────────────────────────

    #[test]
    fn cvm_error_examples() {
        // Near-perfect fit: ~10⁶ equally spaced atoms (dyadic weights so the
        // total is exactly 1).
        let count = 1usize << 20;
        let per = 1.0 / count as f64;
        let atoms: Vec<(f64, f64)> =
            (1..=count).map(|i| (i as f64 * per, per)).collect();
        let f = WeightedEcdf::from_atoms(atoms).unwrap();
        assert!(cvm_error(&f) < 1e-6);

        // All mass at zero: ∫ (1 − u)² du = 1/3.
        let f = WeightedEcdf::from_atoms(vec![(0.0, 1.0)]).unwrap();
        assert_relative_eq!(cvm_error(&f), 1.0 / 3.0, epsilon = 1e-15);

        // Plain n-atom ECDF of uniform draws averages to 1/(6n).
        let n = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
        let vals: Vec<f64> = (0..10_000)
            .map(|_| {
                let us: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
                cvm_error(&combine_ecdf(&us, &[], 1.0))
            })
            .collect();
        let (mean, se) = mean_and_se(&vals);
        let expect = 1.0 / (6.0 * n as f64);
        assert!((mean - expect).abs() <= 3.0 * se, "{mean} vs {expect} (se {se})");
    }

    /// Closed-form interval sum equals brute-force midpoint quadrature. Atom
    /// positions are snapped to the quadrature grid so the step
    /// discontinuities sit exactly on cell boundaries, making the midpoint
    /// rule itself exact up to smooth-part error ≪ 1e-6.
    #[test]
    fn cvm_error_matches_quadrature_oracle() {
        let grid = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
        for _case in 0..50 {
            let n_atoms = rng.gen_range(1..40);
            let mut atoms: Vec<(f64, f64)> = (0..n_atoms)
                .map(|_| {
                    let pos = rng.gen_range(1..grid) as f64 / grid as f64;
                    (pos, rng.gen_range(0.01..1.0))
                })
                .collect();
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            for a in &mut atoms {
                a.1 /= total;
            }
            let f = WeightedEcdf::from_atoms(atoms).unwrap();

            let h = 1.0 / grid as f64;
            let mut quad = 0.0;
            let mut level = 0.0;
            let mut iter = f.atoms().iter().peekable();
            for cell in 0..grid {
                let mid = (cell as f64 + 0.5) * h;
                while let Some(&&(u, wt)) = iter.peek() {
                    if u <= mid {
                        level += wt;
                        iter.next();
                    } else {
                        break;
                    }
                }
                let d: f64 = level - mid;
                quad += d * d * h;
            }
            let exact = cvm_error(&f);
            assert!(
                (exact - quad).abs() < 1e-6,
                "closed form {exact} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn discrete_cvm_hand_case_and_ecdf_rate() {
        let truth = WeightedEcdf::from_atoms(vec![(0.2, 0.5), (0.8, 0.5)]).unwrap();
        let est = WeightedEcdf::from_atoms(vec![(0.2, 1.0)]).unwrap();
        // (1 − 0.5)²·0.5 at u=0.2 plus (1 − 1)²·0.5 at u=0.8.
        assert_relative_eq!(cvm_error_against_discrete(&est, &truth), 0.125, epsilon = 1e-15);

        // Plain ECDF of n draws from a discrete truth has expected error
        // Σ F(u_c)(1 − F(u_c)) p_c / n.
        let truth =
            WeightedEcdf::from_atoms(vec![(0.25, 0.5), (0.5, 0.3), (0.75, 0.2)]).unwrap();
        let v: f64 = {
            let mut cum = 0.0;
            truth
                .atoms()
                .iter()
                .map(|&(_, p)| {
                    cum += p;
                    cum * (1.0 - cum) * p
                })
                .sum()
        };
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
        let vals: Vec<f64> = (0..4000)
            .map(|_| {
                let us = sample_from_ecdf(&truth, n, &mut rng);
                cvm_error_against_discrete(&combine_ecdf(&us, &[], 1.0), &truth)
            })
            .collect();
        let (mean, se) = mean_and_se(&vals);
        let expect = v / n as f64;
        assert!((mean - expect).abs() <= 3.0 * se, "{mean} vs {expect} (se {se})");
    }

    // ── chains ───────────────────────────────────────────────────────────

    #[test]
    fn chain_shape_and_determinism() {
        let cfg = MixConfig::new(0.6, 20, 15).unwrap();
        let a = run_cdf_chain(cfg, 30, RngStream::new(3, 4));
        let b = run_cdf_chain(cfg, 30, RngStream::new(3, 4));
        assert_eq!(a, b);
        assert_eq!(a.len(), 31);
        assert!(a.cvm_errs.iter().all(|e| (0.0..=1.0 / 3.0).contains(e)));
    }

    /// w=1 chains are i.i.d. plain ECDFs: every step averages to 1/(6n).
    #[test]
    fn real_only_chain_stays_at_ecdf_rate() {
        let n = 50;
        let cfg = MixConfig::new(1.0, n, 2).unwrap();
        let reps = 3000;
        let trajs: Vec<Vec<f64>> = (0..reps)
            .into_par_iter()
            .map(|rep| run_cdf_chain(cfg, 5, RngStream::new(SEED, stream_id(41, rep))).cvm_errs)
            .collect();
        let expect = 1.0 / (6.0 * n as f64);
        for t in 0..=5 {
            let vals: Vec<f64> = trajs.iter().map(|tr| tr[t]).collect();
            let (mean, se) = mean_and_se(&vals);
            assert!(
                (mean - expect).abs() <= 3.0 * se,
                "t={t}: {mean} vs {expect} (se {se})"
            );
        }
    }

    /// Fully synthetic chains converge to the distribution-free plateau 1/6.
    #[test]
    fn fully_synthetic_chain_approaches_one_sixth() {
        let cfg = MixConfig::new(0.0, 100, 100).unwrap();
        let reps = 2000;
        let finals: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let traj = run_cdf_chain(cfg, 500, RngStream::new(SEED, stream_id(42, rep)));
                traj.cvm_errs[500]
            })
            .collect();
        let (mean, _) = mean_and_se(&finals);
        assert!(
            (mean - 1.0 / 6.0).abs() / (1.0 / 6.0) < 0.05,
            "plateau {mean} vs 1/6"
        );
    }

    /// The optimally weighted tail sits strictly below the real-only tail.
    #[test]
    fn optimal_weight_beats_real_only() {
        let (n, m) = (100, 100);
        let w_star = analytics::cdf_optimal_weight(n, m).unwrap();
        let (steps, tail) = (200, 50);
        let reps = 2000;
        let tails: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let stream = RngStream::new(SEED, stream_id(43, rep));
                let tail_mean = |w: f64| {
                    let traj =
                        run_cdf_chain(MixConfig::new(w, n, m).unwrap(), steps, stream);
                    traj.cvm_errs[steps + 1 - tail..].iter().sum::<f64>() / tail as f64
                };
                (tail_mean(w_star), tail_mean(1.0))
            })
            .collect();
        let opt = tails.iter().map(|t| t.0).sum::<f64>() / reps as f64;
        let plain = tails.iter().map(|t| t.1).sum::<f64>() / reps as f64;
        assert!(opt < plain, "w* tail {opt} should beat w=1 tail {plain}");
        // Both ends agree with the closed-form limits.
        let opt_theory = analytics::cdf_limit_error(w_star, n, m).unwrap();
        let plain_theory = 1.0 / (6.0 * n as f64);
        assert_relative_eq!(opt, opt_theory, max_relative = 0.05);
        assert_relative_eq!(plain, plain_theory, max_relative = 0.05);
    }

    /// One-step recursion: the per-replication residual
    /// err_{t+1} − (1/6)[w²/n + (1−w)²/m] − (1−w)²(1 − 1/m)·err_t
    /// has zero mean at every probed step.
    #[test]
    fn one_step_recursion_holds() {
        let (w, n, m) = (0.5, 30, 40);
        let cfg = MixConfig::new(w, n, m).unwrap();
        let inject = (w * w / n as f64 + (1.0 - w) * (1.0 - w) / m as f64) / 6.0;
        let rho = (1.0 - w) * (1.0 - w) * (1.0 - 1.0 / m as f64);
        let reps = 6000;
        let steps = 6;
        let residuals: Vec<Vec<f64>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let errs =
                    run_cdf_chain(cfg, steps, RngStream::new(SEED, stream_id(44, rep))).cvm_errs;
                (1..=steps).map(|t| errs[t] - rho * errs[t - 1] - inject).collect()
            })
            .collect();
        for t in 0..steps {
            let at_t: Vec<f64> = residuals.iter().map(|r| r[t]).collect();
            let (mean, se) = mean_and_se(&at_t);
            assert!(
                mean.abs() <= 3.0 * se,
                "step {}: residual {mean} exceeds 3·SE {}",
                t + 1,
                3.0 * se
            );
        }
    }

    /// E[G_t(u)] = u at fixed probe points across chain steps.
    #[test]
    fn chain_estimates_are_unbiased() {
        let cfg = MixConfig::new(0.6, 25, 25).unwrap();
        let reps = 5000;
        let probes = [0.25, 0.5, 0.75];
        let checkpoints = [1usize, 5, 20];
        let evals: Vec<Vec<f64>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let stream = RngStream::new(SEED, stream_id(45, rep));
                let (n, m, w) = (cfg.n(), cfg.m(), cfg.w());
                let mut rng = stream.rng();
                let real0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let mut est = combine_ecdf(&real0, &[], 1.0);
                let mut out = Vec::new();
                for t in 1..=20 {
                    let synth = sample_from_ecdf(&est, m, &mut rng);
                    let real: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                    est = combine_ecdf(&real, &synth, w);
                    if checkpoints.contains(&t) {
                        out.extend(probes.iter().map(|&u| est.eval(u)));
                    }
                }
                out
            })
            .collect();
        for c in 0..checkpoints.len() {
            for (pi, &u) in probes.iter().enumerate() {
                let vals: Vec<f64> = evals.iter().map(|e| e[c * probes.len() + pi]).collect();
                let (mean, se) = mean_and_se(&vals);
                assert!(
                    (mean - u).abs() <= 3.0 * se,
                    "t={} u={u}: E[G(u)] = {mean} (se {se})",
                    checkpoints[c]
                );
            }
        }
    }

    // ── property tests ───────────────────────────────────────────────────

    fn arb_ecdf() -> impl Strategy<Value = WeightedEcdf> {
        prop::collection::vec((0.0..=1.0f64, 0.01..1.0f64), 1..50).prop_map(|mut atoms| {
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            for a in &mut atoms {
                a.1 /= total;
            }
            WeightedEcdf::from_atoms(atoms).unwrap()
        })
    }

    proptest! {
        #[test]
        fn cvm_error_is_bounded(f in arb_ecdf()) {
            let e = cvm_error(&f);
            prop_assert!((0.0..=1.0 / 3.0 + 1e-12).contains(&e), "error {e}");
        }

        #[test]
        fn eval_is_monotone_and_reaches_one(f in arb_ecdf()) {
            let mut prev = 0.0;
            for i in 0..=20 {
                let g = f.eval(i as f64 / 20.0);
                prop_assert!(g + 1e-12 >= prev);
                prev = g;
            }
            prop_assert!((f.eval(1.0) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn samples_come_from_atom_support(f in arb_ecdf(), seed in 0u64..1024) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draws = sample_from_ecdf(&f, 64, &mut rng);
            for d in draws {
                prop_assert!(f.atoms().iter().any(|&(u, _)| u == d));
            }
        }
    }
}
