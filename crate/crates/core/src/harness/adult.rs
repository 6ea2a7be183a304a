//! Adult census dataset ingestion and the real-data recursive-training
//! study: a logistic-regression weight sweep against a full-data pseudo
//! ground truth, and categorical distribution estimation via the weighted
//! ECDF chain.
//!
//! The loader is header-keyed (column order in the file is irrelevant),
//! drops any row containing a `?` cell, binarizes income at 50K, and
//! standardizes the five numeric features — raw `capital_gain` spans four
//! orders of magnitude, which makes Newton fitting needlessly
//! ill-conditioned. An intercept column is prepended to the feature matrix.
//! Real covariate rows are resampled with replacement each step; whether the
//! original protocol intended disjoint batches is unspecified, so this
//! choice is documented rather than assumed.

use super::{HarnessError, ModelKind, Scenario, ScenarioConfig, Sweep, SweepPoint};
use crate::cdf::{run_cdf_chain_discrete, WeightedEcdf};
use crate::gaussian::MixConfig;
use crate::glm::{fit_weighted_mle, glm_response, GlmData, GlmFamily};
use crate::linalg::Rows;
use crate::rng::{stream_id, RngStream};
use crate::harness::tail_limit_estimate;
use rand::Rng;
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdultError {
    #[error("missing required column `{name}`")]
    MissingColumn { name: String },
    #[error("row {line}: {detail}")]
    UnparseableRow { line: u64, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// The five numeric feature columns, in feature-matrix order.
pub const NUMERIC_COLUMNS: [&str; 5] =
    ["age", "education_num", "capital_gain", "capital_loss", "hours_per_week"];

/// The categorical columns estimated in the distribution task.
pub const CATEGORICAL_COLUMNS: [&str; 3] = ["workclass", "education", "marital_status"];

/// One categorical column: sorted level names and a per-row level index.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalColumn {
    pub name: String,
    pub levels: Vec<String>,
    pub indices: Vec<usize>,
}

impl CategoricalColumn {
    /// Embedding position of level `idx`: `(idx+1)/(L+1)`, strictly inside
    /// (0, 1) so the CvM machinery treats levels as interior atoms.
    pub fn position(&self, idx: usize) -> f64 {
        (idx as f64 + 1.0) / (self.levels.len() as f64 + 1.0)
    }

    /// Empirical distribution of the column as a weighted ECDF.
    pub fn empirical_distribution(&self) -> WeightedEcdf {
        let mut counts = vec![0usize; self.levels.len()];
        for &i in &self.indices {
            counts[i] += 1;
        }
        let total = self.indices.len() as f64;
        let atoms = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (self.position(i), c as f64 / total))
            .collect();
        WeightedEcdf::from_atoms(atoms).expect("empirical frequencies form a distribution")
    }
}

/// Cleaned Adult data: intercept + standardized numeric features, binary
/// income labels, and the categorical columns for the distribution task.
#[derive(Clone, Debug, PartialEq)]
pub struct AdultDataset {
    /// `len × 6` matrix: column 0 is the intercept, then [`NUMERIC_COLUMNS`]
    /// standardized to zero mean and unit variance.
    pub features: Rows,
    /// 1.0 iff income > 50K.
    pub labels: Vec<f64>,
    pub categoricals: Vec<CategoricalColumn>,
}

impl AdultDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Canonical column key: lowercase with `-`, `.`, and spaces mapped to `_`,
/// plus the `educational_num` spelling variant folded in.
fn normalize_header(raw: &str) -> String {
    let k: String = raw
        .trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == '-' || c == '.' || c == ' ' { '_' } else { c })
        .collect();
    if k == "educational_num" {
        "education_num".into()
    } else {
        k
    }
}

/// Loads and cleans the Adult CSV (comma-separated, header row, `?` for
/// missing): rows with any missing cell are dropped, numeric features are
/// standardized, income becomes a 0/1 label, and the categorical columns
/// are indexed against their alphabetically sorted level sets.
pub fn load_adult(path: &Path) -> Result<AdultDataset, AdultError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers: Vec<String> = reader.headers()?.iter().map(normalize_header).collect();
    let col = |name: &str| -> Result<usize, AdultError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AdultError::MissingColumn { name: name.into() })
    };
    let numeric_idx: Vec<usize> =
        NUMERIC_COLUMNS.iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let categorical_idx: Vec<usize> =
        CATEGORICAL_COLUMNS.iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let income_idx = col("income")?;

    let mut numeric_rows: Vec<[f64; 5]> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut categorical_raw: Vec<Vec<String>> = vec![Vec::new(); CATEGORICAL_COLUMNS.len()];

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().any(|field| field == "?") {
            continue;
        }
        let mut row = [0.0; 5];
        for (slot, &idx) in row.iter_mut().zip(&numeric_idx) {
            let field = record.get(idx).unwrap_or("");
            *slot = field.parse::<f64>().map_err(|_| AdultError::UnparseableRow {
                line,
                detail: format!("expected a number, got `{field}`"),
            })?;
        }
        let income = record.get(income_idx).unwrap_or("");
        let label = match income {
            i if i.starts_with(">50K") => 1.0,
            i if i.starts_with("<=50K") => 0.0,
            other => {
                return Err(AdultError::UnparseableRow {
                    line,
                    detail: format!("unrecognized income value `{other}`"),
                })
            }
        };
        numeric_rows.push(row);
        labels.push(label);
        for (store, &idx) in categorical_raw.iter_mut().zip(&categorical_idx) {
            store.push(record.get(idx).unwrap_or("").to_string());
        }
    }

    // Standardize numeric columns; constant columns stay at zero.
    let count = numeric_rows.len() as f64;
    let mut features = Rows::with_capacity(6, numeric_rows.len());
    let mut means = [0.0; 5];
    let mut sds = [1.0; 5];
    if !numeric_rows.is_empty() {
        for j in 0..5 {
            means[j] = numeric_rows.iter().map(|r| r[j]).sum::<f64>() / count;
            let var = numeric_rows
                .iter()
                .map(|r| (r[j] - means[j]) * (r[j] - means[j]))
                .sum::<f64>()
                / (count - 1.0).max(1.0);
            sds[j] = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
        }
    }
    for row in &numeric_rows {
        let mut full = [0.0; 6];
        full[0] = 1.0;
        for j in 0..5 {
            full[j + 1] = (row[j] - means[j]) / sds[j];
        }
        features.push(&full);
    }

    let categoricals = CATEGORICAL_COLUMNS
        .iter()
        .zip(categorical_raw)
        .map(|(&name, raw)| {
            let mut levels: Vec<String> = raw.to_vec();
            levels.sort();
            levels.dedup();
            let indices = raw
                .iter()
                .map(|v| levels.binary_search(v).expect("value present in level set"))
                .collect();
            CategoricalColumn { name: name.into(), levels, indices }
        })
        .collect();

    Ok(AdultDataset { features, labels, categoricals })
}

/// Pseudo ground-truth parameter: the logistic fit on the full dataset.
/// Deterministic — refitting the same data yields the identical vector.
pub fn fit_ground_truth(data: &AdultDataset) -> Result<Vec<f64>, HarnessError> {
    let full = GlmData::new(data.features.clone(), data.labels.clone());
    let p = data.features.dim();
    fit_weighted_mle(GlmFamily::Logistic, &full, &GlmData::default(), 1.0, &vec![0.0; p])
        .map(|fit| fit.theta)
        .map_err(|e| HarnessError::Sim(e.to_string()))
}

fn resample_rows<R: Rng>(data: &AdultDataset, count: usize, rng: &mut R) -> (Rows, Vec<f64>) {
    let p = data.features.dim();
    let mut xs = Rows::with_capacity(p, count);
    let mut ys = Vec::with_capacity(count);
    for _ in 0..count {
        let i = rng.gen_range(0..data.len());
        xs.push(data.features.row(i));
        ys.push(data.labels[i]);
    }
    (xs, ys)
}

/// One recursive logistic chain on resampled Adult rows: real responses are
/// the dataset's actual labels, synthetic responses are regenerated from
/// the previous fit. Returns squared errors against `theta_star` and the
/// step at which fitting failed, if any.
fn run_adult_logistic_chain(
    data: &AdultDataset,
    theta_star: &[f64],
    cfg: MixConfig,
    steps: usize,
    stream: RngStream,
) -> (Vec<f64>, Option<usize>) {
    let p = data.features.dim();
    let (n, m, w) = (cfg.n(), cfg.m(), cfg.w());
    let mut rng = stream.rng();
    let sq_err = |theta: &[f64]| -> f64 {
        let d: f64 =
            theta.iter().zip(theta_star).map(|(a, b)| (a - b) * (a - b)).sum();
        if d.is_finite() {
            d
        } else {
            f64::INFINITY
        }
    };
    let mut errors = Vec::with_capacity(steps + 1);

    let (xs, ys) = resample_rows(data, n, &mut rng);
    let real = GlmData::new(xs, ys);
    let mut theta = match fit_weighted_mle(
        GlmFamily::Logistic,
        &real,
        &GlmData::default(),
        1.0,
        &vec![0.0; p],
    ) {
        Ok(fit) => fit.theta,
        Err(_) => {
            errors.resize(steps + 1, f64::INFINITY);
            return (errors, Some(0));
        }
    };
    errors.push(sq_err(&theta));

    for t in 1..=steps {
        let (synth_xs, _) = resample_rows(data, m, &mut rng);
        let synth_ys: Vec<f64> = (0..m)
            .map(|i| {
                glm_response(GlmFamily::Logistic, synth_xs.row(i), &theta, &mut rng)
                    .expect("logistic responses never overflow")
            })
            .collect();
        let synth = GlmData::new(synth_xs, synth_ys);
        let (real_xs, real_ys) = resample_rows(data, n, &mut rng);
        let real = GlmData::new(real_xs, real_ys);

        let fit = fit_weighted_mle(GlmFamily::Logistic, &real, &synth, w, &theta)
            .or_else(|_| {
                fit_weighted_mle(GlmFamily::Logistic, &real, &synth, w, &vec![0.0; p])
            });
        match fit {
            Ok(fit) => {
                theta = fit.theta;
                errors.push(sq_err(&theta));
            }
            Err(_) => {
                errors.resize(steps + 1, f64::INFINITY);
                return (errors, Some(t));
            }
        }
    }
    (errors, None)
}

/// Runs the Adult study per `cfg.model`: `logistic` → the parameter-recovery
/// weight sweep; `cdf` → the three categorical distribution tasks; any other
/// model → all four sweeps. Streams are keyed by replication index, so the
/// w-grid is compared under common random numbers.
pub fn run_adult_study(
    cfg: &ScenarioConfig,
    data: &AdultDataset,
) -> Result<Vec<Sweep>, HarnessError> {
    if cfg.scenario != Scenario::AdultStudy {
        return Err(HarnessError::Config("run_adult_study requires scenario = adult_study".into()));
    }
    cfg.validate()?;
    if data.len() < 2 {
        return Err(HarnessError::Config("dataset has fewer than two usable rows".into()));
    }
    let mut sweeps = Vec::new();
    let logistic = matches!(cfg.model, ModelKind::Logistic)
        || !matches!(cfg.model, ModelKind::Cdf);
    let categorical = matches!(cfg.model, ModelKind::Cdf)
        || !matches!(cfg.model, ModelKind::Logistic);

    if logistic {
        let theta_star = fit_ground_truth(data)?;
        let reps = cfg.replications;
        let tasks: Vec<(usize, usize)> = (0..cfg.w_grid.len())
            .flat_map(|g| (0..reps).map(move |rep| (g, rep)))
            .collect();
        let results: Vec<(usize, Option<f64>)> = tasks
            .par_iter()
            .map(|&(g, rep)| {
                let mix = MixConfig::new(cfg.w_grid[g], cfg.n, cfg.m)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let stream = RngStream::new(cfg.seed, stream_id(0x21, rep as u64));
                let (errors, failed_from) =
                    run_adult_logistic_chain(data, &theta_star, mix, cfg.t, stream);
                let tail = match failed_from {
                    Some(_) => None,
                    None => Some(
                        tail_limit_estimate(&errors, cfg.tail_len)
                            .map_err(|e| HarnessError::Config(e.to_string()))?,
                    ),
                };
                Ok::<_, HarnessError>((g, tail))
            })
            .collect::<Result<_, _>>()?;
        let mut points = Vec::with_capacity(cfg.w_grid.len());
        for g in 0..cfg.w_grid.len() {
            let tails: Vec<f64> =
                results.iter().filter(|(gi, _)| *gi == g).filter_map(|(_, t)| *t).collect();
            points.push(super::aggregate(cfg.w_grid[g], &tails, reps - tails.len()));
        }
        sweeps.push(Sweep { label: "logistic".into(), points, notes: Vec::new() });
    }

    if categorical {
        for (c, column) in data.categoricals.iter().enumerate() {
            let truth = column.empirical_distribution();
            let reps = cfg.replications;
            let tasks: Vec<(usize, usize)> = (0..cfg.w_grid.len())
                .flat_map(|g| (0..reps).map(move |rep| (g, rep)))
                .collect();
            let results: Vec<(usize, f64)> = tasks
                .par_iter()
                .map(|&(g, rep)| {
                    let mix = MixConfig::new(cfg.w_grid[g], cfg.n, cfg.m)
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                    let stream =
                        RngStream::new(cfg.seed, stream_id(0x22 + c as u64, rep as u64));
                    let traj = run_cdf_chain_discrete(&truth, mix, cfg.t, stream);
                    let tail = tail_limit_estimate(&traj.cvm_errs, cfg.tail_len)
                        .map_err(|e| HarnessError::Config(e.to_string()))?;
                    Ok::<_, HarnessError>((g, tail))
                })
                .collect::<Result<_, _>>()?;
            let mut points = Vec::with_capacity(cfg.w_grid.len());
            for g in 0..cfg.w_grid.len() {
                let tails: Vec<f64> =
                    results.iter().filter(|(gi, _)| *gi == g).map(|(_, t)| *t).collect();
                points.push(super::aggregate(cfg.w_grid[g], &tails, reps - tails.len()));
            }
            sweeps.push(Sweep { label: column.name.clone(), points, notes: Vec::new() });
        }
    }
    Ok(sweeps)
}

/// True when `point`'s CI is strictly better than every other point's — a
/// helper for reading sweep argmins.
pub fn argmin_grid_value(points: &[SweepPoint]) -> Option<f64> {
    points
        .iter()
        .min_by(|a, b| a.mean_error.total_cmp(&b.mean_error))
        .map(|p| p.grid_value)
}
