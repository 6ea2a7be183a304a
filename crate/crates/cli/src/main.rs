//! `recmix` — CLI driver for the recursive mixed-data training experiments.
//!
//! Subcommands map onto the harness scenarios: `simulate` runs one chain and
//! writes its full trajectory, `sweep` runs a weight or ratio sweep of
//! tail-averaged limiting errors, `collapse-demo` a per-step error curve at a
//! single weight, `analyze` prints closed-form tables with no simulation,
//! and `adult` the real-data census study.
//!
//! Settings resolve with CLI flags taking precedence over the `--config`
//! TOML file (flat keys named like the config fields), which in turn beats
//! built-in defaults. Exit codes: 0 success, 2 config error, 3 data/IO
//! error, 4 when more than half of all replications failed numerically.

use clap::{Args, Parser, Subcommand, ValueEnum};
use recmix_core::analytics;
use recmix_core::cdf::run_cdf_chain;
use recmix_core::gaussian::{run_gaussian_chain, MixConfig};
use recmix_core::glm::run_glm_chain;
use recmix_core::harness::adult::{load_adult, run_adult_study};
use recmix_core::harness::emit::{emit_csv, emit_json, labeled_path};
use recmix_core::harness::{
    gauss_truth, glm_problem, overall_failure_rate, run_scenario, HarnessError, ModelKind,
    Scenario, ScenarioConfig, Sweep,
};
use recmix_core::rng::{stream_id, RngStream};
use serde::Deserialize;
use std::io::Write;
use std::path::PathBuf;
use thiserror::Error;

// ── Errors and exit codes ───────────────────────────────────────────────────

#[derive(Debug, Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("simulation error: {0}")]
    Sim(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("numerical failure rate {:.1}% exceeds 50%", .0 * 100.0)]
    FailureRate(f64),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Sim(_) | CliError::Io(_) => 3,
            CliError::FailureRate(_) => 4,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(msg) => CliError::Config(msg),
            HarnessError::Data(e) => CliError::Data(e.to_string()),
            HarnessError::Sim(msg) => CliError::Sim(msg),
            HarnessError::Io(e) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

// ── Command-line surface ────────────────────────────────────────────────────

#[derive(Parser, Debug)]
#[command(
    name = "recmix",
    version,
    about = "Recursive training on weighted mixtures of real and synthetic data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Base RNG seed; replications derive independent streams from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replication fan-out (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output base path; `.csv`/`.json` and sweep labels are appended
    #[arg(long, global = true)]
    out: Option<String>,
    /// TOML config file with flat keys (scenario, model, n, m, t, w_grid, …);
    /// CLI flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single chain and write its trajectory as `t,error,clamped`
    Simulate(SimulateArgs),
    /// Sweep tail-averaged limiting error over a weight grid (--w-grid) or a
    /// real-to-synthetic ratio grid (--k-grid, optimal vs naive weighting)
    Sweep(SweepArgs),
    /// Per-step mean error curve at a single weight (collapse demonstrations)
    CollapseDemo(CollapseDemoArgs),
    /// Print closed-form optimal weights and limiting-error factors
    Analyze(AnalyzeArgs),
    /// Real-data study on the Adult census dataset
    Adult(AdultArgs),
}

/// Flags shared by every simulation-backed subcommand.
#[derive(Args, Clone, Debug)]
struct ChainArgs {
    /// Estimation task to drive
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Real samples per step
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic samples per step
    #[arg(long)]
    m: Option<usize>,
    /// Recursion horizon (number of update steps)
    #[arg(long = "steps", visible_alias = "T")]
    steps: Option<usize>,
    /// Monte Carlo replications
    #[arg(long, short = 'R')]
    replications: Option<usize>,
    /// Tail window length for the limiting-error estimate
    #[arg(long)]
    tail_len: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Real-data weight of the single chain
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Weight grid: `start:step:end` or comma-separated values
    #[arg(long)]
    w_grid: Option<Grid>,
    /// Ratio grid k = n/m: `start:step:end` or comma-separated values
    #[arg(long)]
    k_grid: Option<Grid>,
}

#[derive(Args, Debug)]
struct CollapseDemoArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Real-data weight of the demonstrated chains
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Ratio grid to tabulate
    #[arg(long, default_value = "0.01:0.02:0.19")]
    k_grid: Grid,
    /// Also print finite-sample CDF quantities for this n
    #[arg(long)]
    n: Option<usize>,
    /// … and this m
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args, Debug)]
struct AdultArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Path to the Adult census CSV (comma-separated, header row, `?` = missing)
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Which study tasks to run
    #[arg(long, value_enum, default_value = "all")]
    task: AdultTask,
    /// Weight grid: `start:step:end` or comma-separated values
    #[arg(long)]
    w_grid: Option<Grid>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModelArg {
    GaussMean,
    GaussCov,
    Linear,
    Logistic,
    Poisson,
    Cdf,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::GaussMean => ModelKind::GaussMean,
            ModelArg::GaussCov => ModelKind::GaussCov,
            ModelArg::Linear => ModelKind::Linear,
            ModelArg::Logistic => ModelKind::Logistic,
            ModelArg::Poisson => ModelKind::Poisson,
            ModelArg::Cdf => ModelKind::Cdf,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AdultTask {
    Logistic,
    Categorical,
    All,
}

impl AdultTask {
    /// The study selects tasks through the config's model field: `logistic`
    /// runs the parameter sweep, `cdf` the categorical tasks, anything else
    /// (the default model) all of them.
    fn model(self) -> ModelKind {
        match self {
            AdultTask::Logistic => ModelKind::Logistic,
            AdultTask::Categorical => ModelKind::Cdf,
            AdultTask::All => ModelKind::GaussMean,
        }
    }
}

// ── Grid parsing ────────────────────────────────────────────────────────────

/// A real grid given either as `start:step:end` (inclusive) or as a
/// comma-separated value list.
#[derive(Clone, Debug, PartialEq)]
struct Grid(Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_grid(s).map(Grid)
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parse = |tok: &str| -> Result<f64, String> {
        tok.trim().parse::<f64>().map_err(|_| format!("`{tok}` is not a number"))
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range grid must be start:step:end, got `{s}`"));
        }
        let (start, step, end) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if !(start.is_finite() && step.is_finite() && end.is_finite()) {
            return Err("grid endpoints must be finite".into());
        }
        if step <= 0.0 {
            return Err(format!("grid step must be positive, got {step}"));
        }
        if end < start {
            return Err(format!("grid end {end} is below start {start}"));
        }
        // The 1e-6 slack keeps an exactly-representable count like
        // (0.8−0.2)/0.02 = 29.999999999999996 from losing its last point.
        let count = ((end - start) / step + 1e-6).floor() as usize;
        if count > 1_000_000 {
            return Err("grid has more than 10^6 points".into());
        }
        Ok((0..=count)
            .map(|i| {
                let x = start + i as f64 * step;
                (x * 1e9).round() / 1e9
            })
            .collect())
    } else {
        let values: Vec<f64> = s.split(',').map(parse).collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err("grid is empty".into());
        }
        Ok(values)
    }
}

// ── Config resolution: CLI flag > config file > default ────────────────────

/// The `--config` file contents: every field optional, flat keys matching
/// the scenario-config field names. Unknown keys are rejected so typos
/// surface as config errors instead of silently applied defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    /// Accepted so complete config files round-trip, but the subcommand is
    /// the scenario selector; this key never overrides it.
    #[allow(dead_code)]
    scenario: Option<Scenario>,
    model: Option<ModelKind>,
    n: Option<usize>,
    m: Option<usize>,
    #[serde(alias = "T")]
    t: Option<usize>,
    replications: Option<usize>,
    w_grid: Option<Vec<f64>>,
    k_grid: Option<Vec<f64>>,
    seed: Option<u64>,
    tail_len: Option<usize>,
    output_path: Option<String>,
}

fn load_file_config(path: &PathBuf) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

/// Built-in scale defaults; subcommands override where the protocol differs
/// (the Adult study runs at n = m = 500, T = 100).
struct Defaults {
    model: ModelKind,
    n: usize,
    m: usize,
    t: usize,
    replications: usize,
    tail_len: usize,
}

const STANDARD: Defaults = Defaults {
    model: ModelKind::GaussMean,
    n: 100,
    m: 100,
    t: 200,
    replications: 2000,
    tail_len: 50,
};

const ADULT: Defaults =
    Defaults { model: ModelKind::GaussMean, n: 500, m: 500, t: 100, replications: 2000, tail_len: 50 };

const DEFAULT_SEED: u64 = 0xC0FFEE;

#[allow(clippy::too_many_arguments)]
fn resolve_config(
    scenario: Scenario,
    chain: &ChainArgs,
    cli: &Cli,
    file: &FileConfig,
    w_grid: Vec<f64>,
    k_grid: Vec<f64>,
    defaults: &Defaults,
) -> ScenarioConfig {
    ScenarioConfig {
        scenario,
        model: pick(chain.model.map(Into::into), file.model, defaults.model),
        n: pick(chain.n, file.n, defaults.n),
        m: pick(chain.m, file.m, defaults.m),
        t: pick(chain.steps, file.t, defaults.t),
        replications: pick(chain.replications, file.replications, defaults.replications),
        w_grid,
        k_grid,
        seed: pick(cli.seed, file.seed, DEFAULT_SEED),
        tail_len: pick(chain.tail_len, file.tail_len, defaults.tail_len),
        output_path: pick(cli.out.clone(), file.output_path.clone(), "results".into()),
    }
}

// ── Emission and reporting ──────────────────────────────────────────────────

/// Writes one CSV per sweep plus one JSON artifact, prints where they went
/// and each sweep's minimum, then flags a >50% numerical failure rate.
/// Outputs are written before the failure check so partial evidence is
/// never discarded.
fn report_and_emit(cfg: &ScenarioConfig, sweeps: &[Sweep]) -> Result<(), CliError> {
    for sweep in sweeps {
        let path = labeled_path(&cfg.output_path, &sweep.label, "csv");
        emit_csv(&sweep.points, &path)?;
        let best = sweep
            .points
            .iter()
            .min_by(|a, b| a.mean_error.total_cmp(&b.mean_error));
        match best {
            Some(p) => println!(
                "wrote {} (min mean_error {:.6} at grid value {})",
                path.display(),
                p.mean_error,
                p.grid_value
            ),
            None => println!("wrote {}", path.display()),
        }
    }
    let json = labeled_path(&cfg.output_path, "", "json");
    emit_json(cfg, sweeps, &json)?;
    println!("wrote {}", json.display());

    let rate = overall_failure_rate(sweeps, cfg.replications);
    if rate > 0.5 {
        return Err(CliError::FailureRate(rate));
    }
    if rate > 0.0 {
        println!("note: {:.1}% of replications failed numerically", rate * 100.0);
    }
    Ok(())
}

// ── Subcommand handlers ─────────────────────────────────────────────────────

fn cmd_simulate(args: &SimulateArgs, cli: &Cli, file: &FileConfig) -> Result<(), CliError> {
    let model = pick(args.chain.model.map(Into::into), file.model, STANDARD.model);
    let n = pick(args.chain.n, file.n, STANDARD.n);
    let m = pick(args.chain.m, file.m, STANDARD.m);
    let steps = pick(args.chain.steps, file.t, STANDARD.t);
    let seed = pick(cli.seed, file.seed, DEFAULT_SEED);
    let out_base = pick(cli.out.clone(), file.output_path.clone(), "results".into());
    let single_file_w = file.w_grid.as_ref().and_then(|g| match g[..] {
        [w] => Some(w),
        _ => None,
    });
    let w = args.w.or(single_file_w).ok_or_else(|| {
        CliError::Config("simulate needs --w (or a single-entry w_grid in the config file)".into())
    })?;
    let mix = MixConfig::new(w, n, m).map_err(|e| CliError::Config(e.to_string()))?;
    if steps < 1 {
        return Err(CliError::Config("need at least one recursion step".into()));
    }

    let stream = RngStream::new(seed, stream_id(model.stream_tag(), 0));
    // `clamped` marks steps whose covariance iterate needed a projection back
    // to the PSD cone; it is identically false for models without one.
    let rows: Vec<(usize, f64, bool)> = match model {
        ModelKind::GaussMean | ModelKind::GaussCov => {
            let traj = run_gaussian_chain(&gauss_truth(), mix, steps, stream)
                .map_err(|e| CliError::Sim(e.to_string()))?;
            traj.steps
                .iter()
                .enumerate()
                .map(|(t, s)| {
                    let err = if model == ModelKind::GaussMean { s.mean_err } else { s.cov_err };
                    (t, err, s.clamped)
                })
                .collect()
        }
        ModelKind::Linear | ModelKind::Logistic | ModelKind::Poisson => {
            let traj = run_glm_chain(&glm_problem(model), mix, steps, stream)
                .map_err(|e| CliError::Sim(e.to_string()))?;
            traj.steps.iter().enumerate().map(|(t, s)| (t, s.theta_err, false)).collect()
        }
        ModelKind::Cdf => run_cdf_chain(mix, steps, stream)
            .cvm_errs
            .iter()
            .enumerate()
            .map(|(t, &e)| (t, e, false))
            .collect(),
    };

    let path = labeled_path(&out_base, "", "csv");
    let mut out = std::fs::File::create(&path)?;
    writeln!(out, "t,error,clamped")?;
    for (t, error, clamped) in &rows {
        writeln!(out, "{t},{error},{clamped}")?;
    }
    out.flush()?;
    let (_, last, _) = rows.last().expect("steps >= 1 yields at least two rows");
    println!("wrote {} ({} steps, final error {last})", path.display(), rows.len() - 1);
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, cli: &Cli, file: &FileConfig) -> Result<(), CliError> {
    let w_grid = args.w_grid.clone().map(|g| g.0).or_else(|| file.w_grid.clone());
    let k_grid = args.k_grid.clone().map(|g| g.0).or_else(|| file.k_grid.clone());
    let (scenario, w_grid, k_grid) = match (w_grid, k_grid) {
        (Some(w), None) => (Scenario::GoldenSweep, w, vec![]),
        (None, Some(k)) => (Scenario::KSweep, vec![], k),
        (Some(_), Some(_)) => {
            return Err(CliError::Config("give either --w-grid or --k-grid, not both".into()))
        }
        (None, None) => {
            return Err(CliError::Config("sweep needs --w-grid or --k-grid".into()))
        }
    };
    let cfg = resolve_config(scenario, &args.chain, cli, file, w_grid, k_grid, &STANDARD);
    let sweeps = run_scenario(&cfg)?;
    report_and_emit(&cfg, &sweeps)
}

fn cmd_collapse_demo(
    args: &CollapseDemoArgs,
    cli: &Cli,
    file: &FileConfig,
) -> Result<(), CliError> {
    let w_grid = match (args.w, &file.w_grid) {
        (Some(w), _) => vec![w],
        (None, Some(g)) => g.clone(),
        (None, None) => return Err(CliError::Config("collapse-demo needs --w".into())),
    };
    let cfg = resolve_config(
        Scenario::CollapseDemo,
        &args.chain,
        cli,
        file,
        w_grid,
        vec![],
        &STANDARD,
    );
    let sweeps = run_scenario(&cfg)?;
    if let (Some(first), Some(last)) =
        (sweeps[0].points.get(1), sweeps[0].points.last())
    {
        println!(
            "mean error at t=1: {:.6}; at t={}: {:.6}",
            first.mean_error, cfg.t, last.mean_error
        );
    }
    report_and_emit(&cfg, &sweeps)
}

fn cmd_analyze(args: &AnalyzeArgs, cli: &Cli) -> Result<(), CliError> {
    let to_config_err = |e: analytics::DomainError| CliError::Config(e.to_string());
    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>12}",
        "k", "w_optimal", "w_naive", "C(w_opt,k)", "C(w_naive,k)"
    );
    let mut csv_rows = Vec::new();
    for &k in &args.k_grid.0 {
        let w_opt = analytics::optimal_weight(k).map_err(to_config_err)?;
        let w_naive = analytics::naive_weight(k).map_err(to_config_err)?;
        let c_opt = analytics::c_factor(w_opt, k).map_err(to_config_err)?;
        let c_naive = analytics::c_factor(w_naive, k).map_err(to_config_err)?;
        println!("{k:>8} {w_opt:>12.6} {w_naive:>12.6} {c_opt:>12.6} {c_naive:>12.6}");
        csv_rows.push(format!("{k},{w_opt},{w_naive},{c_opt},{c_naive}"));
    }
    if let (Some(n), Some(m)) = (args.n, args.m) {
        let w_cdf = analytics::cdf_optimal_weight(n, m).map_err(to_config_err)?;
        let improve = analytics::cdf_improvement_threshold(n, m).map_err(to_config_err)?;
        let collapse = analytics::cov_collapse_threshold(m).map_err(to_config_err)?;
        println!("cdf optimal weight at (n={n}, m={m}): {w_cdf:.6}");
        println!("cdf improvement threshold: w > {improve:.6}");
        println!("covariance collapse threshold at m={m}: w <= {collapse:.6}");
    }
    if let Some(out) = &cli.out {
        let path = labeled_path(out, "", "csv");
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "k,w_optimal,w_naive,c_optimal,c_naive")?;
        for row in &csv_rows {
            writeln!(f, "{row}")?;
        }
        f.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_adult(args: &AdultArgs, cli: &Cli, file: &FileConfig) -> Result<(), CliError> {
    let w_grid = args
        .w_grid
        .clone()
        .map(|g| g.0)
        .or_else(|| file.w_grid.clone())
        .ok_or_else(|| CliError::Config("adult needs --w-grid".into()))?;
    let mut patched = args.chain.clone();
    // --task is the adult-specific model selector; an explicit --model wins.
    if patched.model.is_none() && file.model.is_none() {
        patched.model = Some(match args.task.model() {
            ModelKind::Logistic => ModelArg::Logistic,
            ModelKind::Cdf => ModelArg::Cdf,
            _ => ModelArg::GaussMean,
        });
    }
    let cfg =
        resolve_config(Scenario::AdultStudy, &patched, cli, file, w_grid, vec![], &ADULT);
    let data = load_adult(&args.data).map_err(|e| CliError::Data(e.to_string()))?;
    println!("loaded {} rows from {}", data.len(), args.data.display());
    let sweeps = run_adult_study(&cfg, &data)?;
    report_and_emit(&cfg, &sweeps)
}

// ── Entry point ─────────────────────────────────────────────────────────────

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, cli, &file),
        Command::Sweep(args) => cmd_sweep(args, cli, &file),
        Command::CollapseDemo(args) => cmd_collapse_demo(args, cli, &file),
        Command::Analyze(args) => cmd_analyze(args, cli),
        Command::Adult(args) => cmd_adult(args, cli, &file),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
