//! Result emission: fixed-schema CSV for plotting pipelines and a JSON
//! mirror carrying full run metadata for reproducibility.

use super::{ScenarioConfig, Sweep, SweepPoint};
use serde::Serialize;
use std::io::{self, Write};
use std::path::Path;

/// Version string stamped into JSON artifacts; overridable at build time.
pub fn build_version() -> &'static str {
    option_env!("RECMIX_BUILD_VERSION").unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
}

/// Writes points as CSV with the exact header
/// `grid_value,mean_error,ci_low,ci_high,failed`, ending with a newline.
pub fn write_csv<W: Write>(points: &[SweepPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "grid_value,mean_error,ci_low,ci_high,failed")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.grid_value, p.mean_error, p.ci_low, p.ci_high, p.failed
        )?;
    }
    Ok(())
}

pub fn emit_csv(points: &[SweepPoint], path: &Path) -> io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_csv(points, &mut file)?;
    file.flush()
}

#[derive(Serialize)]
struct JsonArtifact<'a> {
    metadata: Metadata<'a>,
    results: &'a [Sweep],
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ScenarioConfig,
    seed: u64,
    version: &'static str,
}

/// Serializes all sweeps plus a metadata block (config echo, seed, version)
/// as pretty JSON ending with a newline.
pub fn write_json<W: Write>(
    cfg: &ScenarioConfig,
    sweeps: &[Sweep],
    mut out: W,
) -> io::Result<()> {
    let artifact = JsonArtifact {
        metadata: Metadata { config: cfg, seed: cfg.seed, version: build_version() },
        results: sweeps,
    };
    serde_json::to_writer_pretty(&mut out, &artifact)?;
    writeln!(out)
}

pub fn emit_json(cfg: &ScenarioConfig, sweeps: &[Sweep], path: &Path) -> io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_json(cfg, sweeps, &mut file)?;
    file.flush()
}

/// Output file path for a labeled sweep: `base.csv` for the unlabeled sweep,
/// `base_<label>.csv` otherwise.
pub fn labeled_path(base: &str, label: &str, extension: &str) -> std::path::PathBuf {
    let stem = base.trim_end_matches(".csv").trim_end_matches(".json");
    if label.is_empty() {
        std::path::PathBuf::from(format!("{stem}.{extension}"))
    } else {
        std::path::PathBuf::from(format!("{stem}_{label}.{extension}"))
    }
}
