use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use shapemed::simulation::{run_study, Method, Pattern, StudyConfig, StudyResult};
use shapemed::EffectKind;

use crate::error::{CliError, CliResult};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "SHAPEMED_THREADS";

#[derive(Serialize)]
struct TableRow {
    pattern: Pattern,
    method: Method,
    effect: EffectKind,
    sigma1: f64,
    coverage: f64,
    avg_abs_rel_bias: f64,
    avg_mse: f64,
    replicates: usize,
    failures: usize,
}

pub fn load_config(path: &Path, seed: Option<u64>) -> CliResult<StudyConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut config: StudyConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(config)
}

pub fn run(config: &StudyConfig) -> CliResult<StudyResult> {
    Ok(run_study(config)?)
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(CliError::other)?;
    }
    w.into_inner().map_err(|e| CliError::other(e.into_error()))
}

/// Summary table, one row per (method, effect, σ₁).
pub fn summary_csv(result: &StudyResult) -> CliResult<Vec<u8>> {
    csv_bytes(result.summaries.iter().map(|s| TableRow {
        pattern: s.pattern,
        method: s.method,
        effect: s.effect,
        sigma1: s.sigma1,
        coverage: s.coverage,
        avg_abs_rel_bias: s.avg_abs_rel_bias,
        avg_mse: s.avg_mse,
        replicates: s.replicates,
        failures: s.failures,
    }))
}

pub fn replicates_csv(result: &StudyResult) -> CliResult<Vec<u8>> {
    csv_bytes(&result.records)
}

pub fn write_output(bytes: &[u8], out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::other(e).context(format!("writing {}", path.display()))),
        None => Ok(std::io::stdout().lock().write_all(bytes)?),
    }
}

/// Fixed-width table for the terminal.
pub fn describe(result: &StudyResult) -> String {
    let c = &result.config;
    let mut s = format!(
        "{}: n = {}, {} replicates per sigma1, seed {}\n{:<17}{:<7}{:>8}{:>10}{:>14}{:>14}\n",
        c.pattern,
        c.n,
        c.reps,
        c.seed,
        "method",
        "effect",
        "sigma1",
        "coverage",
        "abs_rel_bias",
        "mse"
    );
    for r in &result.summaries {
        let _ = writeln!(
            s,
            "{:<17}{:<7}{:>8}{:>10.3}{:>14.3}{:>14.2}",
            r.method.label(),
            r.effect.label(),
            r.sigma1,
            r.coverage,
            r.avg_abs_rel_bias,
            r.avg_mse
        );
    }
    for f in &result.failures {
        let _ = writeln!(
            s,
            "failed: sigma1 {} replicate {}: {}",
            f.sigma1, f.replicate, f.message
        );
    }
    s
}
