use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapemed::effects::{linear_baseline, mediation_effects, total_effect};
use shapemed::{
    fit_mediator, fit_outcome, EffectEstimate, EffectQuery, MediatorFit, OutcomeFit,
    QuadratureSpec, ShapeSpec,
};

use crate::error::{CliError, CliResult};
use crate::ingest::{load_dataset, ColumnMapping, ConfounderEncoding};

/// Points in the fitted-curve table.
pub const CURVE_POINTS: usize = 101;

/// Everything `fit` needs besides the data file.
#[derive(Debug, Clone)]
pub struct FitRequest {
    pub input: PathBuf,
    pub columns: ColumnMapping,
    pub shapes: ShapeSpec,
    pub num_bases: usize,
    pub a: f64,
    pub a_star: f64,
    /// Mediator value for the CDE; sample mean when absent.
    pub m: Option<f64>,
    /// Confounder values, one per design column; sample means when absent.
    pub c: Option<Vec<f64>>,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: f64,
    pub f1: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub input: String,
    pub columns: ColumnMapping,
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub confounder_encoding: Vec<ConfounderEncoding>,
    pub query: EffectQuery,
    pub mediator_fit: MediatorFit,
    pub outcome_fit: OutcomeFit,
    /// CDE, NDE and NIE of the shape-restricted model.
    pub effects: Vec<EffectEstimate>,
    pub total_effect: EffectEstimate,
    /// CDE, NDE and NIE of the linear interaction model, for comparison.
    pub linear_baseline: Vec<EffectEstimate>,
    pub curves: Vec<CurvePoint>,
}

/// Evenly spaced grid over the knot range with both curves evaluated.
pub fn curve_table(fit: &OutcomeFit) -> Vec<CurvePoint> {
    let (lo, hi) = (fit.knots.lower(), fit.knots.upper());
    (0..CURVE_POINTS)
        .map(|i| {
            let m = if i + 1 == CURVE_POINTS {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64
            };
            CurvePoint {
                m,
                f1: fit.exposed_curve(m),
                f2: fit.unexposed_curve(m),
            }
        })
        .collect()
}

pub fn run_fit(req: &FitRequest) -> CliResult<FitReport> {
    let ingested = load_dataset(&req.input, &req.columns)?;
    let data = &ingested.data;
    let mut query = EffectQuery::at_means(data, req.level);
    query.a = req.a;
    query.a_star = req.a_star;
    if let Some(m) = req.m {
        query.m = m;
    }
    if let Some(c) = &req.c {
        if c.len() != data.num_confounders() {
            return Err(CliError::input(format!(
                "--at-confounders has {} values but the design has {} confounder columns ({})",
                c.len(),
                data.num_confounders(),
                data.confounder_names().join(",")
            )));
        }
        query.c.clone_from(c);
    }
    query.validate()?;

    let mediator = fit_mediator(data)?;
    let outcome = fit_outcome(data, req.shapes, req.num_bases)?;
    let effects = mediation_effects(&outcome, &mediator, &query, &QuadratureSpec::default())?;
    let total = total_effect(&outcome, &mediator, &query)?;
    let linear = linear_baseline(data, &query)?;
    Ok(FitReport {
        input: req.input.display().to_string(),
        columns: req.columns.clone(),
        rows_read: ingested.rows_read,
        rows_rejected: ingested.rows_rejected,
        confounder_encoding: ingested.encoding,
        query,
        curves: curve_table(&outcome),
        mediator_fit: mediator,
        outcome_fit: outcome,
        effects: effects.to_vec(),
        total_effect: total,
        linear_baseline: linear.to_vec(),
    })
}

pub fn write_report(report: &FitReport, out: Option<&Path>) -> CliResult<()> {
    let json = serde_json::to_string_pretty(report).map_err(CliError::other)?;
    match out {
        Some(path) => std::fs::write(path, json + "\n")
            .map_err(|e| CliError::other(e).context(format!("writing {}", path.display()))),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

/// One line per effect for the terminal.
pub fn describe(report: &FitReport) -> String {
    let mut s = format!(
        "{} rows read, {} rejected for missing values\n",
        report.rows_read, report.rows_rejected
    );
    for e in report
        .effects
        .iter()
        .chain(std::iter::once(&report.total_effect))
    {
        s += &format!(
            "{:>4} {:>12.4}  se {:>10.4}  {:.0}% CI [{:.4}, {:.4}]\n",
            e.kind.label(),
            e.estimate,
            e.std_error,
            100.0 * e.level,
            e.ci_lower,
            e.ci_upper
        );
    }
    s
}
