use std::path::Path;

use shapemed::{KnotSequence, SplineKind};

use crate::error::{CliError, CliResult};

pub fn parse_kind(s: &str) -> Result<SplineKind, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "i" | "ispline" | "i-spline" | "iquadratic" | "i-quadratic" => Ok(SplineKind::IQuadratic),
        "c" | "cspline" | "c-spline" | "ccubic" | "c-cubic" => Ok(SplineKind::CCubic),
        other => Err(format!(
            "unknown basis kind '{other}' (expected ispline or cspline)"
        )),
    }
}

/// `points` evenly spaced values from `from` to `to` inclusive.
pub fn grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..points)
            .map(|i| {
                if i + 1 == points {
                    to
                } else {
                    from + (to - from) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

/// CSV with columns `x, basis_1..basis_k`.
pub fn basis_csv(kind: SplineKind, knots: &KnotSequence, xs: &[f64]) -> CliResult<Vec<u8>> {
    let k = knots.num_bases();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("x".to_string()).chain((1..=k).map(|i| format!("basis_{i}")));
    w.write_record(header).map_err(CliError::other)?;
    let mut row = vec![0.0; k];
    for &x in xs {
        kind.eval_row(x, knots, &mut row);
        let fields = std::iter::once(x)
            .chain(row.iter().copied())
            .map(|v| v.to_string());
        w.write_record(fields).map_err(CliError::other)?;
    }
    w.into_inner().map_err(|e| CliError::other(e.into_error()))
}

pub fn knots_from_args(knots: &[f64]) -> CliResult<KnotSequence> {
    KnotSequence::new(knots.to_vec()).map_err(|e| CliError::input(e.to_string()))
}

pub fn write_output(bytes: &[u8], out: Option<&Path>) -> CliResult<()> {
    crate::simulate::write_output(bytes, out)
}
