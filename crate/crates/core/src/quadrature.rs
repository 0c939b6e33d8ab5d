//! Gauss–Legendre integration against a normal density.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence, started from the usual
/// Chebyshev-like guess.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp;
        loop {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Integration rule for expectations under a normal law.
///
/// The real line is truncated to `mean ± tail_sd·sd`, split at every supplied
/// breakpoint (spline knots) and further into panels no wider than
/// `max_panel_sd·sd`, and a `points`-node Gauss–Legendre rule is applied on
/// each panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "QuadratureParams", into = "QuadratureParams")]
pub struct QuadratureSpec {
    params: QuadratureParams,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureParams {
    pub points: usize,
    pub tail_sd: f64,
    pub max_panel_sd: f64,
}

impl From<QuadratureParams> for QuadratureSpec {
    fn from(params: QuadratureParams) -> Self {
        let (nodes, weights) = gauss_legendre(params.points.max(1));
        Self {
            params,
            nodes,
            weights,
        }
    }
}

impl From<QuadratureSpec> for QuadratureParams {
    fn from(spec: QuadratureSpec) -> Self {
        spec.params
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureParams {
            points: 20,
            tail_sd: 8.0,
            max_panel_sd: 1.0,
        }
        .into()
    }
}

impl QuadratureSpec {
    pub fn new(points: usize, tail_sd: f64, max_panel_sd: f64) -> Self {
        QuadratureParams {
            points,
            tail_sd,
            max_panel_sd,
        }
        .into()
    }

    pub fn params(&self) -> QuadratureParams {
        self.params
    }

    /// Nodes `m` and combined weights `w·φ(m)` for integrating against the
    /// `Normal(mean, var)` density. `breaks` outside the truncated range are
    /// ignored.
    pub fn normal_nodes(&self, mean: f64, var: f64, breaks: &[f64]) -> Result<Vec<(f64, f64)>> {
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::NonPositiveVariance(var));
        }
        let sd = var.sqrt();
        let lo = mean - self.params.tail_sd * sd;
        let hi = mean + self.params.tail_sd * sd;
        let mut cuts: Vec<f64> = std::iter::once(lo)
            .chain(breaks.iter().copied().filter(|&b| b > lo && b < hi))
            .chain(std::iter::once(hi))
            .collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();

        let norm = 1.0 / (2.0 * PI * var).sqrt();
        let max_width = self.params.max_panel_sd * sd;
        let mut out = Vec::new();
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
            let h = (b - a) / pieces as f64;
            for p in 0..pieces {
                let pa = a + p as f64 * h;
                let half = 0.5 * h;
                let mid = pa + half;
                for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                    let m = mid + half * x;
                    let z = m - mean;
                    let dens = norm * (-0.5 * z * z / var).exp();
                    out.push((m, w * half * dens));
                }
            }
        }
        Ok(out)
    }

    /// `E[f(M)]` for `M ~ Normal(mean, var)`.
    pub fn normal_expectation<F: Fn(f64) -> f64>(
        &self,
        f: F,
        mean: f64,
        var: f64,
        breaks: &[f64],
    ) -> Result<f64> {
        Ok(self
            .normal_nodes(mean, var, breaks)?
            .into_iter()
            .map(|(m, w)| w * f(m))
            .sum())
    }
}

/// Two-sided standard-normal critical value `z_{(1+level)/2}`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(0.5 * (1.0 + level)))
}
