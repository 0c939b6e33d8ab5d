//! Outcome and mediator models.
//!
//! The outcome model is
//!
//! ```text
//! Y = β₀ + β₁A + f₁(M)·A + f₂(M)·(1 − A) + β₄ᵀC + ε₁
//! ```
//!
//! with `f₁`, `f₂` shape-restricted spline curves for the exposed and
//! unexposed groups, and the mediator model is the linear regression
//! `M = γ₀ + γ₁A + γ₂ᵀC + ε₂`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone::{self, project_onto_cone, refit_active, ConeProblem};
use crate::effects::eval_f;
use crate::linalg::{hcat, ols, serde_rows};
use crate::spline::{basis_matrix, BasisKind, KnotSequence, SplineKind};
use crate::{Error, Result};

/// Declared shape of a mediator–outcome curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Increasing,
    Decreasing,
    Convex,
    Concave,
}

impl Shape {
    /// Increasing/decreasing use I-splines, convex/concave use C-splines;
    /// decreasing and concave flip the basis sign.
    pub fn basis_kind(self) -> BasisKind {
        match self {
            Shape::Increasing => BasisKind::new(SplineKind::IQuadratic, false),
            Shape::Decreasing => BasisKind::new(SplineKind::IQuadratic, true),
            Shape::Convex => BasisKind::new(SplineKind::CCubic, false),
            Shape::Concave => BasisKind::new(SplineKind::CCubic, true),
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "increasing" | "inc" => Ok(Shape::Increasing),
            "decreasing" | "dec" => Ok(Shape::Decreasing),
            "convex" => Ok(Shape::Convex),
            "concave" => Ok(Shape::Concave),
            other => Err(Error::InvalidArgument(format!(
                "unknown shape '{other}' (expected increasing, decreasing, convex or concave)"
            ))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::Increasing => "increasing",
            Shape::Decreasing => "decreasing",
            Shape::Convex => "convex",
            Shape::Concave => "concave",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub exposed_shape: Shape,
    pub unexposed_shape: Shape,
}

impl ShapeSpec {
    pub fn new(exposed_shape: Shape, unexposed_shape: Shape) -> Self {
        Self {
            exposed_shape,
            unexposed_shape,
        }
    }
}

/// Observed data: outcome, binary exposure, mediator and confounders.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcome: DVector<f64>,
    exposure: DVector<f64>,
    mediator: DVector<f64>,
    confounders: DMatrix<f64>,
    confounder_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        outcome: DVector<f64>,
        exposure: DVector<f64>,
        mediator: DVector<f64>,
        confounders: DMatrix<f64>,
        confounder_names: Vec<String>,
    ) -> Result<Self> {
        let n = outcome.len();
        if exposure.len() != n || mediator.len() != n || confounders.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "outcome has {n} rows, exposure {}, mediator {}, confounders {}",
                exposure.len(),
                mediator.len(),
                confounders.nrows()
            )));
        }
        if confounder_names.len() != confounders.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} confounder names for {} columns",
                confounder_names.len(),
                confounders.ncols()
            )));
        }
        let all_finite = outcome
            .iter()
            .chain(mediator.iter())
            .chain(confounders.iter())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidData("non-finite value in data".into()));
        }
        if let Some(bad) = exposure.iter().find(|&&a| a != 0.0 && a != 1.0) {
            return Err(Error::InvalidData(format!(
                "exposure must be 0 or 1, found {bad}"
            )));
        }
        Ok(Self {
            outcome,
            exposure,
            mediator,
            confounders,
            confounder_names,
        })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn num_confounders(&self) -> usize {
        self.confounders.ncols()
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.outcome
    }

    pub fn exposure(&self) -> &DVector<f64> {
        &self.exposure
    }

    pub fn mediator(&self) -> &DVector<f64> {
        &self.mediator
    }

    pub fn confounders(&self) -> &DMatrix<f64> {
        &self.confounders
    }

    pub fn confounder_names(&self) -> &[String] {
        &self.confounder_names
    }

    pub fn mediator_mean(&self) -> f64 {
        self.mediator.mean()
    }

    pub fn confounder_means(&self) -> Vec<f64> {
        self.confounders.column_iter().map(|c| c.mean()).collect()
    }

    /// Number of exposed units.
    pub fn num_exposed(&self) -> usize {
        self.exposure.iter().filter(|&&a| a == 1.0).count()
    }

    /// Copy without confounder columns that are constant in this sample;
    /// such columns are collinear with the intercept.
    pub fn without_constant_confounders(&self) -> Dataset {
        let keep: Vec<usize> = (0..self.num_confounders())
            .filter(|&j| {
                let c = self.confounders.column(j);
                c.iter().any(|&v| v != c[0])
            })
            .collect();
        Dataset {
            outcome: self.outcome.clone(),
            exposure: self.exposure.clone(),
            mediator: self.mediator.clone(),
            confounders: self.confounders.select_columns(&keep),
            confounder_names: keep
                .iter()
                .map(|&j| self.confounder_names[j].clone())
                .collect(),
        }
    }
}

/// Row-wise scaling of `matrix` by `column` (face-splitting product).
pub fn face_split(column: &DVector<f64>, matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if column.len() != matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "column has {} rows, matrix has {}",
            column.len(),
            matrix.nrows()
        )));
    }
    let mut out = matrix.clone();
    for (mut row, &a) in out.row_iter_mut().zip(column.iter()) {
        row *= a;
    }
    Ok(out)
}

/// Column blocks of the outcome design.
///
/// `w0` holds the intercept plus the identity terms `M·A`, `M·(1−A)` of any
/// C-spline curve, `w` is `[A, C]`, and `z1`, `z0` are the (possibly
/// negated) spline blocks of the exposed and unexposed curves.
#[derive(Debug, Clone)]
pub struct DesignPartition {
    pub w0: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub z1: DMatrix<f64>,
    pub z0: DMatrix<f64>,
    /// Labels for the columns of `[w0, w, z1, z0]`.
    pub column_labels: Vec<String>,
    pub exposed: BasisKind,
    pub unexposed: BasisKind,
}

impl DesignPartition {
    /// Unconstrained block `V = [W₀, W]`.
    pub fn v(&self) -> DMatrix<f64> {
        hcat(&[&self.w0, &self.w]).expect("blocks share row count")
    }

    /// Constrained block `Z = [Z₁, Z₀]`.
    pub fn z(&self) -> DMatrix<f64> {
        hcat(&[&self.z1, &self.z0]).expect("blocks share row count")
    }

    pub fn num_columns(&self) -> usize {
        self.w0.ncols() + self.w.ncols() + self.z1.ncols() + self.z0.ncols()
    }
}

pub fn build_outcome_design(
    data: &Dataset,
    shapes: ShapeSpec,
    knots: &KnotSequence,
) -> Result<DesignPartition> {
    let n = data.n();
    let exposed = shapes.exposed_shape.basis_kind();
    let unexposed = shapes.unexposed_shape.basis_kind();
    let a = data.exposure();
    let not_a = a.map(|v| 1.0 - v);
    let m = data.mediator().as_slice();

    let mut w0_cols: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
    let mut labels = vec!["intercept".to_string()];
    if exposed.kind == SplineKind::CCubic {
        w0_cols.push(data.mediator().component_mul(a));
        labels.push("M*A".into());
    }
    if unexposed.kind == SplineKind::CCubic {
        w0_cols.push(data.mediator().component_mul(&not_a));
        labels.push("M*(1-A)".into());
    }
    let w0 = DMatrix::from_columns(&w0_cols);

    let w = hcat(&[
        &DMatrix::from_column_slice(n, 1, a.as_slice()),
        data.confounders(),
    ])?;
    labels.push("A".into());
    labels.extend(data.confounder_names().iter().cloned());

    let z1 = face_split(a, &basis_matrix(m, exposed, knots).values)?;
    let z0 = face_split(&not_a, &basis_matrix(m, unexposed, knots).values)?;
    let k = knots.num_bases();
    labels.extend(block_labels(exposed, k, "A"));
    labels.extend(block_labels(unexposed, k, "(1-A)"));

    Ok(DesignPartition {
        w0,
        w,
        z1,
        z0,
        column_labels: labels,
        exposed,
        unexposed,
    })
}

fn block_labels(kind: BasisKind, k: usize, factor: &str) -> impl Iterator<Item = String> + '_ {
    let sign = if kind.negated { "-" } else { "" };
    let name = match kind.kind {
        SplineKind::IQuadratic => "I",
        SplineKind::CCubic => "C",
    };
    (1..=k).map(move |i| format!("{sign}{name}{i}*{factor}"))
}

/// Fitted shape-restricted outcome model.
///
/// Coefficients are reported in the un-negated parametrization so the
/// curves evaluate directly: `beta2` (exposed curve) and `beta3` (unexposed
/// curve) have length `k`, or `k + 1` with a leading identity coefficient for
/// C-spline curves. The parameter vector and `covariance` follow the order
/// `[β₀, β₁, β₂…, β₃…, β₄…]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
    pub beta4: Vec<f64>,
    pub sigma1_sq: f64,
    #[serde(with = "serde_rows")]
    pub covariance: DMatrix<f64>,
    /// Kept columns of `Z = [Z₁, Z₀]` (zero-based).
    pub active_set: Vec<usize>,
    pub knots: KnotSequence,
    pub shapes: ShapeSpec,
    pub confounder_names: Vec<String>,
    pub n: usize,
    pub df: usize,
    pub residual_ss: f64,
}

impl OutcomeFit {
    pub fn exposed_kind(&self) -> SplineKind {
        self.shapes.exposed_shape.basis_kind().kind
    }

    pub fn unexposed_kind(&self) -> SplineKind {
        self.shapes.unexposed_shape.basis_kind().kind
    }

    /// Fitted exposed-group curve `f̂₁(m)`.
    pub fn exposed_curve(&self, m: f64) -> f64 {
        eval_f(&self.beta2, self.exposed_kind(), &self.knots, m).expect("length fixed at fit")
    }

    /// Fitted unexposed-group curve `f̂₂(m)`.
    pub fn unexposed_curve(&self, m: f64) -> f64 {
        eval_f(&self.beta3, self.unexposed_kind(), &self.knots, m).expect("length fixed at fit")
    }

    pub fn num_parameters(&self) -> usize {
        2 + self.beta2.len() + self.beta3.len() + self.beta4.len()
    }

    pub fn beta2_range(&self) -> Range<usize> {
        2..2 + self.beta2.len()
    }

    pub fn beta3_range(&self) -> Range<usize> {
        let s = 2 + self.beta2.len();
        s..s + self.beta3.len()
    }

    pub fn beta4_range(&self) -> Range<usize> {
        let s = 2 + self.beta2.len() + self.beta3.len();
        s..s + self.beta4.len()
    }

    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut v = vec![self.beta0, self.beta1];
        v.extend(&self.beta2);
        v.extend(&self.beta3);
        v.extend(&self.beta4);
        v
    }

    pub fn set_parameter_vector(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_parameters() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} outcome parameters, got {}",
                self.num_parameters(),
                theta.len()
            )));
        }
        self.beta0 = theta[0];
        self.beta1 = theta[1];
        let (r2, r3, r4) = (self.beta2_range(), self.beta3_range(), self.beta4_range());
        self.beta2.copy_from_slice(&theta[r2]);
        self.beta3.copy_from_slice(&theta[r3]);
        self.beta4.copy_from_slice(&theta[r4]);
        Ok(())
    }

    /// Mean outcome `β₀ + β₁A + f₁(M)A + f₂(M)(1−A) + β₄ᵀC` for each row.
    pub fn predict(&self, data: &Dataset) -> Result<DVector<f64>> {
        if data.num_confounders() != self.beta4.len() {
            return Err(Error::DimensionMismatch(format!(
                "fit has {} confounders, data has {}",
                self.beta4.len(),
                data.num_confounders()
            )));
        }
        let b4 = DVector::from_column_slice(&self.beta4);
        let lin = data.confounders() * b4;
        Ok(DVector::from_fn(data.n(), |i, _| {
            let a = data.exposure()[i];
            let m = data.mediator()[i];
            self.beta0
                + self.beta1 * a
                + a * self.exposed_curve(m)
                + (1.0 - a) * self.unexposed_curve(m)
                + lin[i]
        }))
    }
}

/// Fit the shape-restricted outcome model.
///
/// Knots are placed on the pooled mediator values, the design is projected
/// onto its constraint cone, and the kept columns are refitted by ordinary
/// least squares. `σ̂₁²` uses `n − p − |active|` degrees of freedom.
pub fn fit_outcome(data: &Dataset, shapes: ShapeSpec, num_bases: usize) -> Result<OutcomeFit> {
    let knots = KnotSequence::from_quantiles(data.mediator().as_slice(), num_bases)?;
    fit_outcome_with_knots(data, shapes, knots)
}

pub fn fit_outcome_with_knots(
    data: &Dataset,
    shapes: ShapeSpec,
    knots: KnotSequence,
) -> Result<OutcomeFit> {
    let design = build_outcome_design(data, shapes, &knots)?;
    let problem = ConeProblem::new(data.outcome().clone(), design.v(), design.z())?;
    if problem.n() <= design.num_columns() {
        return Err(Error::InvalidData(format!(
            "{} observations for {} design columns",
            problem.n(),
            design.num_columns()
        )));
    }
    let solution = project_onto_cone(&problem, cone::DEFAULT_TOL)?;
    let refit = refit_active(&problem, &solution.active_set)?;

    let k = knots.num_bases();
    let d = data.num_confounders();
    let e_id = usize::from(design.exposed.kind.has_identity_term());
    let u_id = usize::from(design.unexposed.kind.has_identity_term());
    let len2 = k + e_id;
    let len3 = k + u_id;
    let b2 = 2;
    let b3 = b2 + len2;
    let b4 = b3 + len3;
    let total = b4 + d;

    // canonical slot and sign for every design column, in [W0, W, Z1, Z0] order
    let mut map: Vec<(usize, f64)> = vec![(0, 1.0)];
    if e_id == 1 {
        map.push((b2, 1.0));
    }
    if u_id == 1 {
        map.push((b3, 1.0));
    }
    map.push((1, 1.0));
    map.extend((0..d).map(|j| (b4 + j, 1.0)));
    map.extend((0..k).map(|i| (b2 + e_id + i, design.exposed.sign())));
    map.extend((0..k).map(|i| (b3 + u_id + i, design.unexposed.sign())));
    debug_assert_eq!(map.len(), refit.coefficients.len());

    let mut theta = vec![0.0; total];
    let mut covariance = DMatrix::zeros(total, total);
    for (r, &(cr, sr)) in map.iter().enumerate() {
        theta[cr] = sr * refit.coefficients[r];
        for (c, &(cc, sc)) in map.iter().enumerate() {
            covariance[(cr, cc)] = sr * sc * refit.covariance[(r, c)];
        }
    }
    // exact zeros for eliminated columns, never -0.0
    for v in theta.iter_mut() {
        if *v == 0.0 {
            *v = 0.0;
        }
    }

    Ok(OutcomeFit {
        beta0: theta[0],
        beta1: theta[1],
        beta2: theta[b2..b3].to_vec(),
        beta3: theta[b3..b4].to_vec(),
        beta4: theta[b4..].to_vec(),
        sigma1_sq: refit.sigma2_hat,
        covariance,
        active_set: solution.active_set,
        knots,
        shapes,
        confounder_names: data.confounder_names().to_vec(),
        n: data.n(),
        df: refit.df,
        residual_ss: refit.residual_ss,
    })
}

/// Fitted linear mediator model.
///
/// `covariance` covers `(γ₀, γ₁, γ₂…)`; the residual variance estimate
/// `σ̂₂²` is treated as independent with variance `sigma2_sq_var =
/// 2σ̂₂⁴/(n − d − 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorFit {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: Vec<f64>,
    pub sigma2_sq: f64,
    #[serde(with = "serde_rows")]
    pub covariance: DMatrix<f64>,
    pub sigma2_sq_var: f64,
    pub n: usize,
    pub df: usize,
}

impl MediatorFit {
    /// Conditional mediator mean `γ₀ + γ₁a + γ₂ᵀc`.
    pub fn mean(&self, a: f64, c: &[f64]) -> Result<f64> {
        if c.len() != self.gamma2.len() {
            return Err(Error::DimensionMismatch(format!(
                "mediator model has {} confounders, query has {}",
                self.gamma2.len(),
                c.len()
            )));
        }
        Ok(self.gamma0
            + self.gamma1 * a
            + self.gamma2.iter().zip(c).map(|(g, c)| g * c).sum::<f64>())
    }

    pub fn num_parameters(&self) -> usize {
        3 + self.gamma2.len()
    }

    /// `[γ₀, γ₁, γ₂…, σ₂²]`.
    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut v = vec![self.gamma0, self.gamma1];
        v.extend(&self.gamma2);
        v.push(self.sigma2_sq);
        v
    }

    pub fn set_parameter_vector(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_parameters() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} mediator parameters, got {}",
                self.num_parameters(),
                theta.len()
            )));
        }
        let d = self.gamma2.len();
        self.gamma0 = theta[0];
        self.gamma1 = theta[1];
        self.gamma2.copy_from_slice(&theta[2..2 + d]);
        self.sigma2_sq = theta[2 + d];
        Ok(())
    }

    /// Covariance of the full parameter vector, `σ₂²` last.
    pub fn full_covariance(&self) -> DMatrix<f64> {
        let p = self.num_parameters();
        let mut out = DMatrix::zeros(p, p);
        out.view_mut((0, 0), (p - 1, p - 1))
            .copy_from(&self.covariance);
        out[(p - 1, p - 1)] = self.sigma2_sq_var;
        out
    }
}

pub fn fit_mediator(data: &Dataset) -> Result<MediatorFit> {
    let n = data.n();
    let d = data.num_confounders();
    if n <= d + 2 {
        return Err(Error::InvalidData(format!(
            "{n} observations for {} mediator-model parameters",
            d + 2
        )));
    }
    let x = hcat(&[
        &DMatrix::from_element(n, 1, 1.0),
        &DMatrix::from_column_slice(n, 1, data.exposure().as_slice()),
        data.confounders(),
    ])?;
    let fit = ols(&x, data.mediator())?;
    let df = n - d - 2;
    let sigma2_sq = fit.residual_ss / df as f64;
    Ok(MediatorFit {
        gamma0: fit.coefficients[0],
        gamma1: fit.coefficients[1],
        gamma2: fit.coefficients.iter().skip(2).copied().collect(),
        sigma2_sq,
        covariance: fit.inverse_gram * sigma2_sq,
        sigma2_sq_var: 2.0 * sigma2_sq * sigma2_sq / df as f64,
        n,
        df,
    })
}
