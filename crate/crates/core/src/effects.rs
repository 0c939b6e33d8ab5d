//! Mediation effects and delta-method inference.
//!
//! Conditional on confounders `c`, with `E_g(x) = E[f_g(M) | A = x, c]` and
//! `M | A = x, c ~ Normal(γ₀ + γ₁x + γ₂ᵀc, σ₂²)`:
//!
//! ```text
//! CDE(m) = (β₁ + f₁(m) − f₂(m))(a − a*)
//! NDE    = (β₁ + E₁(a*) − E₂(a*))(a − a*)
//! NIE    = a(E₁(a) − E₁(a*)) + (1 − a)(E₂(a) − E₂(a*))
//! ```
//!
//! Gradients are analytic: derivatives of `E_g` with respect to the spline
//! coefficients integrate the basis against the normal density, and
//! derivatives with respect to the mediator mean and variance integrate the
//! curve against the normal score. The outcome and mediator regressions are
//! fitted separately, so their estimates enter the delta method with zero
//! cross-covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{hcat, ols, serde_rows};
use crate::models::{Dataset, MediatorFit, OutcomeFit};
use crate::quadrature::{normal_critical_value, QuadratureSpec};
use crate::spline::{KnotSequence, SplineKind};
use crate::{Error, Result};

/// Number of coefficients a curve of the given family carries.
pub fn curve_len(kind: SplineKind, knots: &KnotSequence) -> usize {
    knots.num_bases() + usize::from(kind.has_identity_term())
}

fn check_len(coefs: &[f64], kind: SplineKind, knots: &KnotSequence) -> Result<()> {
    let want = curve_len(kind, knots);
    if coefs.len() != want {
        return Err(Error::DimensionMismatch(format!(
            "{kind:?} curve needs {want} coefficients, got {}",
            coefs.len()
        )));
    }
    Ok(())
}

/// Evaluate a group curve at `m`.
///
/// I-spline curves: `Σ βᵢ Iᵢ(m)`. C-spline curves: `β₀·m + Σ βᵢ Cᵢ(m)`
/// with the identity coefficient first. Coefficients are in the un-negated
/// parametrization.
pub fn eval_f(coefs: &[f64], kind: SplineKind, knots: &KnotSequence, m: f64) -> Result<f64> {
    check_len(coefs, kind, knots)?;
    let (identity, spline) = split_identity(coefs, kind);
    let mut sum = identity * m;
    for (i, b) in spline.iter().enumerate() {
        if *b != 0.0 {
            sum += b * kind.eval(m, i, knots)?;
        }
    }
    Ok(sum)
}

fn split_identity(coefs: &[f64], kind: SplineKind) -> (f64, &[f64]) {
    if kind.has_identity_term() {
        (coefs[0], &coefs[1..])
    } else {
        (0.0, coefs)
    }
}

/// `E[f(M)]` for `M ~ Normal(mean, var)` together with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalExpectation {
    pub value: f64,
    /// Derivative with respect to each curve coefficient.
    pub d_coefs: Vec<f64>,
    pub d_mean: f64,
    pub d_var: f64,
}

/// Expectation of a curve under a normal mediator law, with gradient.
///
/// The identity term of a C-spline curve contributes `β₀·mean` exactly; the
/// spline part is integrated numerically with panels split at the knots.
pub fn expected_f_parts(
    coefs: &[f64],
    kind: SplineKind,
    knots: &KnotSequence,
    mean: f64,
    var: f64,
    quad: &QuadratureSpec,
) -> Result<NormalExpectation> {
    check_len(coefs, kind, knots)?;
    let nodes = quad.normal_nodes(mean, var, knots.breakpoints())?;
    let (identity, spline) = split_identity(coefs, kind);
    let k = spline.len();
    let offset = coefs.len() - k;

    let mut d_coefs = vec![0.0; coefs.len()];
    let mut value = 0.0;
    let mut d_mean = 0.0;
    let mut d_var = 0.0;
    let mut row = vec![0.0; k];
    for (m, w) in nodes {
        kind.eval_row(m, knots, &mut row);
        let f: f64 = row.iter().zip(spline).map(|(b, c)| b * c).sum();
        for (d, b) in d_coefs[offset..].iter_mut().zip(&row) {
            *d += w * b;
        }
        let z = m - mean;
        value += w * f;
        d_mean += w * f * z / var;
        d_var += w * f * (-0.5 / var + 0.5 * z * z / (var * var));
    }
    if kind.has_identity_term() {
        value += identity * mean;
        d_coefs[0] = mean;
        d_mean += identity;
    }
    Ok(NormalExpectation {
        value,
        d_coefs,
        d_mean,
        d_var,
    })
}

/// `E[f(M) | a, c]` under the fitted mediator model.
pub fn expected_f(
    coefs: &[f64],
    kind: SplineKind,
    knots: &KnotSequence,
    mediator: &MediatorFit,
    a: f64,
    c: &[f64],
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_len(coefs, kind, knots)?;
    let mean = mediator.mean(a, c)?;
    let nodes = quad.normal_nodes(mean, mediator.sigma2_sq, knots.breakpoints())?;
    let (identity, _) = split_identity(coefs, kind);
    // integrate the spline part only; the identity term is exact
    let mut spline_only = coefs.to_vec();
    if kind.has_identity_term() {
        spline_only[0] = 0.0;
    }
    let mut sum = identity * mean;
    for (m, w) in nodes {
        sum += w * eval_f(&spline_only, kind, knots, m)?;
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectKind {
    #[serde(rename = "CDE")]
    Cde,
    #[serde(rename = "NDE")]
    Nde,
    #[serde(rename = "NIE")]
    Nie,
    /// Total effect, `NDE + NIE` for `a = 1, a* = 0`.
    #[serde(rename = "TE")]
    Total,
}

impl EffectKind {
    pub fn label(self) -> &'static str {
        match self {
            EffectKind::Cde => "CDE",
            EffectKind::Nde => "NDE",
            EffectKind::Nie => "NIE",
            EffectKind::Total => "TE",
        }
    }
}

/// Exposure contrast, conditioning values and confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectQuery {
    pub a: f64,
    pub a_star: f64,
    /// Mediator value at which the controlled direct effect is evaluated.
    pub m: f64,
    pub c: Vec<f64>,
    pub level: f64,
}

impl EffectQuery {
    /// The usual contrast `a = 1, a* = 0` with `m` and `c` at sample means.
    pub fn at_means(data: &Dataset, level: f64) -> Self {
        Self {
            a: 1.0,
            a_star: 0.0,
            m: data.mediator_mean(),
            c: data.confounder_means(),
            level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a == self.a_star {
            return Err(Error::InvalidArgument("a and a* must differ".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if !self.m.is_finite() || self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("query values must be finite".into()));
        }
        Ok(())
    }

    fn delta(&self) -> f64 {
        self.a - self.a_star
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub kind: EffectKind,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
}

impl EffectEstimate {
    pub fn from_gradient(
        kind: EffectKind,
        point: &EffectGradient,
        covariance: &DMatrix<f64>,
        level: f64,
    ) -> Result<Self> {
        let var = delta_variance(&point.gradient, covariance)?;
        let (ci_lower, ci_upper) = confidence_interval(point.estimate, var, level)?;
        Ok(Self {
            kind,
            estimate: point.estimate,
            std_error: var.sqrt(),
            ci_lower,
            ci_upper,
            level,
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

/// `∇gᵀ Σ ∇g`, clamped at zero against round-off.
pub fn delta_variance(gradient: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<f64> {
    let p = gradient.len();
    if covariance.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "gradient of length {p} with {}×{} covariance",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    Ok(gradient.dot(&(covariance * gradient)).max(0.0))
}

/// Normal-theory interval `estimate ∓ z_{(1+level)/2}·√variance`.
pub fn confidence_interval(estimate: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "variance must be non-negative, got {variance}"
        )));
    }
    let half = normal_critical_value(level)? * variance.sqrt();
    Ok((estimate - half, estimate + half))
}

/// Point estimate and its gradient over a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectGradient {
    pub estimate: f64,
    pub gradient: DVector<f64>,
}

/// Joint parameter vector `[outcome θ…, γ₀, γ₁, γ₂…, σ₂²]`.
pub fn joint_parameters(outcome: &OutcomeFit, mediator: &MediatorFit) -> Vec<f64> {
    let mut v = outcome.parameter_vector();
    v.extend(mediator.parameter_vector());
    v
}

/// Block-diagonal covariance of [`joint_parameters`].
pub fn joint_covariance(outcome: &OutcomeFit, mediator: &MediatorFit) -> DMatrix<f64> {
    let po = outcome.num_parameters();
    let pm = mediator.num_parameters();
    let mut out = DMatrix::zeros(po + pm, po + pm);
    out.view_mut((0, 0), (po, po))
        .copy_from(&outcome.covariance);
    out.view_mut((po, po), (pm, pm))
        .copy_from(&mediator.full_covariance());
    out
}

/// CDE point estimate and gradient over the outcome parameters.
pub fn cde_with_gradient(outcome: &OutcomeFit, query: &EffectQuery) -> Result<EffectGradient> {
    query.validate()?;
    let delta = query.delta();
    let m = query.m;
    let knots = &outcome.knots;
    let f1 = eval_f(&outcome.beta2, outcome.exposed_kind(), knots, m)?;
    let f2 = eval_f(&outcome.beta3, outcome.unexposed_kind(), knots, m)?;

    let mut grad = DVector::zeros(outcome.num_parameters());
    grad[1] = delta;
    let rows = [
        (outcome.beta2_range(), outcome.exposed_kind(), delta),
        (outcome.beta3_range(), outcome.unexposed_kind(), -delta),
    ];
    for (range, kind, w) in rows {
        let basis = basis_at(kind, knots, m);
        for (slot, b) in range.zip(basis) {
            grad[slot] = w * b;
        }
    }
    Ok(EffectGradient {
        estimate: (outcome.beta1 + f1 - f2) * delta,
        gradient: grad,
    })
}

/// Basis values of a curve at `m`, identity first for C-splines.
fn basis_at(kind: SplineKind, knots: &KnotSequence, m: f64) -> Vec<f64> {
    let k = knots.num_bases();
    let mut row = vec![0.0; k];
    kind.eval_row(m, knots, &mut row);
    if kind.has_identity_term() {
        row.insert(0, m);
    }
    row
}

pub fn cde(outcome: &OutcomeFit, query: &EffectQuery) -> Result<EffectEstimate> {
    let g = cde_with_gradient(outcome, query)?;
    EffectEstimate::from_gradient(EffectKind::Cde, &g, &outcome.covariance, query.level)
}

#[derive(Clone, Copy)]
enum Curve {
    Exposed,
    Unexposed,
}

/// Accumulates `Σ wⱼ E_{gⱼ}(xⱼ)` and its gradient over the joint vector.
struct Accumulator<'a> {
    outcome: &'a OutcomeFit,
    mediator: &'a MediatorFit,
    query: &'a EffectQuery,
    quad: &'a QuadratureSpec,
    value: f64,
    grad: DVector<f64>,
}

impl<'a> Accumulator<'a> {
    fn new(
        outcome: &'a OutcomeFit,
        mediator: &'a MediatorFit,
        query: &'a EffectQuery,
        quad: &'a QuadratureSpec,
    ) -> Result<Self> {
        query.validate()?;
        if mediator.gamma2.len() != outcome.beta4.len() || query.c.len() != mediator.gamma2.len() {
            return Err(Error::DimensionMismatch(format!(
                "outcome model has {} confounders, mediator model {}, query {}",
                outcome.beta4.len(),
                mediator.gamma2.len(),
                query.c.len()
            )));
        }
        let p = outcome.num_parameters() + mediator.num_parameters();
        Ok(Self {
            outcome,
            mediator,
            query,
            quad,
            value: 0.0,
            grad: DVector::zeros(p),
        })
    }

    fn add_beta1(&mut self, w: f64) {
        self.value += w * self.outcome.beta1;
        self.grad[1] += w;
    }

    /// Add `w · E[f_curve(M) | A = x, c]`.
    fn add(&mut self, w: f64, curve: Curve, x: f64) -> Result<()> {
        if w == 0.0 {
            return Ok(());
        }
        let o = self.outcome;
        let (coefs, kind, range) = match curve {
            Curve::Exposed => (&o.beta2, o.exposed_kind(), o.beta2_range()),
            Curve::Unexposed => (&o.beta3, o.unexposed_kind(), o.beta3_range()),
        };
        let mean = self.mediator.mean(x, &self.query.c)?;
        let e = expected_f_parts(
            coefs,
            kind,
            &o.knots,
            mean,
            self.mediator.sigma2_sq,
            self.quad,
        )?;
        self.value += w * e.value;
        for (slot, d) in range.zip(&e.d_coefs) {
            self.grad[slot] += w * d;
        }
        // mediator block: γ₀, γ₁, γ₂…, σ₂²
        let base = o.num_parameters();
        let dmu = w * e.d_mean;
        self.grad[base] += dmu;
        self.grad[base + 1] += dmu * x;
        for (j, cj) in self.query.c.iter().enumerate() {
            self.grad[base + 2 + j] += dmu * cj;
        }
        let last = base + self.mediator.num_parameters() - 1;
        self.grad[last] += w * e.d_var;
        Ok(())
    }

    fn finish(self) -> EffectGradient {
        EffectGradient {
            estimate: self.value,
            gradient: self.grad,
        }
    }
}

/// NDE point estimate and gradient over the joint parameter vector.
pub fn nde_with_gradient(
    outcome: &OutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
    quad: &QuadratureSpec,
) -> Result<EffectGradient> {
    let mut acc = Accumulator::new(outcome, mediator, query, quad)?;
    let delta = query.delta();
    let x = query.a_star;
    acc.add_beta1(delta);
    acc.add(delta, Curve::Exposed, x)?;
    acc.add(-delta, Curve::Unexposed, x)?;
    Ok(acc.finish())
}

/// NIE point estimate and gradient over the joint parameter vector.
///
/// For `a = 1` only the exposed curve enters; for `a = 0` only the
/// unexposed one.
pub fn nie_with_gradient(
    outcome: &OutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
    quad: &QuadratureSpec,
) -> Result<EffectGradient> {
    let mut acc = Accumulator::new(outcome, mediator, query, quad)?;
    let (a, a_star) = (query.a, query.a_star);
    acc.add(a, Curve::Exposed, a)?;
    acc.add(-a, Curve::Exposed, a_star)?;
    acc.add(1.0 - a, Curve::Unexposed, a)?;
    acc.add(-(1.0 - a), Curve::Unexposed, a_star)?;
    Ok(acc.finish())
}

/// Total effect `E[Y_{aM_a}] − E[Y_{a*M_{a*}}]`, composed from the same
/// conditional expectations as the NDE and NIE.
pub fn total_with_gradient(
    outcome: &OutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
    quad: &QuadratureSpec,
) -> Result<EffectGradient> {
    let mut acc = Accumulator::new(outcome, mediator, query, quad)?;
    let (a, a_star) = (query.a, query.a_star);
    acc.add_beta1(a - a_star);
    acc.add(a, Curve::Exposed, a)?;
    acc.add(1.0 - a, Curve::Unexposed, a)?;
    acc.add(-a_star, Curve::Exposed, a_star)?;
    acc.add(-(1.0 - a_star), Curve::Unexposed, a_star)?;
    Ok(acc.finish())
}

pub fn nde(
    outcome: &OutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
) -> Result<EffectEstimate> {
    let g = nde_with_gradient(outcome, mediator, query, &QuadratureSpec::default())?;
    EffectEstimate::from_gradient(
        EffectKind::Nde,
        &g,
        &joint_covariance(outcome, mediator),
        query.level,
    )
}

pub fn nie(
    outcome: &OutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
) -> Result<EffectEstimate> {
    let g = nie_with_gradient(outcome, mediator, query, &QuadratureSpec::default())?;
    EffectEstimate::from_gradient(
        EffectKind::Nie,
        &g,
        &joint_covariance(outcome, mediator),
        query.level,
    )
}

pub fn total_effect(
    outcome: &OutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
) -> Result<EffectEstimate> {
    let g = total_with_gradient(outcome, mediator, query, &QuadratureSpec::default())?;
    EffectEstimate::from_gradient(
        EffectKind::Total,
        &g,
        &joint_covariance(outcome, mediator),
        query.level,
    )
}

/// CDE, NDE and NIE of the shape-restricted model, in that order.
pub fn mediation_effects(
    outcome: &OutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
    quad: &QuadratureSpec,
) -> Result<[EffectEstimate; 3]> {
    let cov = joint_covariance(outcome, mediator);
    let cde = cde(outcome, query)?;
    let nde = nde_with_gradient(outcome, mediator, query, quad)?;
    let nie = nie_with_gradient(outcome, mediator, query, quad)?;
    Ok([
        cde,
        EffectEstimate::from_gradient(EffectKind::Nde, &nde, &cov, query.level)?,
        EffectEstimate::from_gradient(EffectKind::Nie, &nie, &cov, query.level)?,
    ])
}

/// Linear interaction outcome model `Y = β₀ + β₁A + β₂M + β₃AM + β₄ᵀC`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOutcomeFit {
    /// `[β₀, β₁, β₂, β₃, β₄…]`.
    pub coefficients: Vec<f64>,
    #[serde(with = "serde_rows")]
    pub covariance: DMatrix<f64>,
    pub sigma1_sq: f64,
    pub n: usize,
    pub df: usize,
}

pub fn fit_linear_outcome(data: &Dataset) -> Result<LinearOutcomeFit> {
    let n = data.n();
    let a = data.exposure();
    let m = data.mediator();
    let x = hcat(&[
        &DMatrix::from_element(n, 1, 1.0),
        &DMatrix::from_column_slice(n, 1, a.as_slice()),
        &DMatrix::from_column_slice(n, 1, m.as_slice()),
        &DMatrix::from_column_slice(n, 1, a.component_mul(m).as_slice()),
        data.confounders(),
    ])?;
    if n <= x.ncols() {
        return Err(Error::InvalidData(format!(
            "{n} observations for {} linear-model parameters",
            x.ncols()
        )));
    }
    let fit = ols(&x, data.outcome())?;
    let df = n - x.ncols();
    let sigma1_sq = fit.residual_ss / df as f64;
    Ok(LinearOutcomeFit {
        coefficients: fit.coefficients.iter().copied().collect(),
        covariance: fit.inverse_gram * sigma1_sq,
        sigma1_sq,
        n,
        df,
    })
}

/// CDE, NDE and NIE of the linear interaction model with delta-method
/// intervals, gradients taken over `[β…, γ₀, γ₁, γ₂…, σ₂²]`.
pub fn linear_effects(
    fit: &LinearOutcomeFit,
    mediator: &MediatorFit,
    query: &EffectQuery,
) -> Result<[EffectEstimate; 3]> {
    query.validate()?;
    let d = mediator.gamma2.len();
    if fit.coefficients.len() != 4 + d || query.c.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "linear fit has {} confounders, mediator model {d}, query {}",
            fit.coefficients.len().saturating_sub(4),
            query.c.len()
        )));
    }
    let po = fit.coefficients.len();
    let p = po + mediator.num_parameters();
    let mut cov = DMatrix::zeros(p, p);
    cov.view_mut((0, 0), (po, po)).copy_from(&fit.covariance);
    cov.view_mut((po, po), (p - po, p - po))
        .copy_from(&mediator.full_covariance());

    let b = &fit.coefficients;
    let (b1, b2, b3) = (b[1], b[2], b[3]);
    let g1 = mediator.gamma1;
    let delta = query.delta();
    let mu_star = mediator.mean(query.a_star, &query.c)?;

    let mut cde = DVector::zeros(p);
    cde[1] = delta;
    cde[3] = query.m * delta;

    let mut nde = DVector::zeros(p);
    nde[1] = delta;
    nde[3] = mu_star * delta;
    nde[po] = b3 * delta;
    nde[po + 1] = b3 * query.a_star * delta;
    for (j, cj) in query.c.iter().enumerate() {
        nde[po + 2 + j] = b3 * cj * delta;
    }

    let mut nie = DVector::zeros(p);
    nie[2] = g1 * delta;
    nie[3] = g1 * query.a * delta;
    nie[po + 1] = (b2 + b3 * query.a) * delta;

    let points = [
        (EffectKind::Cde, (b1 + b3 * query.m) * delta, cde),
        (EffectKind::Nde, (b1 + b3 * mu_star) * delta, nde),
        (EffectKind::Nie, (b2 * g1 + b3 * g1 * query.a) * delta, nie),
    ];
    let mut out = Vec::with_capacity(3);
    for (kind, estimate, gradient) in points {
        out.push(EffectEstimate::from_gradient(
            kind,
            &EffectGradient { estimate, gradient },
            &cov,
            query.level,
        )?);
    }
    Ok(out.try_into().expect("three effects"))
}

/// Fit the linear interaction model and its mediator model, then report
/// CDE, NDE and NIE.
pub fn linear_baseline(data: &Dataset, query: &EffectQuery) -> Result<[EffectEstimate; 3]> {
    let fit = fit_linear_outcome(data)?;
    let mediator = crate::models::fit_mediator(data)?;
    linear_effects(&fit, &mediator, query)
}
