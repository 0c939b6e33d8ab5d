//! M-spline, quadratic I-spline and cubic C-spline bases.
//!
//! Knot sequences carry doubled boundary knots, `t₀ = t₁ < t₂ < … < t_k =
//! t_{k+1}`, giving `k` quadratic I-spline (or cubic C-spline) basis
//! functions. Basis indices are zero-based throughout: basis `i` of order 2
//! lives on `[t_i, t_{i+2}]`.
//!
//! A non-negative combination of I-splines is non-decreasing; a non-negative
//! combination of C-splines plus any multiple of the identity is convex.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Knots with doubled boundaries and strictly increasing interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotsRepr", into = "KnotsRepr")]
pub struct KnotSequence {
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KnotsRepr {
    knots: Vec<f64>,
    #[serde(default)]
    num_bases: Option<usize>,
}

impl TryFrom<KnotsRepr> for KnotSequence {
    type Error = Error;

    fn try_from(repr: KnotsRepr) -> Result<Self> {
        let seq = KnotSequence::new(repr.knots)?;
        match repr.num_bases {
            Some(k) if k != seq.num_bases() => Err(Error::InvalidKnots(format!(
                "num_bases = {k} but {} knots imply {}",
                seq.knots.len(),
                seq.num_bases()
            ))),
            _ => Ok(seq),
        }
    }
}

impl From<KnotSequence> for KnotsRepr {
    fn from(seq: KnotSequence) -> Self {
        let num_bases = Some(seq.num_bases());
        KnotsRepr {
            knots: seq.knots,
            num_bases,
        }
    }
}

impl KnotSequence {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let len = knots.len();
        if len < 4 {
            return Err(Error::InvalidKnots(format!(
                "need at least 4 knots (2 bases), got {len}"
            )));
        }
        if knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidKnots("knots must be finite".into()));
        }
        if knots[0] != knots[1] || knots[len - 2] != knots[len - 1] {
            return Err(Error::InvalidKnots("boundary knots must be doubled".into()));
        }
        if knots[1..len - 1].windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidKnots(
                "interior knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots })
    }

    /// Place knots at the extremes and equally spaced sample quantiles of
    /// `values`.
    ///
    /// The `k − 2` interior knots sit at probabilities `j/(k−1)`,
    /// `j = 1..k−2`, using linear interpolation between order statistics.
    pub fn from_quantiles(values: &[f64], num_bases: usize) -> Result<Self> {
        if num_bases < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 basis functions, got {num_bases}"
            )));
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "mediator values must be non-empty and finite".into(),
            ));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        if !(hi > lo) {
            return Err(Error::ConstantMediator);
        }
        let mut knots = Vec::with_capacity(num_bases + 2);
        knots.extend([lo, lo]);
        for j in 1..num_bases - 1 {
            knots.push(quantile_sorted(&sorted, j as f64 / (num_bases - 1) as f64));
        }
        knots.extend([hi, hi]);
        Self::new(knots).map_err(|_| {
            Error::InvalidKnots(format!(
                "quantile knots collapse: mediator has too many ties for {num_bases} bases"
            ))
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_bases(&self) -> usize {
        self.knots.len() - 2
    }

    pub fn lower(&self) -> f64 {
        self.knots[0]
    }

    pub fn upper(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Distinct knot values, i.e. the breakpoints of every basis function.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots[1..self.knots.len() - 1]
    }
}

/// Sample quantile with linear interpolation between order statistics.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// M-spline of the given order via the Curry–Schoenberg recursion.
///
/// Zero-width intervals (the doubled boundary knots) contribute zero.
pub fn mspline_eval(x: f64, i: usize, order: usize, knots: &KnotSequence) -> Result<f64> {
    if order == 0 {
        return Err(Error::InvalidArgument(
            "spline order must be at least 1".into(),
        ));
    }
    let t = knots.knots();
    let count = t.len().saturating_sub(order);
    if i >= count {
        return Err(Error::IndexOutOfRange { index: i, count });
    }
    Ok(mspline_rec(x, i, order, t))
}

fn mspline_rec(x: f64, i: usize, order: usize, t: &[f64]) -> f64 {
    let (lo, hi) = (t[i], t[i + order]);
    if x < lo || x >= hi || !(hi > lo) {
        return 0.0;
    }
    if order == 1 {
        return 1.0 / (hi - lo);
    }
    let k = order as f64;
    let left = (x - lo) * mspline_rec(x, i, order - 1, t);
    let right = (hi - x) * mspline_rec(x, i + 1, order - 1, t);
    k * (left + right) / ((k - 1.0) * (hi - lo))
}

fn check_index(i: usize, knots: &KnotSequence) -> Result<()> {
    let count = knots.num_bases();
    if i >= count {
        return Err(Error::IndexOutOfRange { index: i, count });
    }
    Ok(())
}

/// Quadratic I-spline `I_i(x | 2, t)`.
pub fn ispline_eval(x: f64, i: usize, knots: &KnotSequence) -> Result<f64> {
    check_index(i, knots)?;
    Ok(ispline_unchecked(x, i, knots.knots()))
}

/// Cubic C-spline `C_i(x | 2, t)`.
pub fn cspline_eval(x: f64, i: usize, knots: &KnotSequence) -> Result<f64> {
    check_index(i, knots)?;
    Ok(cspline_unchecked(x, i, knots.knots()))
}

#[inline]
fn ispline_unchecked(x: f64, i: usize, t: &[f64]) -> f64 {
    let (a, b, c) = (t[i], t[i + 1], t[i + 2]);
    if x < a {
        0.0
    } else if x >= c {
        1.0
    } else if x < b {
        (x - a).powi(2) / ((c - a) * (b - a))
    } else {
        1.0 - (c - x).powi(2) / ((c - a) * (c - b))
    }
}

#[inline]
fn cspline_unchecked(x: f64, i: usize, t: &[f64]) -> f64 {
    let (a, b, c) = (t[i], t[i + 1], t[i + 2]);
    if x < a {
        0.0
    } else if x >= c {
        x - (a + b + c) / 3.0
    } else if x < b {
        (x - a).powi(3) / (3.0 * (c - a) * (b - a))
    } else {
        x - (a + b + c) / 3.0 + (c - x).powi(3) / (3.0 * (c - a) * (c - b))
    }
}

/// Which spline family a basis block uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplineKind {
    /// Quadratic I-splines: monotone curves.
    IQuadratic,
    /// Cubic C-splines: convex curves, paired with a free identity column.
    CCubic,
}

impl SplineKind {
    /// Evaluate every basis function of this family at `x`, writing into
    /// `out` (length `num_bases`).
    pub fn eval_row(self, x: f64, knots: &KnotSequence, out: &mut [f64]) {
        let t = knots.knots();
        debug_assert_eq!(out.len(), knots.num_bases());
        match self {
            SplineKind::IQuadratic => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = ispline_unchecked(x, i, t);
                }
            }
            SplineKind::CCubic => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = cspline_unchecked(x, i, t);
                }
            }
        }
    }

    pub fn eval(self, x: f64, i: usize, knots: &KnotSequence) -> Result<f64> {
        match self {
            SplineKind::IQuadratic => ispline_eval(x, i, knots),
            SplineKind::CCubic => cspline_eval(x, i, knots),
        }
    }

    /// Whether curves of this family carry an unconstrained identity term.
    pub fn has_identity_term(self) -> bool {
        matches!(self, SplineKind::CCubic)
    }
}

/// Basis family plus the sign flip used for decreasing / concave shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisKind {
    pub kind: SplineKind,
    pub negated: bool,
}

impl BasisKind {
    pub fn new(kind: SplineKind, negated: bool) -> Self {
        Self { kind, negated }
    }

    pub fn sign(self) -> f64 {
        if self.negated {
            -1.0
        } else {
            1.0
        }
    }
}

/// Dense `n × k` evaluation of a basis family over a data vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub kind: BasisKind,
    pub knots: KnotSequence,
}

pub fn basis_matrix(values: &[f64], kind: BasisKind, knots: &KnotSequence) -> BasisMatrix {
    let k = knots.num_bases();
    let sign = kind.sign();
    let mut out = DMatrix::zeros(values.len(), k);
    let mut row = vec![0.0; k];
    for (r, &x) in values.iter().enumerate() {
        kind.kind.eval_row(x, knots, &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(r, j)] = sign * v;
        }
    }
    BasisMatrix {
        values: out,
        kind,
        knots: knots.clone(),
    }
}
