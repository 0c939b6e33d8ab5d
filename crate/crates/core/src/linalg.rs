//! Dense least-squares helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Columns whose scaled QR pivot falls below this are treated as dependent.
const RANK_TOL: f64 = 1e-9;

/// Concatenate matrices with equal row counts side by side.
pub fn hcat(blocks: &[&DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let nrows = blocks.first().map_or(0, |b| b.nrows());
    if let Some(bad) = blocks.iter().find(|b| b.nrows() != nrows) {
        return Err(Error::DimensionMismatch(format!(
            "cannot concatenate blocks with {} and {} rows",
            nrows,
            bad.nrows()
        )));
    }
    let ncols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(nrows, ncols);
    let mut col = 0;
    for b in blocks {
        out.columns_mut(col, b.ncols()).copy_from(*b);
        col += b.ncols();
    }
    Ok(out)
}

/// Thin QR factorization of a full-column-rank matrix with unit-norm column
/// scaling, used for every least-squares solve in the crate.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    scale: DVector<f64>,
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p > n {
            return Err(Error::RankDeficient(format!(
                "{p} columns but only {n} rows"
            )));
        }
        if p == 0 {
            return Ok(Self {
                q: DMatrix::zeros(n, 0),
                r: DMatrix::zeros(0, 0),
                scale: DVector::zeros(0),
            });
        }
        let scale = DVector::from_iterator(p, x.column_iter().map(|c| c.norm()));
        if let Some(j) = scale.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::RankDeficient(format!(
                "column {j} is zero or non-finite"
            )));
        }
        let mut xs = x.clone();
        for (j, mut col) in xs.column_iter_mut().enumerate() {
            col /= scale[j];
        }
        let qr = xs.qr();
        let q = qr.q();
        let r = qr.r();
        for j in 0..p {
            if r[(j, j)].abs() <= RANK_TOL {
                return Err(Error::RankDeficient(format!(
                    "column {j} is (nearly) a linear combination of earlier columns"
                )));
            }
        }
        Ok(Self { q, r, scale })
    }

    pub fn ncols(&self) -> usize {
        self.scale.len()
    }

    /// Least-squares coefficients for response `y`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.ncols() == 0 {
            return DVector::zeros(0);
        }
        let qty = self.q.tr_mul(y);
        let mut b = self
            .r
            .solve_upper_triangular(&qty)
            .expect("diagonal checked at construction");
        b.component_div_assign(&self.scale);
        b
    }

    /// Orthogonal projection of `y` onto the column space.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.ncols() == 0 {
            return DVector::zeros(y.len());
        }
        &self.q * self.q.tr_mul(y)
    }

    /// Residual of `y` after projection onto the column space.
    pub fn residualize(&self, y: &DVector<f64>) -> DVector<f64> {
        y - self.project(y)
    }

    /// `(XᵀX)⁻¹` in the original (unscaled) coordinates.
    pub fn inverse_gram(&self) -> DMatrix<f64> {
        let p = self.ncols();
        if p == 0 {
            return DMatrix::zeros(0, 0);
        }
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("diagonal checked at construction");
        let mut g = &r_inv * r_inv.transpose();
        for i in 0..p {
            for j in 0..p {
                g[(i, j)] /= self.scale[i] * self.scale[j];
            }
        }
        g
    }
}

/// Ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct Ols {
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residual_ss: f64,
    /// `(XᵀX)⁻¹`; multiply by the residual variance for the covariance.
    pub inverse_gram: DMatrix<f64>,
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ols> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    let ls = LeastSquares::new(x)?;
    let coefficients = ls.solve(y);
    let fitted = x * &coefficients;
    let residual_ss = (y - &fitted).norm_squared();
    Ok(Ols {
        coefficients,
        fitted,
        residual_ss,
        inverse_gram: ls.inverse_gram(),
    })
}

/// Serde adapter storing a matrix as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_row_iterator(
            nrows,
            ncols,
            rows.into_iter().flatten(),
        ))
    }
}
