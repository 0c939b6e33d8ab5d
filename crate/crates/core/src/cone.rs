//! Least squares with a sign-constrained coefficient block.
//!
//! Minimizes `‖y − Vα − Zβ‖²` subject to `β ≥ 0`. The unconstrained block
//! `V` is projected out first, leaving a projection of `(I − P_V)y` onto the
//! polyhedral cone generated by the columns of `Δ = (I − P_V)Z`. That
//! projection is found with the hinge algorithm: edges enter one at a time by
//! largest normalized dual, and any edge whose coefficient goes negative is
//! dropped before the next entry.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{hcat, LeastSquares};
use crate::{Error, Result};

/// Default dual tolerance, relative to `‖y‖`.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ConeProblem {
    pub response: DVector<f64>,
    /// Unconstrained block `V` (`n × p`, full column rank).
    pub unconstrained: DMatrix<f64>,
    /// Non-negativity constrained block `Z` (`n × q`).
    pub constrained: DMatrix<f64>,
}

impl ConeProblem {
    pub fn new(
        response: DVector<f64>,
        unconstrained: DMatrix<f64>,
        constrained: DMatrix<f64>,
    ) -> Result<Self> {
        let n = response.len();
        if unconstrained.nrows() != n || constrained.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "response has {n} rows, V has {}, Z has {}",
                unconstrained.nrows(),
                constrained.nrows()
            )));
        }
        Ok(Self {
            response,
            unconstrained,
            constrained,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.unconstrained.ncols()
    }

    pub fn q(&self) -> usize {
        self.constrained.ncols()
    }

    /// `‖y − Vα − Zβ‖²`.
    pub fn objective(&self, alpha: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        (&self.response - &self.unconstrained * alpha - &self.constrained * beta).norm_squared()
    }
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub alpha: DVector<f64>,
    /// Entrywise non-negative; zero outside `active_set`.
    pub beta: DVector<f64>,
    /// Indices of constrained columns kept by the projection, ascending.
    pub active_set: Vec<usize>,
    pub fitted: DVector<f64>,
    pub residual_ss: f64,
    pub iterations: usize,
}

/// Project the response onto the cone `{Vα + Zβ : β ≥ 0}`.
///
/// `tol` scales the stopping rule: the projection stops once every inactive
/// column has normalized dual `Δ_jᵀr / ‖Δ_j‖ ≤ tol·‖y‖`. Columns of `Z` lying
/// in the span of `V` never enter. Ties in the entering dual go to the lowest
/// column index.
pub fn project_onto_cone(problem: &ConeProblem, tol: f64) -> Result<ConeSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (n, q) = (problem.n(), problem.q());
    let v_ls = LeastSquares::new(&problem.unconstrained)?;

    let y_tilde = v_ls.residualize(&problem.response);
    let mut delta = DMatrix::zeros(n, q);
    for j in 0..q {
        let zj = problem.constrained.column(j).into_owned();
        delta.set_column(j, &v_ls.residualize(&zj));
    }
    let delta_norm: Vec<f64> = delta.column_iter().map(|c| c.norm()).collect();
    let eligible: Vec<bool> = (0..q)
        .map(|j| {
            let zn = problem.constrained.column(j).norm();
            zn > 0.0 && delta_norm[j] > 1e-10 * zn
        })
        .collect();

    let threshold = tol * problem.response.norm();
    let cap = 10 * q.max(1);
    let mut active: Vec<usize> = Vec::new();
    let mut coef = DVector::zeros(0);
    let mut resid = y_tilde.clone();
    let mut iterations = 0;

    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..q).filter(|j| eligible[*j] && !active.contains(j)) {
            let dual = delta.column(j).dot(&resid) / delta_norm[j];
            if dual > threshold && best.is_none_or(|(_, b)| dual > b) {
                best = Some((j, dual));
            }
        }
        let Some((enter, _)) = best else { break };
        if iterations == cap {
            return Err(Error::NoConvergence(cap));
        }
        iterations += 1;

        active.push(enter);
        active.sort_unstable();
        loop {
            coef = solve_subset(&delta, &active, &y_tilde)?;
            let worst = coef
                .iter()
                .enumerate()
                .filter(|(_, c)| **c <= 0.0)
                .min_by(|a, b| a.1.total_cmp(b.1));
            match worst {
                Some((pos, _)) => {
                    active.remove(pos);
                }
                None => break,
            }
        }
        resid = &y_tilde - subset_columns(&delta, &active) * &coef;
    }

    let mut beta = DVector::zeros(q);
    for (c, &j) in coef.iter().zip(&active) {
        beta[j] = *c;
    }
    let partial = &problem.response - &problem.constrained * &beta;
    let alpha = v_ls.solve(&partial);
    let fitted = &problem.unconstrained * &alpha + &problem.constrained * &beta;
    let residual_ss = (&problem.response - &fitted).norm_squared();
    Ok(ConeSolution {
        alpha,
        beta,
        active_set: active,
        fitted,
        residual_ss,
        iterations,
    })
}

fn subset_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    m.select_columns(cols)
}

fn solve_subset(delta: &DMatrix<f64>, cols: &[usize], y: &DVector<f64>) -> Result<DVector<f64>> {
    if cols.is_empty() {
        return Ok(DVector::zeros(0));
    }
    Ok(LeastSquares::new(&subset_columns(delta, cols))?.solve(y))
}

/// Ordinary least squares on `[V, Z_active]` after cone projection.
#[derive(Debug, Clone)]
pub struct Refit {
    /// `p + q` coefficients in `[α, β]` order; eliminated columns are exactly 0.
    pub coefficients: DVector<f64>,
    /// `(p + q)²` covariance `σ̂²([V, Z_A]ᵀ[V, Z_A])⁻¹`, zero-padded for
    /// eliminated columns.
    pub covariance: DMatrix<f64>,
    pub sigma2_hat: f64,
    pub fitted: DVector<f64>,
    pub residual_ss: f64,
    /// Residual degrees of freedom `n − p − |A|`.
    pub df: usize,
}

pub fn refit_active(problem: &ConeProblem, active_set: &[usize]) -> Result<Refit> {
    let (n, p, q) = (problem.n(), problem.p(), problem.q());
    if let Some(&bad) = active_set.iter().find(|&&j| j >= q) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            count: q,
        });
    }
    let kept = subset_columns(&problem.constrained, active_set);
    let x = hcat(&[&problem.unconstrained, &kept])?;
    let m = x.ncols();
    if n <= m {
        return Err(Error::RankDeficient(format!(
            "{n} observations for {m} active columns leaves no residual degrees of freedom"
        )));
    }
    let ls = LeastSquares::new(&x)?;
    let b = ls.solve(&problem.response);
    let fitted = &x * &b;
    let residual_ss = (&problem.response - &fitted).norm_squared();
    let df = n - m;
    let sigma2_hat = residual_ss / df as f64;
    let cov_small = ls.inverse_gram() * sigma2_hat;

    // position in the full [α, β] vector of each refit column
    let index: Vec<usize> = (0..p).chain(active_set.iter().map(|j| p + j)).collect();
    let mut coefficients = DVector::zeros(p + q);
    let mut covariance = DMatrix::zeros(p + q, p + q);
    for (a, &ia) in index.iter().enumerate() {
        coefficients[ia] = b[a];
        for (c, &ic) in index.iter().enumerate() {
            covariance[(ia, ic)] = cov_small[(a, c)];
        }
    }
    Ok(Refit {
        coefficients,
        covariance,
        sigma2_hat,
        fitted,
        residual_ss,
        df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_constrained_block_is_plain_ols() {
        let v = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![0.9, 3.2, 4.8, 7.1]);
        let prob = ConeProblem::new(y.clone(), v.clone(), DMatrix::zeros(4, 0)).unwrap();
        let sol = project_onto_cone(&prob, DEFAULT_TOL).unwrap();
        let ols = crate::linalg::ols(&v, &y).unwrap();
        assert_relative_eq!(sol.alpha, ols.coefficients, epsilon = 1e-12);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn half_line_pointing_away() {
        let prob = ConeProblem::new(
            DVector::from_vec(vec![-1.0, -1.0]),
            DMatrix::zeros(2, 0),
            DMatrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        let sol = project_onto_cone(&prob, DEFAULT_TOL).unwrap();
        assert_eq!(sol.beta[0], 0.0);
        assert_eq!(sol.fitted, DVector::zeros(2));
        assert_relative_eq!(sol.residual_ss, 2.0);
    }

    #[test]
    fn half_line_pointing_toward() {
        let prob = ConeProblem::new(
            DVector::from_vec(vec![1.0, 3.0]),
            DMatrix::zeros(2, 0),
            DMatrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        let sol = project_onto_cone(&prob, DEFAULT_TOL).unwrap();
        assert_relative_eq!(sol.beta[0], 2.0, epsilon = 1e-14);
        assert_eq!(sol.active_set, vec![0]);
    }

    #[test]
    fn column_in_span_of_v_never_enters() {
        let v = DMatrix::from_element(3, 1, 1.0);
        let z = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 2.0, 1.0, 2.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let sol = project_onto_cone(&ConeProblem::new(y, v, z).unwrap(), DEFAULT_TOL).unwrap();
        assert_eq!(sol.active_set, vec![1]);
        assert_eq!(sol.beta[0], 0.0);
    }

    #[test]
    fn rank_deficient_v_is_an_error() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let prob = ConeProblem::new(DVector::zeros(3), v, DMatrix::zeros(3, 1)).unwrap();
        assert!(matches!(
            project_onto_cone(&prob, DEFAULT_TOL),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(ConeProblem::new(
            DVector::zeros(3),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(3, 1)
        )
        .is_err());
    }

    #[test]
    fn refit_pads_eliminated_columns() {
        let v = DMatrix::from_element(5, 1, 1.0);
        let z = DMatrix::from_row_slice(5, 2, &[0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 0.0, 4.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        let prob = ConeProblem::new(y, v, z).unwrap();
        let refit = refit_active(&prob, &[0]).unwrap();
        assert_relative_eq!(refit.coefficients[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(refit.coefficients[1], 2.0, epsilon = 1e-12);
        assert_eq!(refit.coefficients[2], 0.0);
        assert!(refit.residual_ss < 1e-20);
        assert_eq!(refit.df, 3);
        for k in 0..3 {
            assert_eq!(refit.covariance[(2, k)], 0.0);
            assert_eq!(refit.covariance[(k, 2)], 0.0);
        }
        assert!(refit_active(&prob, &[5]).is_err());
    }
}
