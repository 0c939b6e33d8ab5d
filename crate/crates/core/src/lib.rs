//! Shape-restricted causal mediation analysis.
//!
//! The outcome model lets the mediator act on the outcome through a curve per
//! exposure group, each restricted to be increasing, decreasing, convex or
//! concave. Curves are represented with quadratic I-splines and cubic
//! C-splines, fitted by projecting the response onto a polyhedral cone, and
//! the controlled direct, natural direct and natural indirect effects are
//! reported with delta-method confidence intervals.
//!
//! Module map:
//!
//! * [`spline`]: M-, I- and C-spline bases, knot placement, basis matrices.
//! * [`cone`]: sign-constrained least squares (hinge algorithm) and the
//!   post-selection OLS refit.
//! * [`models`]: datasets, shape declarations, design construction and the
//!   outcome / mediator fits.
//! * [`effects`]: effect point estimates, analytic gradients, delta-method
//!   variances and the linear interaction baseline.
//! * [`simulation`]: synthetic cohorts and coverage studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cone;
pub mod effects;
mod error;
pub mod linalg;
pub mod models;
pub mod quadrature;
pub mod simulation;
pub mod spline;

pub use cone::{project_onto_cone, refit_active, ConeProblem, ConeSolution, Refit};
pub use effects::{confidence_interval, delta_variance, EffectEstimate, EffectKind, EffectQuery};
pub use error::{Error, Result};
pub use models::{
    face_split, fit_mediator, fit_outcome, Dataset, DesignPartition, MediatorFit, OutcomeFit,
    Shape, ShapeSpec,
};
pub use quadrature::QuadratureSpec;
pub use spline::{BasisKind, BasisMatrix, KnotSequence, SplineKind};
