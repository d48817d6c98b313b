//! Determinantal point processes on discretized ground spaces.
//!
//! Every kernel lives on a one-dimensional [`GroundSpace`] (grid points with
//! positive cell masses `w_x`). Kernels are stored relative to the reference
//! measure; spectral and determinantal work happens on the counting form
//! `K̂ = W^{1/2} K W^{1/2}`.
//!
//! Module map:
//! - [`operator`]: ground spaces, windows, kernels, norms, projections, angles.
//! - [`dpp`]: correlations, enumeration oracle, exact sampling, intensity.
//! - [`conditioning`]: multiplicative functionals and induced kernels.
//! - [`deformations`]: finite-rank extensions of projections, weighted
//!   subspace projections and the exhaustion suite.
//! - [`scaling`]: Jacobi Christoffel–Darboux kernels and the Bessel kernel.
//! - [`embedding`]: `σ_f` embedding, tightness reports, two-sample tests.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod conditioning;
pub mod convergence;
pub mod deformations;
pub mod dpp;
pub mod embedding;
pub mod error;
pub mod operator;
pub mod par;
pub mod rng;
pub mod scaling;
pub mod stats;
pub mod tags;
pub mod weights;

pub use convergence::{convergence_report, ConvergenceReport, ConvergenceRow};
pub use dpp::{total_variation, Configuration, DistributionTable, DppDistribution};
pub use embedding::{int_phi, sigma_f, FiniteMeasure};
pub use error::{Error, Result};
pub use operator::{
    angle, principal_angle, project_span, weighted_inner, weighted_norm, GroundSpace,
    KernelOperator, OperatorNorms, Subspace, Window,
};
pub use weights::{Role, WeightFunction};
