//! Flat-minima analysis for overparameterized low-rank recovery.
//!
//! When a rank-`r` matrix is recovered by fitting an overparameterized
//! factorization `L Rᵀ` to linear measurements `𝒜(L Rᵀ) = b`, the set of
//! interpolating factor pairs is a continuum. Among them, the *flat* ones
//! minimize the (scaled) trace of the Hessian of the fitting loss. This
//! crate provides the machinery to study those solutions numerically:
//!
//! * [`ensembles`] — random measurement models (Gaussian, bilinear,
//!   Bernoulli completion, quadratic features, vector sensing), with
//!   deterministic seeded sampling and true forward/adjoint pairs;
//! * [`rescaling`] — the PSD rescaling matrices `D₁, D₂` built from the
//!   second moments of the measurement matrices, their conditioning, and
//!   empirical restricted-isometry estimates;
//! * [`hessian`] — the scaled Hessian trace evaluated both directly (basis
//!   enumeration of the quadratic form) and through closed forms in terms
//!   of `D₁, D₂`;
//! * [`solvers`] — first-order splitting solvers for the convex programs
//!   that characterize flat solutions (rescaled nuclear-norm minimization
//!   and friends), plus dual-certificate optimality checks;
//! * [`recovery`] — end-to-end pipelines: solve the relaxation, extract
//!   balanced factors, and compute recovery/regularity metrics;
//! * [`numlin`] — the dense kernels and proximal/projection primitives
//!   shared by everything above.
//!
//! All numeric code is generic over the scalar type through [`Scalar`];
//! `f64` is what the experiment harness uses and what the concrete
//! aliases at the crate root refer to.

pub mod ensembles;
pub mod hessian;
pub mod numlin;
pub mod recovery;
pub mod rescaling;
pub mod rng;
pub mod solvers;

use nalgebra::{DMatrix, DVector};

/// Scalar type for all dense kernels: `f32` or `f64`.
///
/// `nalgebra::RealField` supplies the field operations, comparisons and
/// elementary functions; everything else (conversions from `f64`
/// constants, `NaN`/infinity handling) goes through [`nalgebra::convert`].
pub trait Scalar: nalgebra::RealField + Copy {}
impl<T: nalgebra::RealField + Copy> Scalar for T {}

/// Dynamically sized matrix over a generic scalar.
pub type DMat<T> = DMatrix<T>;
/// Dynamically sized column vector over a generic scalar.
pub type DVec<T> = DVector<T>;

/// Concrete matrix type used by the CLI and experiments.
pub type Mat64 = DMatrix<f64>;
/// Concrete vector type used by the CLI and experiments.
pub type Vec64 = DVector<f64>;
/// Single-precision matrix alias.
pub type Mat32 = DMatrix<f32>;
/// Single-precision vector alias.
pub type Vec32 = DVector<f32>;

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn scalar<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input contains non-finite entries")]
    NonFiniteInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator kind {found} not valid here: {expected}")]
    WrongOperatorKind { expected: String, found: String },
    #[error("rescaling matrix is singular: {0}")]
    SingularRescaling(String),
    #[error("dense decomposition failed to converge")]
    DecompositionFailure,
    #[error("factors do not interpolate the measurements (residual {residual:.3e})")]
    NotInterpolating { residual: f64 },
    #[error("requested factor width {k} is below the numerical rank {rank}")]
    WidthBelowRank { k: usize, rank: usize },
    #[error("infeasible input: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
