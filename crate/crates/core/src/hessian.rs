//! Hessian traces of the factorized fitting losses, computed two ways.
//!
//! For the asymmetric loss `f(L,R) = ‖𝒜(LRᵀ) − b‖²` the flatness measure
//! is the *scaled trace*: the Hessian quadratic form summed over all
//! coordinate directions, with weights `1/d₁` on the `L` block and `1/d₂`
//! on the `R` block. On the solution set it collapses to
//!
//! ```text
//! str = 2m (‖D₁L‖²_F + ‖D₂R‖²_F).
//! ```
//!
//! For the symmetric network loss `f(U₁,U₂) = (1/m)‖𝒜(U₁U₁ᵀ − U₂U₂ᵀ −
//! M)‖²` the plain trace is used, and equals `8d(‖DU₁‖²_F + ‖DU₂‖²_F)`;
//! for the Hadamard-product loss `f(v) = (1/m)‖A(v₁⊙⋯⊙v_k) − b‖²` it is
//! `2 Σₕ ‖√D (⊙_{l≠h} v_l)‖²`. (The minimizers are insensitive to the
//! leading constants; the constants here are the ones a coordinate-basis
//! enumeration of the quadratic form produces, which is what
//! [`scaled_trace_direct`] computes and what the closed forms must match.)
//!
//! [`scaled_trace_direct`] is the trusted oracle — `O(d·k)` forward
//! applications, never used inside solvers. [`scaled_trace_closed`] is
//! the cheap formula the relaxations are built on.

use crate::ensembles::{OperatorKind, SensingOperator};
use crate::numlin::to_f64;
use crate::rescaling::{RescalingKind, RescalingPair};
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

/// Residual tolerance under which factors count as interpolating.
pub const INTERPOLATION_TOL: f64 = 1e-8;

/// A candidate solution of the factorized problem.
#[derive(Debug, Clone)]
pub enum FactorPair<T: Scalar> {
    /// `L ∈ ℝ^{d₁×k}`, `R ∈ ℝ^{d₂×k}` for the `LRᵀ` parameterization.
    Asymmetric { left: DMat<T>, right: DMat<T> },
    /// `U₁ ∈ ℝ^{d×k₁}`, `U₂ ∈ ℝ^{d×k₂}` for `U₁U₁ᵀ − U₂U₂ᵀ`.
    SymmetricSigned { u1: DMat<T>, u2: DMat<T> },
    /// `k` vectors in `ℝ^d` multiplied entrywise.
    Hadamard { factors: Vec<DVec<T>> },
}

impl<T: Scalar> FactorPair<T> {
    /// The matrix the factors parameterize (`d × 1` in the Hadamard case).
    pub fn product(&self) -> DMat<T> {
        match self {
            FactorPair::Asymmetric { left, right } => left * right.transpose(),
            FactorPair::SymmetricSigned { u1, u2 } => {
                u1 * u1.transpose() - u2 * u2.transpose()
            }
            FactorPair::Hadamard { factors } => {
                let d = factors[0].len();
                let mut prod = DVec::from_element(d, T::one());
                for v in factors {
                    prod.component_mul_assign(v);
                }
                DMat::from_column_slice(d, 1, prod.as_slice())
            }
        }
    }

    fn check_compatible(&self, op: &SensingOperator<T>) -> Result<()> {
        let ok = match self {
            FactorPair::Asymmetric { left, right } => {
                matches!(
                    op.kind(),
                    OperatorKind::Identity
                        | OperatorKind::Gaussian
                        | OperatorKind::Bilinear
                        | OperatorKind::Completion
                ) && left.nrows() == op.d1()
                    && right.nrows() == op.d2()
                    && left.ncols() == right.ncols()
                    && left.ncols() >= 1
            }
            FactorPair::SymmetricSigned { u1, u2 } => {
                op.kind() == OperatorKind::Quadratic
                    && u1.nrows() == op.d1()
                    && u2.nrows() == op.d1()
            }
            FactorPair::Hadamard { factors } => {
                op.kind() == OperatorKind::HadamardColumns
                    && factors.len() >= 2
                    && factors.iter().all(|v| v.len() == op.d1())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "factor pair does not fit a {} operator of size {}×{}",
                op.kind().as_str(),
                op.d1(),
                op.d2()
            )))
        }
    }
}

/// Entrywise product of all factors except index `h`.
fn leave_one_out_product<T: Scalar>(factors: &[DVec<T>], h: usize) -> DVec<T> {
    let d = factors[0].len();
    let mut w = DVec::from_element(d, T::one());
    for (l, v) in factors.iter().enumerate() {
        if l != h {
            w.component_mul_assign(v);
        }
    }
    w
}

/// Evaluate the (scaled) Hessian trace by enumerating the quadratic form
/// over every coordinate basis direction. Requires interpolating factors:
/// `‖𝒜(product) − b‖₂ ≤ 1e−8`.
pub fn scaled_trace_direct<T: Scalar>(
    op: &SensingOperator<T>,
    factors: &FactorPair<T>,
    b: &DVec<T>,
) -> Result<T> {
    factors.check_compatible(op)?;
    let residual = (op.forward(&factors.product())? - b).norm();
    if to_f64(residual) > INTERPOLATION_TOL {
        return Err(Error::NotInterpolating {
            residual: to_f64(residual),
        });
    }
    scaled_trace_direct_unchecked(op, factors)
}

/// Basis enumeration without the interpolation check, for diagnostics at
/// arbitrary points. At non-interpolating points the quadratic form this
/// sums is the Gauss-Newton part of the Hessian only.
pub fn scaled_trace_direct_unchecked<T: Scalar>(
    op: &SensingOperator<T>,
    factors: &FactorPair<T>,
) -> Result<T> {
    factors.check_compatible(op)?;
    let two = scalar::<T>(2.0);
    match factors {
        FactorPair::Asymmetric { left, right } => {
            let (d1, d2) = (op.d1(), op.d2());
            let k = left.ncols();
            let mut acc1 = T::zero();
            for i in 0..d1 {
                for j in 0..k {
                    let mut dir = DMat::zeros(d1, d2);
                    dir.row_mut(i).copy_from(&right.column(j).transpose());
                    acc1 += op.forward(&dir)?.norm_squared();
                }
            }
            let mut acc2 = T::zero();
            for i in 0..d2 {
                for j in 0..k {
                    let mut dir = DMat::zeros(d1, d2);
                    dir.column_mut(i).copy_from(&left.column(j));
                    acc2 += op.forward(&dir)?.norm_squared();
                }
            }
            Ok(two * acc1 / scalar(d1 as f64) + two * acc2 / scalar(d2 as f64))
        }
        FactorPair::SymmetricSigned { u1, u2 } => {
            let d = op.d1();
            let m = scalar::<T>(op.measurements() as f64);
            let mut acc = T::zero();
            for u in [u1, u2] {
                for j in 0..u.ncols() {
                    let col = u.column(j).clone_owned();
                    for i in 0..d {
                        // direction e_i in column j: Δ = u_j e_iᵀ + e_i u_jᵀ
                        let mut dir = DMat::zeros(d, d);
                        dir.column_mut(i).copy_from(&col);
                        let mut sym = dir.transpose();
                        sym += &dir;
                        acc += op.forward(&sym)?.norm_squared();
                    }
                }
            }
            Ok(two * acc / m)
        }
        FactorPair::Hadamard { factors } => {
            let d = op.d1();
            let m = scalar::<T>(op.measurements() as f64);
            let mut acc = T::zero();
            for h in 0..factors.len() {
                let w = leave_one_out_product(factors, h);
                for j in 0..d {
                    let mut dir = DMat::zeros(d, 1);
                    dir[(j, 0)] = w[j];
                    acc += op.forward(&dir)?.norm_squared();
                }
            }
            Ok(two * acc / m)
        }
    }
}

/// Evaluate the (scaled) Hessian trace through the rescaling matrices.
/// Pure formula evaluation; no interpolation requirement, since this is
/// exactly the objective the convex relaxations minimize.
pub fn scaled_trace_closed<T: Scalar>(
    op: &SensingOperator<T>,
    pair: &RescalingPair<T>,
    factors: &FactorPair<T>,
) -> Result<T> {
    factors.check_compatible(op)?;
    let two = scalar::<T>(2.0);
    match factors {
        FactorPair::Asymmetric { left, right } => {
            if pair.kind() != RescalingKind::Pair {
                return Err(Error::DimensionMismatch(
                    "asymmetric factors need a D1/D2 rescaling pair".into(),
                ));
            }
            let m = scalar::<T>(op.measurements() as f64);
            let dl = pair.d1_matrix() * left;
            let dr = pair.d2_matrix() * right;
            Ok(two * m * (dl.norm_squared() + dr.norm_squared()))
        }
        FactorPair::SymmetricSigned { u1, u2 } => {
            if pair.kind() != RescalingKind::Symmetric {
                return Err(Error::DimensionMismatch(
                    "symmetric factors need the single-D rescaling".into(),
                ));
            }
            let d = scalar::<T>(op.d1() as f64);
            let du1 = pair.d1_matrix() * u1;
            let du2 = pair.d1_matrix() * u2;
            Ok(scalar::<T>(8.0) * d * (du1.norm_squared() + du2.norm_squared()))
        }
        FactorPair::Hadamard { factors } => {
            if pair.kind() != RescalingKind::DepthDiagonal {
                return Err(Error::DimensionMismatch(
                    "Hadamard factors need the diagonal depth rescaling".into(),
                ));
            }
            let diag = pair.d1_matrix();
            let mut acc = T::zero();
            for h in 0..factors.len() {
                let w = leave_one_out_product(factors, h);
                for j in 0..w.len() {
                    acc += diag[(j, j)] * w[j] * w[j];
                }
            }
            Ok(two * acc)
        }
    }
}
