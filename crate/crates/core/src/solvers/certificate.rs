//! Dual-certificate optimality verification for the equality families.
//!
//! Given a candidate `X̂` with thin singular vectors `U, V`, the check
//! fits a least-norm dual `y` with `P_T(ℬ*y) ≈ UVᵀ` over the tangent
//! space `T` of `X̂`, then reports three quantities:
//!
//! * the tangent fit residual `‖P_T(ℬ*y) − UVᵀ‖_F`,
//! * the off-tangent operator norm `‖P_{T⊥}(ℬ*y)‖_op` (strictly below
//!   one certifies `X̂` as the unique minimizer given an exact fit),
//! * the duality gap `‖X̂‖_* − ⟨b, y/‖ℬ*y‖_op⟩` — the rescaled dual point
//!   is feasible by construction, so the gap bounds the suboptimality of
//!   `X̂` independently of how it was computed.
//!
//! A tangent element is determined by its components `(UᵀZ, ZV)`, so the
//! fit is a dense least-squares problem with only `r(d₁+d₂)` rows; the
//! least-norm solution comes from a clamped eigen pseudo-inverse of its
//! small Gram matrix.

use super::rescaled::RescaledMap;
use super::{CertificateReport, ConvexProgramSpec};
use crate::numlin::{nuclear_norm, operator_norm, EigenDecomposition, Spectrum};
use crate::rescaling::PSD_CLAMP_REL_TOL;
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

struct TangentProjector<T: Scalar> {
    pu: DMat<T>,
    pv: DMat<T>,
}

impl<T: Scalar> TangentProjector<T> {
    fn new(u: &DMat<T>, v: &DMat<T>) -> Self {
        Self {
            pu: u * u.transpose(),
            pv: v * v.transpose(),
        }
    }

    /// `P_T(Z) = UUᵀZ + ZVVᵀ − UUᵀZVVᵀ`.
    fn apply(&self, z: &DMat<T>) -> DMat<T> {
        let left = &self.pu * z;
        &left + z * &self.pv - left * &self.pv
    }

    /// `P_{T⊥}(Z) = (I − UUᵀ) Z (I − VVᵀ)`.
    fn apply_complement(&self, z: &DMat<T>) -> DMat<T> {
        let shrunk = z - &self.pu * z;
        &shrunk - shrunk.clone() * &self.pv
    }
}

/// Certify (near-)optimality of `X̂` for an equality-family program.
pub fn verify_optimality<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    x_hat: &DMat<T>,
) -> Result<CertificateReport<T>> {
    let (map, rhs) = match spec {
        ConvexProgramSpec::NuclearEquality {
            operator,
            rescaling,
            rhs,
        } => (RescaledMap::new(operator, rescaling, false)?, rhs),
        ConvexProgramSpec::NuclearSymmetric {
            operator,
            rescaling,
            rhs,
        } => (RescaledMap::new(operator, rescaling, true)?, rhs),
        _ => {
            return Err(Error::InvalidParameter(
                "certificates are defined for the equality families only".into(),
            ))
        }
    };

    let spectrum = Spectrum::compute(x_hat)?;
    let rank = spectrum.rank();
    let u = spectrum.left.columns(0, rank).clone_owned();
    let v = spectrum.right.columns(0, rank).clone_owned();
    let tangent = TangentProjector::new(&u, &v);
    let target = &u * v.transpose();
    let m = map.measurements();
    let (d1, d2) = (x_hat.nrows(), x_hat.ncols());

    // components (Uᵀℬᵢ, ℬᵢV) as columns of the fit matrix, target
    // components (Vᵀ-block = I_r stacked, U-block)
    let comp_rows = rank * d2 + d1 * rank;
    let mut y = DVec::<T>::zeros(m);
    if rank > 0 {
        let mut fit = DMat::<T>::zeros(comp_rows, m);
        for i in 0..m {
            let bi = map.measurement(i);
            let top = u.transpose() * &bi; // r × d2
            let bottom = &bi * &v; // d1 × r
            for (row, val) in top.iter().enumerate() {
                fit[(row, i)] = *val;
            }
            for (row, val) in bottom.iter().enumerate() {
                fit[(rank * d2 + row, i)] = *val;
            }
        }
        let mut t = DVec::<T>::zeros(comp_rows);
        let top_target = u.transpose() * &target;
        for (row, val) in top_target.iter().enumerate() {
            t[row] = *val;
        }
        let bottom_target = &target * &v;
        for (row, val) in bottom_target.iter().enumerate() {
            t[rank * d2 + row] = *val;
        }

        // least-norm solution y = Fᵀ (F Fᵀ)⁺ t
        let gram = &fit * fit.transpose();
        let eig = EigenDecomposition::compute(&gram)?;
        let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, l| a.max(*l));
        let clamp = scalar::<T>(PSD_CLAMP_REL_TOL) * lmax;
        let mut coeffs = eig.eigenvectors.transpose() * &t;
        for i in 0..coeffs.len() {
            coeffs[i] = if eig.eigenvalues[i] > clamp {
                coeffs[i] / eig.eigenvalues[i]
            } else {
                T::zero()
            };
        }
        y = fit.transpose() * (&eig.eigenvectors * coeffs);
    }

    let lifted = map.adjoint(&y);
    let tangent_residual = (tangent.apply(&lifted) - &target).norm();
    let offtangent_opnorm = operator_norm(&tangent.apply_complement(&lifted));
    let dual_scale = operator_norm(&lifted);
    let dual_value = if dual_scale > T::zero() {
        rhs.dot(&y) / dual_scale
    } else {
        T::zero()
    };
    Ok(CertificateReport {
        tangent_residual,
        offtangent_opnorm,
        duality_gap: nuclear_norm(x_hat) - dual_value,
    })
}
