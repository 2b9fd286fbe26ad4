//! The rescaled measurement map `ℬ(X) = 𝒜(D₁⁻¹ X D₂⁻¹)` and its affine
//! projections, precomputed once per solve.
//!
//! Two bodies: a dense row matrix (one row per `vec(D₁⁻¹AᵢD₂⁻¹)ᵀ`), and an
//! entrywise-scale fast path for completion ensembles with diagonal
//! rescalings, whose Gram matrix is diagonal.

use nalgebra::{Cholesky, Dyn};

use crate::ensembles::{OperatorKind, SensingOperator};
use crate::numlin::EigenDecomposition;
use crate::rescaling::{RescalingPair, PSD_CLAMP_REL_TOL};
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

pub(crate) enum Body<T: Scalar> {
    Dense { rows: DMat<T> },
    EntryScale { coef: DMat<T> },
}

pub(crate) struct RescaledMap<T: Scalar> {
    d1: usize,
    d2: usize,
    m: usize,
    body: Body<T>,
}

fn is_diagonal<T: Scalar>(x: &DMat<T>) -> bool {
    let scale = x.norm();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if i != j && x[(i, j)].abs() > scalar::<T>(1e-14) * scale {
                return false;
            }
        }
    }
    true
}

impl<T: Scalar> RescaledMap<T> {
    /// Precompute the rescaled map. `symmetrize` replaces each measurement
    /// matrix by its symmetric part, which leaves the action on symmetric
    /// inputs unchanged and keeps the whole iteration in the symmetric
    /// subspace (used by the symmetric program family).
    pub fn new(
        op: &SensingOperator<T>,
        pair: &RescalingPair<T>,
        symmetrize: bool,
    ) -> Result<Self> {
        let (d1, d2, m) = (op.d1(), op.d2(), op.measurements());
        if pair.d1_matrix().nrows() != d1 || pair.d2_matrix().nrows() != d2 {
            return Err(Error::DimensionMismatch(
                "rescaling pair does not match operator dimensions".into(),
            ));
        }
        let inv1 = pair.inverse_d1()?;
        let inv2 = pair.inverse_d2()?;

        if op.kind() == OperatorKind::Completion
            && !symmetrize
            && is_diagonal(pair.d1_matrix())
            && is_diagonal(pair.d2_matrix())
        {
            let mask = op.mask().expect("completion carries a mask");
            let mut coef = DMat::zeros(d1, d2);
            for j in 0..d2 {
                for i in 0..d1 {
                    coef[(i, j)] = mask[(i, j)] * inv1[(i, i)] * inv2[(j, j)];
                }
            }
            return Ok(Self {
                d1,
                d2,
                m,
                body: Body::EntryScale { coef },
            });
        }

        let n = d1 * d2;
        let mut rows = DMat::zeros(m, n);
        let half = scalar::<T>(0.5);
        for i in 0..m {
            let mut bi = inv1 * op.measurement_matrix(i) * inv2;
            if symmetrize {
                bi = (&bi + bi.transpose()) * half;
            }
            for (j, v) in bi.iter().enumerate() {
                rows[(i, j)] = *v;
            }
        }
        Ok(Self {
            d1,
            d2,
            m,
            body: Body::Dense { rows },
        })
    }

    pub fn measurements(&self) -> usize {
        self.m
    }

    /// Materialize the rescaled measurement matrix `D₁⁻¹AᵢD₂⁻¹`.
    pub fn measurement(&self, i: usize) -> DMat<T> {
        match &self.body {
            Body::Dense { rows } => {
                DMat::from_column_slice(self.d1, self.d2, rows.row(i).transpose().as_slice())
            }
            Body::EntryScale { coef } => {
                let (r, c) = (i % self.d1, i / self.d1);
                let mut b = DMat::zeros(self.d1, self.d2);
                b[(r, c)] = coef[(r, c)];
                b
            }
        }
    }

    pub fn forward(&self, x: &DMat<T>) -> DVec<T> {
        match &self.body {
            Body::Dense { rows } => rows * DVec::from_column_slice(x.as_slice()),
            Body::EntryScale { coef } => {
                DVec::from_column_slice(x.component_mul(coef).as_slice())
            }
        }
    }

    pub fn adjoint(&self, y: &DVec<T>) -> DMat<T> {
        match &self.body {
            Body::Dense { rows } => {
                let v = rows.transpose() * y;
                DMat::from_column_slice(self.d1, self.d2, v.as_slice())
            }
            Body::EntryScale { coef } => {
                DMat::from_column_slice(self.d1, self.d2, y.as_slice()).component_mul(coef)
            }
        }
    }

    /// Gram matrix `ℬℬ*` (dense body only).
    fn gram(&self) -> DMat<T> {
        match &self.body {
            Body::Dense { rows } => rows * rows.transpose(),
            Body::EntryScale { .. } => unreachable!("diagonal bodies never build a dense Gram"),
        }
    }

    /// Projector onto the affine subspace `{Z : ℬ(Z) = b}` (pseudo-
    /// projection when the Gram matrix is rank deficient).
    pub fn affine_projector(&self) -> Result<AffineProjector<T>> {
        let factor = match &self.body {
            Body::EntryScale { coef } => {
                let inv_diag = DVec::from_iterator(
                    self.m,
                    coef.iter().map(|c| {
                        let g = *c * *c;
                        if g > T::zero() {
                            T::one() / g
                        } else {
                            T::zero()
                        }
                    }),
                );
                let pseudo = coef.iter().any(|c| *c == T::zero());
                GramFactor::Diagonal { inv_diag, pseudo }
            }
            Body::Dense { .. } => {
                let gram = self.gram();
                match Cholesky::new(gram.clone()) {
                    Some(chol) => GramFactor::Chol(chol),
                    None => {
                        // rank-deficient Gram: clamped eigen pseudo-inverse
                        let eig = EigenDecomposition::compute(&gram)?;
                        let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, l| a.max(*l));
                        let clamp = scalar::<T>(PSD_CLAMP_REL_TOL) * lmax;
                        let inv_diag = DVec::from_iterator(
                            self.m,
                            eig.eigenvalues.iter().map(|l| {
                                if *l > clamp {
                                    T::one() / *l
                                } else {
                                    T::zero()
                                }
                            }),
                        );
                        GramFactor::Pseudo {
                            q: eig.eigenvectors,
                            inv_diag,
                        }
                    }
                }
            }
        };
        Ok(AffineProjector { factor })
    }

    /// Cholesky factor of `I + ℬℬ*`, always positive definite; used by the
    /// ball solver's normal equations through the Woodbury identity.
    pub fn ridge_factor(&self) -> Result<RidgeFactor<T>> {
        match &self.body {
            Body::Dense { .. } => {
                let mut g = self.gram();
                for i in 0..self.m {
                    g[(i, i)] += T::one();
                }
                Cholesky::new(g)
                    .map(|chol| RidgeFactor::Chol(chol))
                    .ok_or(Error::DecompositionFailure)
            }
            Body::EntryScale { coef } => Ok(RidgeFactor::Diagonal {
                inv_diag: DVec::from_iterator(
                    self.m,
                    coef.iter().map(|c| T::one() / (T::one() + *c * *c)),
                ),
            }),
        }
    }
}

pub(crate) enum GramFactor<T: Scalar> {
    Chol(Cholesky<T, Dyn>),
    Pseudo { q: DMat<T>, inv_diag: DVec<T> },
    Diagonal { inv_diag: DVec<T>, pseudo: bool },
}

pub(crate) struct AffineProjector<T: Scalar> {
    factor: GramFactor<T>,
}

impl<T: Scalar> AffineProjector<T> {
    pub fn is_pseudo(&self) -> bool {
        match &self.factor {
            GramFactor::Chol(_) => false,
            GramFactor::Pseudo { .. } => true,
            GramFactor::Diagonal { pseudo, .. } => *pseudo,
        }
    }

    fn gram_solve(&self, r: &DVec<T>) -> DVec<T> {
        match &self.factor {
            GramFactor::Chol(chol) => chol.solve(r),
            GramFactor::Pseudo { q, inv_diag } => {
                let mut coeffs = q.transpose() * r;
                for i in 0..coeffs.len() {
                    coeffs[i] *= inv_diag[i];
                }
                q * coeffs
            }
            GramFactor::Diagonal { inv_diag, .. } => {
                DVec::from_fn(r.len(), |i, _| r[i] * inv_diag[i])
            }
        }
    }

    /// `Π(V) = V − ℬ*(G⁺(ℬ(V) − b))`.
    pub fn project(&self, map: &RescaledMap<T>, v: &DMat<T>, b: &DVec<T>) -> DMat<T> {
        let residual = map.forward(v) - b;
        let correction = self.gram_solve(&residual);
        v - map.adjoint(&correction)
    }
}

pub(crate) enum RidgeFactor<T: Scalar> {
    Chol(Cholesky<T, Dyn>),
    Diagonal { inv_diag: DVec<T> },
}

impl<T: Scalar> RidgeFactor<T> {
    fn solve(&self, r: &DVec<T>) -> DVec<T> {
        match self {
            RidgeFactor::Chol(chol) => chol.solve(r),
            RidgeFactor::Diagonal { inv_diag } => {
                DVec::from_fn(r.len(), |i, _| r[i] * inv_diag[i])
            }
        }
    }

    /// Solve `(I + ℬ*ℬ) Z = rhs` via `Z = rhs − ℬ*((I+G)⁻¹ ℬ(rhs))`.
    pub fn solve_ridge(&self, map: &RescaledMap<T>, rhs: &DMat<T>) -> DMat<T> {
        let br = map.forward(rhs);
        let corr = self.solve(&br);
        rhs - map.adjoint(&corr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rescaling::build_rescaling;
    use crate::rng;

    #[test]
    fn projection_lands_on_affine_set_and_is_idempotent() {
        let op = SensingOperator::<f64>::gaussian(4, 5, 9, 3).unwrap();
        let pair = build_rescaling(&op).unwrap();
        let map = RescaledMap::new(&op, &pair, false).unwrap();
        let proj = map.affine_projector().unwrap();
        assert!(!proj.is_pseudo());

        let mut s = rng::stream(5, "proj-test", &[]);
        let x_true = rng::normal_matrix::<f64>(&mut s, 4, 5);
        let b = map.forward(&x_true);
        let v = rng::normal_matrix::<f64>(&mut s, 4, 5);
        let z = proj.project(&map, &v, &b);
        assert!((map.forward(&z) - &b).norm() < 1e-10);
        let z2 = proj.project(&map, &z, &b);
        assert!((&z2 - &z).norm() < 1e-10);
        // projection shortens: ‖v − z‖ ≤ ‖v − x_true‖ since x_true feasible
        assert!((&v - &z).norm() <= (&v - &x_true).norm() + 1e-12);
    }

    #[test]
    fn completion_uses_diagonal_path() {
        let op = SensingOperator::<f64>::completion(5, 5, 0.6, 7).unwrap();
        let pair = build_rescaling(&op).unwrap();
        if pair.is_singular() {
            return; // empty row/column at this seed; nothing to test
        }
        let map = RescaledMap::new(&op, &pair, false).unwrap();
        assert!(matches!(map.body, Body::EntryScale { .. }));
        let proj = map.affine_projector().unwrap();

        let mut s = rng::stream(8, "proj-completion", &[]);
        let x_true = rng::normal_matrix::<f64>(&mut s, 5, 5);
        let b = map.forward(&x_true);
        let v = rng::normal_matrix::<f64>(&mut s, 5, 5);
        let z = proj.project(&map, &v, &b);
        assert!((map.forward(&z) - &b).norm() < 1e-12);

        // adjoint consistency on the fast path
        let y = rng::normal_vector::<f64>(&mut s, map.measurements());
        let lhs = map.forward(&v).dot(&y);
        let rhs = v.dot(&map.adjoint(&y));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn rank_deficient_gram_falls_back_to_pseudo() {
        // quadratic ensembles span only the symmetric subspace, so with
        // m > d(d+1)/2 the Gram matrix is always rank deficient
        let op = SensingOperator::<f64>::quadratic(4, 20, 9).unwrap();
        let pair = build_rescaling(&op).unwrap();
        let map = RescaledMap::new(&op, &pair, true).unwrap();
        let proj = map.affine_projector().unwrap();
        assert!(proj.is_pseudo());

        let mut s = rng::stream(10, "pseudo", &[]);
        let raw = rng::normal_matrix::<f64>(&mut s, 4, 4);
        let x_true = (&raw + raw.transpose()) * 0.5;
        let b = map.forward(&x_true);
        let v_raw = rng::normal_matrix::<f64>(&mut s, 4, 4);
        let v = (&v_raw + v_raw.transpose()) * 0.5;
        let z = proj.project(&map, &v, &b);
        assert!((map.forward(&z) - &b).norm() < 1e-9);
        // symmetrized rows keep the projection inside the symmetric subspace
        assert!((&z - z.transpose()).norm() < 1e-12);
    }

    #[test]
    fn ridge_solves_regularized_normal_equations() {
        let op = SensingOperator::<f64>::gaussian(3, 4, 20, 11).unwrap();
        let pair = build_rescaling(&op).unwrap();
        let map = RescaledMap::new(&op, &pair, false).unwrap();
        let ridge = map.ridge_factor().unwrap();
        let mut s = rng::stream(12, "ridge", &[]);
        let rhs = rng::normal_matrix::<f64>(&mut s, 3, 4);
        let z = ridge.solve_ridge(&map, &rhs);
        let lhs = &z + map.adjoint(&map.forward(&z));
        assert!((lhs - &rhs).norm() < 1e-10);
    }
}
