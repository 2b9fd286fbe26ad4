//! First-order splitting solvers for the convex programs that
//! characterize flat solutions, plus dual-certificate optimality checks.
//!
//! Five program families:
//!
//! * `nuclear-equality` — `min ‖X‖_*` s.t. `𝒜(D₁⁻¹XD₂⁻¹) = b`;
//! * `nuclear-ball` — the same with `‖𝒜(D₁⁻¹XD₂⁻¹) − b‖₂ ≤ radius`;
//! * `robust-pca` — `min ‖X‖_*` s.t. `‖Y − X‖₁ ≤ radius`;
//! * `nuclear-symmetric` — the equality program over symmetric `X` with a
//!   single rescaling `D` (quadratic-feature and split-pair ensembles);
//! * `weighted-lp` — `min Σ wⱼ|xⱼ|^p` s.t. `Ax = b` with `p ∈ [1, 2)`.
//!
//! Every solver is an ADMM iteration built from the proximal kernels in
//! [`crate::numlin`] and a precomputed affine projection. Non-convergence
//! within `max_iter` is reported in the [`SolverReport`], never raised as
//! an error; the experiment harness treats it as data.

mod admm;
mod certificate;
mod rescaled;

pub use certificate::verify_optimality;

use serde::Serialize;

use crate::ensembles::{OperatorKind, SensingOperator};
use crate::numlin::to_f64;
use crate::rescaling::{RescalingKind, RescalingPair};
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

/// Which relaxation a [`ConvexProgramSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProgramFamily {
    NuclearEquality,
    NuclearBall,
    RobustPca,
    NuclearSymmetric,
    WeightedLp,
}

/// A fully specified convex program instance.
#[derive(Debug, Clone)]
pub enum ConvexProgramSpec<T: Scalar> {
    NuclearEquality {
        operator: SensingOperator<T>,
        rescaling: RescalingPair<T>,
        rhs: DVec<T>,
    },
    NuclearBall {
        operator: SensingOperator<T>,
        rescaling: RescalingPair<T>,
        rhs: DVec<T>,
        radius: T,
    },
    RobustPca {
        observation: DMat<T>,
        radius: T,
    },
    NuclearSymmetric {
        operator: SensingOperator<T>,
        rescaling: RescalingPair<T>,
        rhs: DVec<T>,
    },
    WeightedLp {
        operator: SensingOperator<T>,
        weights: DVec<T>,
        power: T,
        rhs: DVec<T>,
    },
}

fn check_equality_inputs<T: Scalar>(
    operator: &SensingOperator<T>,
    rescaling: &RescalingPair<T>,
    rhs: &DVec<T>,
) -> Result<()> {
    if rhs.len() != operator.measurements() {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} entries for {} measurements",
            rhs.len(),
            operator.measurements()
        )));
    }
    if rescaling.d1_matrix().nrows() != operator.d1()
        || rescaling.d2_matrix().nrows() != operator.d2()
    {
        return Err(Error::DimensionMismatch(
            "rescaling does not match operator dimensions".into(),
        ));
    }
    Ok(())
}

impl<T: Scalar> ConvexProgramSpec<T> {
    pub fn nuclear_equality(
        operator: SensingOperator<T>,
        rescaling: RescalingPair<T>,
        rhs: DVec<T>,
    ) -> Result<Self> {
        check_equality_inputs(&operator, &rescaling, &rhs)?;
        if matches!(
            operator.kind(),
            OperatorKind::Quadratic | OperatorKind::SplitBilinear
        ) {
            return Err(Error::WrongOperatorKind {
                expected: "an asymmetric ensemble (use the symmetric family for quadratic maps)"
                    .into(),
                found: operator.kind().as_str().into(),
            });
        }
        Ok(Self::NuclearEquality {
            operator,
            rescaling,
            rhs,
        })
    }

    pub fn nuclear_ball(
        operator: SensingOperator<T>,
        rescaling: RescalingPair<T>,
        rhs: DVec<T>,
        radius: T,
    ) -> Result<Self> {
        check_equality_inputs(&operator, &rescaling, &rhs)?;
        if radius < T::zero() {
            return Err(Error::InvalidParameter("ball radius must be ≥ 0".into()));
        }
        Ok(Self::NuclearBall {
            operator,
            rescaling,
            rhs,
            radius,
        })
    }

    pub fn robust_pca(observation: DMat<T>, radius: T) -> Result<Self> {
        if radius < T::zero() {
            return Err(Error::InvalidParameter("ℓ₁ radius must be ≥ 0".into()));
        }
        Ok(Self::RobustPca {
            observation,
            radius,
        })
    }

    pub fn nuclear_symmetric(
        operator: SensingOperator<T>,
        rescaling: RescalingPair<T>,
        rhs: DVec<T>,
    ) -> Result<Self> {
        check_equality_inputs(&operator, &rescaling, &rhs)?;
        if !matches!(
            operator.kind(),
            OperatorKind::Quadratic | OperatorKind::SplitBilinear
        ) {
            return Err(Error::WrongOperatorKind {
                expected: "quadratic or split-bilinear".into(),
                found: operator.kind().as_str().into(),
            });
        }
        if rescaling.kind() != RescalingKind::Symmetric {
            return Err(Error::InvalidParameter(
                "the symmetric family needs the single-D rescaling".into(),
            ));
        }
        Ok(Self::NuclearSymmetric {
            operator,
            rescaling,
            rhs,
        })
    }

    pub fn weighted_lp(
        operator: SensingOperator<T>,
        weights: DVec<T>,
        power: T,
        rhs: DVec<T>,
    ) -> Result<Self> {
        if operator.kind() != OperatorKind::HadamardColumns {
            return Err(Error::WrongOperatorKind {
                expected: "hadamard-columns".into(),
                found: operator.kind().as_str().into(),
            });
        }
        if power < T::one() || power >= scalar::<T>(2.0) {
            return Err(Error::InvalidParameter(format!(
                "weighted-ℓᵖ exponent must lie in [1, 2), got {}",
                to_f64(power)
            )));
        }
        if weights.len() != operator.d1() || weights.iter().any(|w| *w <= T::zero()) {
            return Err(Error::InvalidParameter(
                "weights must be positive, one per coordinate".into(),
            ));
        }
        if rhs.len() != operator.measurements() {
            return Err(Error::DimensionMismatch("rhs length mismatch".into()));
        }
        Ok(Self::WeightedLp {
            operator,
            weights,
            power,
            rhs,
        })
    }

    /// Depth-`k` instance: exponent `2 − 2/k` with the diagonal rescaling
    /// as weights. Requires `k ≥ 2` so the program is convex.
    pub fn weighted_lp_depth(
        operator: SensingOperator<T>,
        rescaling: &RescalingPair<T>,
        k: usize,
        rhs: DVec<T>,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "depth must be at least 2, got {k}"
            )));
        }
        if rescaling.kind() != RescalingKind::DepthDiagonal {
            return Err(Error::InvalidParameter(
                "depth programs need the diagonal rescaling".into(),
            ));
        }
        let d = rescaling.d1_matrix().nrows();
        let weights = DVec::from_fn(d, |j, _| rescaling.d1_matrix()[(j, j)].abs());
        let power = scalar::<T>(2.0 - 2.0 / k as f64);
        Self::weighted_lp(operator, weights, power, rhs)
    }

    pub fn family(&self) -> ProgramFamily {
        match self {
            Self::NuclearEquality { .. } => ProgramFamily::NuclearEquality,
            Self::NuclearBall { .. } => ProgramFamily::NuclearBall,
            Self::RobustPca { .. } => ProgramFamily::RobustPca,
            Self::NuclearSymmetric { .. } => ProgramFamily::NuclearSymmetric,
            Self::WeightedLp { .. } => ProgramFamily::WeightedLp,
        }
    }
}

/// Splitting-method parameters.
#[derive(Debug, Clone)]
pub struct SolverConfig<T: Scalar> {
    /// Initial penalty parameter.
    pub rho: T,
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_iter: usize,
    /// Residual balancing: multiply/divide the penalty by
    /// `balance_factor` when one residual exceeds the other by more than
    /// `balance_ratio`.
    pub adaptive_penalty: bool,
    pub balance_ratio: T,
    pub balance_factor: T,
    /// Record the combined residual per iteration (diagnostics).
    pub record_history: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            rho: T::one(),
            abs_tol: scalar(1e-10),
            rel_tol: scalar(1e-10),
            max_iter: 100_000,
            adaptive_penalty: true,
            balance_ratio: scalar(10.0),
            balance_factor: scalar(2.0),
            record_history: false,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    /// Looser tolerances for noisy programs where errors are O(σ).
    pub fn relaxed(mut self, tol: f64, max_iter: usize) -> Self {
        self.abs_tol = scalar(tol);
        self.rel_tol = scalar(tol);
        self.max_iter = max_iter;
        self
    }
}

/// Optimality certificate for the equality-constrained nuclear programs.
#[derive(Debug, Clone)]
pub struct CertificateReport<T: Scalar> {
    /// `‖P_T(ℬ*y) − UVᵀ‖_F` for the fitted dual `y`.
    pub tangent_residual: T,
    /// `‖P_{T⊥}(ℬ*y)‖_op`; strictly below one certifies uniqueness.
    pub offtangent_opnorm: T,
    /// `‖X̂‖_* − ⟨b, y/‖ℬ*y‖_op⟩`, nonnegative up to round-off.
    pub duality_gap: T,
}

/// Outcome of one solve.
#[derive(Debug, Clone)]
pub struct SolverReport<T: Scalar> {
    /// Solution estimate (`d × 1` for the vector family).
    pub x_hat: DMat<T>,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    /// Objective value at `x_hat`.
    pub objective: T,
    /// Residual-based stopping reached within `max_iter`.
    pub converged: bool,
    /// The affine projection used a rank-deficient (pseudo) Gram inverse.
    pub pseudo_projection: bool,
    /// Constraint violation at `x_hat` (distance to the feasible set in
    /// the family's constraint norm).
    pub feasibility_gap: T,
    /// Combined residual per iteration when history recording is on.
    pub residual_history: Vec<f64>,
    pub certificate: Option<CertificateReport<T>>,
}

impl<T: Scalar> SolverReport<T> {
    pub fn summary(&self) -> SolverSummary {
        SolverSummary {
            iterations: self.iterations,
            primal_residual: to_f64(self.primal_residual),
            dual_residual: to_f64(self.dual_residual),
            objective: to_f64(self.objective),
            converged: self.converged,
            pseudo_projection: self.pseudo_projection,
            feasibility_gap: to_f64(self.feasibility_gap),
            duality_gap: self.certificate.as_ref().map(|c| to_f64(c.duality_gap)),
        }
    }

    /// The solution as a vector (weighted-ℓᵖ family).
    pub fn x_vec(&self) -> DVec<T> {
        DVec::from_column_slice(self.x_hat.as_slice())
    }
}

/// JSON-friendly summary of a [`SolverReport`].
#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub converged: bool,
    pub pseudo_projection: bool,
    pub feasibility_gap: f64,
    pub duality_gap: Option<f64>,
}

/// Solve a program with the family-appropriate splitting.
pub fn solve<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    config: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    match spec.family() {
        ProgramFamily::NuclearEquality => solve_nuclear_equality(spec, config),
        ProgramFamily::NuclearBall => solve_nuclear_ball(spec, config),
        ProgramFamily::RobustPca => solve_robust_pca(spec, config),
        ProgramFamily::NuclearSymmetric => solve_nuclear_symmetric(spec, config),
        ProgramFamily::WeightedLp => solve_weighted_lp(spec, config),
    }
}

/// `min ‖X‖_*` subject to `𝒜(D₁⁻¹XD₂⁻¹) = b`.
pub fn solve_nuclear_equality<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    config: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    solve_nuclear_equality_from(spec, config, None)
}

/// Equality solve from an explicit starting point (the program is convex,
/// so initialization affects speed only; reproducibility tests use this).
pub fn solve_nuclear_equality_from<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    config: &SolverConfig<T>,
    init: Option<&DMat<T>>,
) -> Result<SolverReport<T>> {
    let (operator, rescaling, rhs) = match spec {
        ConvexProgramSpec::NuclearEquality {
            operator,
            rescaling,
            rhs,
        } => (operator, rescaling, rhs),
        _ => {
            return Err(Error::InvalidParameter(
                "spec is not a nuclear-equality program".into(),
            ))
        }
    };
    admm::nuclear_equality(operator, rescaling, rhs, config, init, false)
}

/// `min ‖X‖_*` subject to `‖𝒜(D₁⁻¹XD₂⁻¹) − b‖₂ ≤ radius`.
pub fn solve_nuclear_ball<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    config: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    let (operator, rescaling, rhs, radius) = match spec {
        ConvexProgramSpec::NuclearBall {
            operator,
            rescaling,
            rhs,
            radius,
        } => (operator, rescaling, rhs, *radius),
        _ => {
            return Err(Error::InvalidParameter(
                "spec is not a nuclear-ball program".into(),
            ))
        }
    };
    admm::nuclear_ball(operator, rescaling, rhs, radius, config)
}

/// `min ‖X‖_*` subject to `‖Y − X‖₁ ≤ radius`.
pub fn solve_robust_pca<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    config: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    let (observation, radius) = match spec {
        ConvexProgramSpec::RobustPca {
            observation,
            radius,
        } => (observation, *radius),
        _ => {
            return Err(Error::InvalidParameter(
                "spec is not a robust-PCA program".into(),
            ))
        }
    };
    admm::robust_pca(observation, radius, config)
}

/// `min ‖X‖_*` over symmetric `X` subject to `𝒜(D⁻¹XD⁻¹) = b`.
pub fn solve_nuclear_symmetric<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    config: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    let (operator, rescaling, rhs) = match spec {
        ConvexProgramSpec::NuclearSymmetric {
            operator,
            rescaling,
            rhs,
        } => (operator, rescaling, rhs),
        _ => {
            return Err(Error::InvalidParameter(
                "spec is not a nuclear-symmetric program".into(),
            ))
        }
    };
    admm::nuclear_equality(operator, rescaling, rhs, config, None, true)
}

/// `min Σ wⱼ|xⱼ|^p` subject to `Ax = b`.
pub fn solve_weighted_lp<T: Scalar>(
    spec: &ConvexProgramSpec<T>,
    config: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    let (operator, weights, power, rhs) = match spec {
        ConvexProgramSpec::WeightedLp {
            operator,
            weights,
            power,
            rhs,
        } => (operator, weights, *power, rhs),
        _ => {
            return Err(Error::InvalidParameter(
                "spec is not a weighted-ℓᵖ program".into(),
            ))
        }
    };
    admm::weighted_lp(operator, weights, power, rhs, config)
}
