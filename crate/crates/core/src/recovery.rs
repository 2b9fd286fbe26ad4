//! End-to-end flat-solution pipelines: solve the family's relaxation,
//! extract balanced factors, and compute recovery/regularity metrics.
//!
//! The factor extraction follows the variable substitution behind the
//! relaxations: if `X̂ = UΣVᵀ`, then `L = D₁⁻¹U√Σ`, `R = D₂⁻¹V√Σ`
//! reconstruct `D₁LRᵀD₂ = X̂`, and the rescaled pair `(D₁L, D₂R)` is
//! exactly balanced. The symmetric analog splits the eigendecomposition
//! of `X̂` by sign.

use crate::ensembles::{GroundTruth, OperatorKind, SensingOperator};
use crate::hessian::FactorPair;
use crate::numlin::{
    entrywise_l1, nuclear_norm, to_f64, EigenDecomposition, Spectrum, RANK_REL_TOL,
};
use crate::rescaling::{build_rescaling, RescalingPair};
use crate::solvers::{
    solve, verify_optimality, CertificateReport, ConvexProgramSpec, SolverConfig,
};
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

/// Pipeline settings.
#[derive(Debug, Clone)]
pub struct PipelineConfig<T: Scalar> {
    pub solver: SolverConfig<T>,
    /// Frobenius-error threshold under which a run counts as success.
    pub success_threshold: T,
    /// Attach a dual certificate to equality-family solves.
    pub compute_certificate: bool,
    /// Also solve the plain nuclear-norm program (identity rescaling)
    /// for the norm-minimality baseline.
    pub compute_baseline: bool,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            success_threshold: scalar(1e-6),
            compute_certificate: false,
            compute_baseline: true,
        }
    }
}

/// Everything a recovery run produces.
#[derive(Debug, Clone)]
pub struct RecoveryReport<T: Scalar> {
    /// `D₁⁻¹X̂D₂⁻¹` (or the family analog); the estimate of the truth.
    pub x_recovered: DMat<T>,
    pub factors: Option<FactorPair<T>>,
    /// `‖x_recovered − truth‖_F`.
    pub fro_error: T,
    /// Relative nuclear error `‖x_recovered − truth‖_* / ‖truth‖_*`.
    pub nuc_error: T,
    pub success: bool,
    /// `‖LᵀL − RᵀR‖_* / ‖truth‖_*` (asymmetric families only).
    pub balancedness: Option<T>,
    /// `(‖L‖² + ‖R‖²) / (2‖X̂_nuc‖_*)` against the nuclear baseline.
    pub norm_ratio: Option<T>,
    /// `tr(U₁U₁ᵀ − U₂U₂ᵀ − truth)` (network family only).
    pub generalization_gap: Option<T>,
    pub singular_d: bool,
    pub kappa: T,
    pub solver_converged: bool,
    pub solver_iterations: usize,
    pub pseudo_projection: bool,
    /// `‖𝒜(x_recovered) − b‖₂` in the family's constraint norm.
    pub feasibility_residual: T,
    pub baseline_fro_error: Option<T>,
    pub baseline_success: Option<bool>,
    pub baseline_converged: Option<bool>,
    pub certificate: Option<CertificateReport<T>>,
}

impl<T: Scalar> RecoveryReport<T> {
    fn singular(d1: usize, d2: usize, kappa: T) -> Self {
        let nan = scalar::<T>(f64::NAN);
        Self {
            x_recovered: DMat::zeros(d1, d2),
            factors: None,
            fro_error: nan,
            nuc_error: nan,
            success: false,
            balancedness: None,
            norm_ratio: None,
            generalization_gap: None,
            singular_d: true,
            kappa,
            solver_converged: false,
            solver_iterations: 0,
            pseudo_projection: false,
            feasibility_residual: nan,
            baseline_fro_error: None,
            baseline_success: None,
            baseline_converged: None,
            certificate: None,
        }
    }
}

/// `L = D₁⁻¹U√Σ`, `R = D₂⁻¹V√Σ`, zero-padded to `k` columns.
pub fn extract_factors<T: Scalar>(
    x_hat: &DMat<T>,
    pair: &RescalingPair<T>,
    k: usize,
) -> Result<FactorPair<T>> {
    let spectrum = Spectrum::compute(x_hat)?;
    let rank = spectrum.rank();
    if k < rank {
        return Err(Error::WidthBelowRank { k, rank });
    }
    let inv1 = pair.inverse_d1()?;
    let inv2 = pair.inverse_d2()?;
    let (d1, d2) = (x_hat.nrows(), x_hat.ncols());
    let mut left = DMat::zeros(d1, k);
    let mut right = DMat::zeros(d2, k);
    for j in 0..rank {
        let root = spectrum.singular_values[j].sqrt();
        left.column_mut(j)
            .copy_from(&(inv1 * spectrum.left.column(j) * root));
        right
            .column_mut(j)
            .copy_from(&(inv2 * spectrum.right.column(j) * root));
    }
    Ok(FactorPair::Asymmetric { left, right })
}

/// Outcome of splitting a symmetric matrix by eigenvalue sign.
#[derive(Debug, Clone)]
pub enum EigenCountSplit<T: Scalar> {
    /// `X = U₁U₁ᵀ − U₂U₂ᵀ` with `‖U₁‖² + ‖U₂‖² = ‖X‖_*`.
    Split { u1: DMat<T>, u2: DMat<T> },
    /// More sign-definite eigenvalues than the requested widths allow.
    Infeasible { positive: usize, negative: usize },
}

/// Split a symmetric matrix into signed square factors when its
/// eigenvalue sign counts fit `(k₁, k₂)`. Eigenvalues below the rank
/// threshold count toward neither side.
pub fn eigen_count_split<T: Scalar>(
    x: &DMat<T>,
    k1: usize,
    k2: usize,
) -> Result<EigenCountSplit<T>> {
    let eig = EigenDecomposition::compute(x)?;
    let d = eig.eigenvalues.len();
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, l| a.max(l.abs()));
    let cut = scalar::<T>(RANK_REL_TOL) * lmax;
    let positive: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > cut).collect();
    let negative: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] < -cut).collect();
    if positive.len() > k1 || negative.len() > k2 {
        return Ok(EigenCountSplit::Infeasible {
            positive: positive.len(),
            negative: negative.len(),
        });
    }
    let mut u1 = DMat::zeros(d, k1);
    for (j, &i) in positive.iter().enumerate() {
        u1.column_mut(j)
            .copy_from(&(eig.eigenvectors.column(i) * eig.eigenvalues[i].sqrt()));
    }
    let mut u2 = DMat::zeros(d, k2);
    for (j, &i) in negative.iter().enumerate() {
        u2.column_mut(j)
            .copy_from(&(eig.eigenvectors.column(i) * (-eig.eigenvalues[i]).sqrt()));
    }
    Ok(EigenCountSplit::Split { u1, u2 })
}

/// Symmetric factor extraction `Uᵢ = [D⁻¹Pᵢ√Λᵢ, 0]` from the signed
/// eigendecomposition of `X̂`.
pub fn extract_factors_symmetric<T: Scalar>(
    x_hat: &DMat<T>,
    pair: &RescalingPair<T>,
    k1: usize,
    k2: usize,
) -> Result<Option<FactorPair<T>>> {
    match eigen_count_split(x_hat, k1, k2)? {
        EigenCountSplit::Split { u1, u2 } => {
            let inv = pair.inverse_d1()?;
            Ok(Some(FactorPair::SymmetricSigned {
                u1: inv * u1,
                u2: inv * u2,
            }))
        }
        EigenCountSplit::Infeasible { .. } => Ok(None),
    }
}

/// Balanced Hadamard splitting: `v_{h,j} = |x_j|^{1/k}` with the sign
/// carried by the first factor. The entrywise product reconstructs `x`.
pub fn hadamard_split<T: Scalar>(x: &DVec<T>, k: usize) -> Result<Vec<DVec<T>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "Hadamard splitting needs k ≥ 2, got {k}"
        )));
    }
    let root = T::one() / scalar::<T>(k as f64);
    let mags = x.map(|v| v.abs().powf(root));
    let mut factors = Vec::with_capacity(k);
    let first = DVec::from_fn(x.len(), |j, _| {
        if x[j] < T::zero() {
            -mags[j]
        } else {
            mags[j]
        }
    });
    factors.push(first);
    for _ in 1..k {
        factors.push(mags.clone());
    }
    Ok(factors)
}

/// `tr(U₁U₁ᵀ − U₂U₂ᵀ − M)`; zero exactly when the network generalizes.
pub fn generalization_gap<T: Scalar>(u1: &DMat<T>, u2: &DMat<T>, m_nat: &DMat<T>) -> T {
    let d = m_nat.nrows();
    let mut acc = T::zero();
    for i in 0..d {
        acc += u1.row(i).norm_squared() - u2.row(i).norm_squared() - m_nat[(i, i)];
    }
    acc
}

/// Both sides of the completion growth inequality, plus the conditioning
/// suboptimality bound `(κ² − 1)‖M‖_*`.
#[derive(Debug, Clone)]
pub struct GrowthCheck<T: Scalar> {
    /// `‖X − M‖_*`.
    pub lhs: T,
    /// `8(1 + √(6r/p)) (‖X‖_* − ‖M‖_*)`.
    pub rhs: T,
    /// `(κ² − 1)‖M‖_*` from the operator's rescaling.
    pub subopt_bound: T,
}

/// Evaluate the growth inequality for a mask-feasible `X`.
pub fn completion_growth_check<T: Scalar>(
    op: &SensingOperator<T>,
    m_nat: &DMat<T>,
    x: &DMat<T>,
) -> Result<GrowthCheck<T>> {
    if op.kind() != OperatorKind::Completion {
        return Err(Error::WrongOperatorKind {
            expected: "completion".into(),
            found: op.kind().as_str().into(),
        });
    }
    let mask = op.mask().expect("completion carries a mask");
    let violation = (x - m_nat).component_mul(mask).norm();
    if to_f64(violation) > 1e-8 {
        return Err(Error::Infeasible(format!(
            "X disagrees with the truth on the mask by {:.3e}",
            to_f64(violation)
        )));
    }
    let r = Spectrum::compute(m_nat)?.rank();
    let p = scalar::<T>(op.probability().unwrap_or(1.0));
    let m_nuc = nuclear_norm(m_nat);
    let lhs = nuclear_norm(&(x - m_nat));
    let gap = nuclear_norm(x) - m_nuc;
    let six_r = scalar::<T>(6.0 * r as f64);
    let rhs = scalar::<T>(8.0) * (T::one() + (six_r / p).sqrt()) * gap;
    let pair = build_rescaling(op)?;
    let subopt_bound = (pair.kappa * pair.kappa - T::one()) * m_nuc;
    Ok(GrowthCheck {
        lhs,
        rhs,
        subopt_bound,
    })
}

/// Incoherence `μ`: smallest constant with `‖U‖_{2,∞} ≤ √(μr/d₁)` and
/// `‖V‖_{2,∞} ≤ √(μr/d₂)` for the truth's thin singular factors.
pub fn incoherence_mu<T: Scalar>(m_nat: &DMat<T>) -> Result<T> {
    let spectrum = Spectrum::compute(m_nat)?;
    let r = spectrum.rank();
    if r == 0 {
        return Ok(T::zero());
    }
    let rf = scalar::<T>(r as f64);
    let u = spectrum.left.columns(0, r);
    let v = spectrum.right.columns(0, r);
    let mut mu = T::zero();
    for i in 0..u.nrows() {
        mu = mu.max(u.row(i).norm_squared() * scalar::<T>(u.nrows() as f64) / rf);
    }
    for i in 0..v.nrows() {
        mu = mu.max(v.row(i).norm_squared() * scalar::<T>(v.nrows() as f64) / rf);
    }
    Ok(mu)
}

/// Strong incoherence: [`incoherence_mu`] plus the entrywise bound
/// `‖UVᵀ‖_∞ ≤ √(μr/(d₁d₂))`.
pub fn strong_incoherence_mu<T: Scalar>(m_nat: &DMat<T>) -> Result<T> {
    let spectrum = Spectrum::compute(m_nat)?;
    let r = spectrum.rank();
    if r == 0 {
        return Ok(T::zero());
    }
    let rf = scalar::<T>(r as f64);
    let u = spectrum.left.columns(0, r).clone_owned();
    let v = spectrum.right.columns(0, r).clone_owned();
    let uv = &u * v.transpose();
    let d1d2 = scalar::<T>((uv.nrows() * uv.ncols()) as f64);
    let entry = uv.iter().fold(T::zero(), |a, e| a.max(*e * *e));
    Ok(incoherence_mu(m_nat)?.max(entry * d1d2 / rf))
}

/// Solver tolerances are meant in recovered units `D₁⁻¹X̂D₂⁻¹`; the solve
/// itself runs on `X̂`, whose scale is smaller by up to `α₁²`, so the
/// absolute tolerance shrinks accordingly (never grows).
fn rescaled_solver<T: Scalar>(
    solver: &SolverConfig<T>,
    pair: &RescalingPair<T>,
) -> SolverConfig<T> {
    let (a1, _) = pair.alpha_bounds();
    let scale = (a1 * a1).min(T::one());
    let mut adjusted = solver.clone();
    adjusted.abs_tol *= scale;
    adjusted
}

fn asymmetric_metrics<T: Scalar>(
    report: &mut RecoveryReport<T>,
    m_nat: &DMat<T>,
    factors: &FactorPair<T>,
    x_nuc_nuclear: Option<T>,
) {
    if let FactorPair::Asymmetric { left, right } = factors {
        let gram_gap = left.transpose() * left - right.transpose() * right;
        report.balancedness = Some(nuclear_norm(&gram_gap) / nuclear_norm(m_nat));
        if let Some(baseline) = x_nuc_nuclear {
            if baseline > T::zero() {
                let halves = left.norm_squared() + right.norm_squared();
                report.norm_ratio = Some(halves / (scalar::<T>(2.0) * baseline));
            }
        }
    }
}

/// Flat pipeline for the matrix families: build the rescaling, solve the
/// flat relaxation, extract factors, solve the plain nuclear baseline,
/// and compute every recovery and regularity metric. The family is
/// picked from the operator kind; `k` is the factor width (per side for
/// the symmetric family, the depth for the Hadamard family).
pub fn flat_pipeline<T: Scalar>(
    op: &SensingOperator<T>,
    truth: &GroundTruth<T>,
    k: usize,
    cfg: &PipelineConfig<T>,
) -> Result<RecoveryReport<T>> {
    let m_nat = truth.as_matrix();
    let b = op.forward(&m_nat)?;
    let pair = build_rescaling(op)?;
    if pair.is_singular() {
        return Ok(RecoveryReport::singular(op.d1(), op.d2(), pair.kappa));
    }

    match (op.kind(), truth) {
        (
            OperatorKind::Identity
            | OperatorKind::Gaussian
            | OperatorKind::Bilinear
            | OperatorKind::Completion,
            GroundTruth::LowRank { .. },
        ) => {
            let spec =
                ConvexProgramSpec::nuclear_equality(op.clone(), pair.clone(), b.clone())?;
            let solved = solve(&spec, &rescaled_solver(&cfg.solver, &pair))?;
            let x_rec = pair.inverse_d1()? * &solved.x_hat * pair.inverse_d2()?;
            let fro_error = (&x_rec - &m_nat).norm();
            let factors = extract_factors(&solved.x_hat, &pair, k)?;
            let feasibility_residual = (op.forward(&factors.product())? - &b).norm();

            let mut report = RecoveryReport {
                fro_error,
                nuc_error: nuclear_norm(&(&x_rec - &m_nat)) / nuclear_norm(&m_nat),
                success: fro_error < cfg.success_threshold,
                x_recovered: x_rec,
                factors: None,
                balancedness: None,
                norm_ratio: None,
                generalization_gap: None,
                singular_d: false,
                kappa: pair.kappa,
                solver_converged: solved.converged,
                solver_iterations: solved.iterations,
                pseudo_projection: solved.pseudo_projection,
                feasibility_residual,
                baseline_fro_error: None,
                baseline_success: None,
                baseline_converged: None,
                certificate: None,
            };

            let mut baseline_nuclear = None;
            if cfg.compute_baseline {
                let baseline_spec = ConvexProgramSpec::nuclear_equality(
                    op.clone(),
                    RescalingPair::identity(op.d1(), op.d2()),
                    b.clone(),
                )?;
                let baseline = solve(&baseline_spec, &cfg.solver)?;
                let err = (&baseline.x_hat - &m_nat).norm();
                report.baseline_fro_error = Some(err);
                report.baseline_success = Some(err < cfg.success_threshold);
                report.baseline_converged = Some(baseline.converged);
                baseline_nuclear = Some(nuclear_norm(&baseline.x_hat));
            }
            asymmetric_metrics(&mut report, &m_nat, &factors, baseline_nuclear);
            report.factors = Some(factors);
            if cfg.compute_certificate {
                report.certificate = Some(verify_optimality(&spec, &solved.x_hat)?);
            }
            Ok(report)
        }
        (OperatorKind::Quadratic, GroundTruth::SymmetricSigned { .. }) => {
            let spec =
                ConvexProgramSpec::nuclear_symmetric(op.clone(), pair.clone(), b.clone())?;
            let solved = solve(&spec, &rescaled_solver(&cfg.solver, &pair))?;
            let x_rec = pair.inverse_d1()? * &solved.x_hat * pair.inverse_d1()?;
            let fro_error = (&x_rec - &m_nat).norm();
            let factors = extract_factors_symmetric(&solved.x_hat, &pair, k, k)?;
            let feasibility_residual = (op.forward(&x_rec)? - &b).norm();
            // E[ŷ − y] over standard normal inputs = tr(X_rec − M)
            let gap = (0..op.d1()).fold(T::zero(), |acc, i| {
                acc + x_rec[(i, i)] - m_nat[(i, i)]
            });

            let mut report = RecoveryReport {
                fro_error,
                nuc_error: nuclear_norm(&(&x_rec - &m_nat)) / nuclear_norm(&m_nat),
                success: fro_error < cfg.success_threshold,
                x_recovered: x_rec,
                factors,
                balancedness: None,
                norm_ratio: None,
                generalization_gap: Some(gap),
                singular_d: false,
                kappa: pair.kappa,
                solver_converged: solved.converged,
                solver_iterations: solved.iterations,
                pseudo_projection: solved.pseudo_projection,
                feasibility_residual,
                baseline_fro_error: None,
                baseline_success: None,
                baseline_converged: None,
                certificate: None,
            };

            if cfg.compute_baseline {
                let baseline_spec = ConvexProgramSpec::nuclear_symmetric(
                    op.clone(),
                    RescalingPair::identity_symmetric(op.d1()),
                    b.clone(),
                )?;
                let baseline = solve(&baseline_spec, &cfg.solver)?;
                let err = (&baseline.x_hat - &m_nat).norm();
                report.baseline_fro_error = Some(err);
                report.baseline_success = Some(err < cfg.success_threshold);
                report.baseline_converged = Some(baseline.converged);
                if let Some(FactorPair::SymmetricSigned { u1, u2 }) = &report.factors {
                    let baseline_nuclear = nuclear_norm(&baseline.x_hat);
                    if baseline_nuclear > T::zero() {
                        report.norm_ratio = Some(
                            (u1.norm_squared() + u2.norm_squared())
                                / (scalar::<T>(2.0) * baseline_nuclear),
                        );
                    }
                }
            }
            if cfg.compute_certificate {
                report.certificate = Some(verify_optimality(&spec, &solved.x_hat)?);
            }
            Ok(report)
        }
        (OperatorKind::HadamardColumns, GroundTruth::SparseVector { x, .. }) => {
            let spec = ConvexProgramSpec::weighted_lp_depth(op.clone(), &pair, k, b.clone())?;
            let solved = solve(&spec, &cfg.solver)?;
            let x_hat = solved.x_vec();
            let fro_error = (&x_hat - x).norm();
            let factors = hadamard_split(&x_hat, k)?;
            Ok(RecoveryReport {
                x_recovered: solved.x_hat.clone(),
                factors: Some(FactorPair::Hadamard { factors }),
                fro_error,
                nuc_error: fro_error / x.norm(),
                success: fro_error < cfg.success_threshold,
                balancedness: None,
                norm_ratio: None,
                generalization_gap: None,
                singular_d: false,
                kappa: pair.kappa,
                solver_converged: solved.converged,
                solver_iterations: solved.iterations,
                pseudo_projection: solved.pseudo_projection,
                feasibility_residual: solved.feasibility_gap,
                baseline_fro_error: None,
                baseline_success: None,
                baseline_converged: None,
                certificate: None,
            })
        }
        _ => Err(Error::InvalidParameter(format!(
            "no pipeline for a {} operator with this ground-truth kind",
            op.kind().as_str()
        ))),
    }
}

/// Robust-PCA pipeline: `min ‖X‖_*` s.t. `‖Y − X‖₁ ≤ radius` with the
/// observation `Y = M + S`. The smoothed local loss has an identity
/// measurement map, so no rescaling is involved and the relaxation *is*
/// the nuclear baseline.
pub fn rpca_pipeline<T: Scalar>(
    observation: &DMat<T>,
    m_nat: &DMat<T>,
    radius: T,
    k: usize,
    cfg: &PipelineConfig<T>,
) -> Result<RecoveryReport<T>> {
    let spec = ConvexProgramSpec::robust_pca(observation.clone(), radius)?;
    let solved = solve(&spec, &cfg.solver)?;
    let fro_error = (&solved.x_hat - m_nat).norm();
    let factors = extract_factors(
        &solved.x_hat,
        &RescalingPair::identity(observation.nrows(), observation.ncols()),
        k,
    )?;
    let feasibility_residual =
        (entrywise_l1(&(observation - &solved.x_hat)) - radius).max(T::zero());
    Ok(RecoveryReport {
        fro_error,
        nuc_error: nuclear_norm(&(&solved.x_hat - m_nat)) / nuclear_norm(m_nat),
        success: fro_error < cfg.success_threshold,
        x_recovered: solved.x_hat,
        factors: Some(factors),
        balancedness: None,
        norm_ratio: None,
        generalization_gap: None,
        singular_d: false,
        kappa: T::one(),
        solver_converged: solved.converged,
        solver_iterations: solved.iterations,
        pseudo_projection: false,
        feasibility_residual,
        baseline_fro_error: None,
        baseline_success: None,
        baseline_converged: None,
        certificate: None,
    })
}
