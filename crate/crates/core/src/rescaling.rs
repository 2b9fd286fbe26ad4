//! Rescaling matrices and empirical restricted-isometry estimates.
//!
//! For a measurement map with matrices `Aᵢ`, the rescaling pair is
//!
//! ```text
//! D₁ = ((1/(m·d₂)) Σ Aᵢ Aᵢᵀ)^½ ,   D₂ = ((1/(m·d₁)) Σ Aᵢᵀ Aᵢ)^½ ,
//! ```
//!
//! computed in closed form per ensemble kind. Quadratic (and split)
//! ensembles use the single symmetric `D = ((1/(m·d)) Σ AᵢAᵢᵀ)^½`; vector
//! sensing uses the diagonal weight matrix `D = (1/m)·diag(‖a₁‖², …)`
//! built from the columns of the sensing matrix (no square root — the
//! diagonal itself is the weight).
//!
//! The conditioning of the pair, `κ = α₂/α₁` over both sides, is what
//! controls how far flat solutions can drift from norm-minimal and
//! balanced ones, so it is recorded on every pair.

use serde::Serialize;

use crate::ensembles::{OperatorKind, SensingOperator};
use crate::numlin::{to_f64, EigenDecomposition};
use crate::rng;
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

/// Relative clamp for negative round-off eigenvalues in PSD square roots.
pub const PSD_CLAMP_REL_TOL: f64 = 1e-12;

/// Which flavor of rescaling a pair carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RescalingKind {
    /// Distinct `D₁`, `D₂` for asymmetric ensembles.
    Pair,
    /// Single symmetric `D` on both sides (quadratic ensembles).
    Symmetric,
    /// Diagonal column-norm weights for vector sensing.
    DepthDiagonal,
}

/// The PSD rescaling matrices with conditioning metadata.
#[derive(Debug, Clone)]
pub struct RescalingPair<T: Scalar> {
    kind: RescalingKind,
    d1_matrix: DMat<T>,
    d2_matrix: DMat<T>,
    inv1: Option<DMat<T>>,
    inv2: Option<DMat<T>>,
    /// Smallest/largest eigenvalue per side.
    pub eig_min: [T; 2],
    pub eig_max: [T; 2],
    /// `α₂/α₁` over the worse side; infinite when singular.
    pub kappa: T,
}

/// PSD square root via eigendecomposition, clamping round-off negatives.
fn psd_sqrt<T: Scalar>(s: &DMat<T>) -> Result<DMat<T>> {
    let eig = EigenDecomposition::compute(s)?;
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, l| a.max(*l));
    let clamp = scalar::<T>(PSD_CLAMP_REL_TOL) * lmax;
    let mut q = eig.eigenvectors.clone();
    for j in 0..q.ncols() {
        let l = eig.eigenvalues[j];
        let root = if l > clamp { l.sqrt() } else { T::zero() };
        q.column_mut(j).scale_mut(root);
    }
    Ok(&q * eig.eigenvectors.transpose())
}

fn symmetric_inverse<T: Scalar>(d: &DMat<T>) -> Option<DMat<T>> {
    let eig = EigenDecomposition::compute(d).ok()?;
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |a, l| a.max(l.abs()));
    let clamp = scalar::<T>(PSD_CLAMP_REL_TOL) * lmax;
    if eig.eigenvalues.iter().any(|l| *l <= clamp) {
        return None;
    }
    let mut q = eig.eigenvectors.clone();
    for j in 0..q.ncols() {
        let l = eig.eigenvalues[j];
        q.column_mut(j).scale_mut(T::one() / l);
    }
    Some(&q * eig.eigenvectors.transpose())
}

fn eig_extremes<T: Scalar>(d: &DMat<T>) -> Result<(T, T)> {
    let eig = EigenDecomposition::compute(d)?;
    let n = eig.eigenvalues.len();
    Ok((eig.eigenvalues[n - 1], eig.eigenvalues[0]))
}

impl<T: Scalar> RescalingPair<T> {
    fn assemble(kind: RescalingKind, d1_matrix: DMat<T>, d2_matrix: DMat<T>) -> Result<Self> {
        let (min1, max1) = eig_extremes(&d1_matrix)?;
        let (min2, max2) = eig_extremes(&d2_matrix)?;
        let alpha1 = min1.min(min2);
        let alpha2 = max1.max(max2);
        let singular = alpha1 <= scalar::<T>(PSD_CLAMP_REL_TOL) * alpha2 || alpha2 == T::zero();
        let kappa = if singular {
            scalar::<T>(f64::INFINITY)
        } else {
            alpha2 / alpha1
        };
        let inv1 = if singular { None } else { symmetric_inverse(&d1_matrix) };
        let inv2 = if singular { None } else { symmetric_inverse(&d2_matrix) };
        Ok(Self {
            kind,
            d1_matrix,
            d2_matrix,
            inv1,
            inv2,
            eig_min: [min1, min2],
            eig_max: [max1, max2],
            kappa,
        })
    }

    /// Identity rescaling (used for the plain nuclear-norm baseline).
    pub fn identity(d1: usize, d2: usize) -> Self {
        Self::assemble(RescalingKind::Pair, DMat::identity(d1, d1), DMat::identity(d2, d2))
            .expect("identity rescaling is always well formed")
    }

    /// Identity rescaling in the single-D (symmetric) flavor.
    pub fn identity_symmetric(d: usize) -> Self {
        Self::assemble(
            RescalingKind::Symmetric,
            DMat::identity(d, d),
            DMat::identity(d, d),
        )
        .expect("identity rescaling is always well formed")
    }

    /// Build a pair from explicit symmetric PSD matrices.
    pub fn from_matrices(d1_matrix: DMat<T>, d2_matrix: DMat<T>) -> Result<Self> {
        if d1_matrix.nrows() != d1_matrix.ncols() || d2_matrix.nrows() != d2_matrix.ncols() {
            return Err(Error::DimensionMismatch("rescaling matrices must be square".into()));
        }
        Self::assemble(RescalingKind::Pair, d1_matrix, d2_matrix)
    }

    pub fn kind(&self) -> RescalingKind {
        self.kind
    }
    pub fn d1_matrix(&self) -> &DMat<T> {
        &self.d1_matrix
    }
    pub fn d2_matrix(&self) -> &DMat<T> {
        &self.d2_matrix
    }

    /// Lower and upper bounds `α₁ I ⪯ Dᵢ ⪯ α₂ I` over both sides.
    pub fn alpha_bounds(&self) -> (T, T) {
        (self.eig_min[0].min(self.eig_min[1]), self.eig_max[0].max(self.eig_max[1]))
    }

    pub fn is_singular(&self) -> bool {
        self.inv1.is_none() || self.inv2.is_none()
    }

    pub fn inverse_d1(&self) -> Result<&DMat<T>> {
        self.inv1
            .as_ref()
            .ok_or_else(|| Error::SingularRescaling("D1 has a zero eigenvalue".into()))
    }

    pub fn inverse_d2(&self) -> Result<&DMat<T>> {
        self.inv2
            .as_ref()
            .ok_or_else(|| Error::SingularRescaling("D2 has a zero eigenvalue".into()))
    }

    /// JSON-friendly summary.
    pub fn summary(&self) -> RescalingSummary {
        RescalingSummary {
            kind: self.kind,
            d1: self.d1_matrix.nrows(),
            d2: self.d2_matrix.nrows(),
            eig_min: [to_f64(self.eig_min[0]), to_f64(self.eig_min[1])],
            eig_max: [to_f64(self.eig_max[0]), to_f64(self.eig_max[1])],
            kappa: to_f64(self.kappa),
            singular: self.is_singular(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RescalingSummary {
    pub kind: RescalingKind,
    pub d1: usize,
    pub d2: usize,
    pub eig_min: [f64; 2],
    pub eig_max: [f64; 2],
    pub kappa: f64,
    pub singular: bool,
}

/// Build the rescaling for an operator, using the closed form its kind
/// admits. Singular pairs are allowed (κ = ∞); downstream solvers refuse
/// to run on them and the experiment harness records the cell instead.
pub fn build_rescaling<T: Scalar>(op: &SensingOperator<T>) -> Result<RescalingPair<T>> {
    let (d1, d2, m) = (op.d1(), op.d2(), op.measurements());
    let mf = scalar::<T>(m as f64);
    match op.kind() {
        OperatorKind::Identity => {
            let scale = T::one() / scalar::<T>(((d1 * d2) as f64).sqrt());
            RescalingPair::assemble(
                RescalingKind::Pair,
                DMat::identity(d1, d1) * scale,
                DMat::identity(d2, d2) * scale,
            )
        }
        OperatorKind::Completion => {
            let mask = op.mask().expect("completion carries a mask");
            let mut row_sums = DVec::<T>::zeros(d1);
            let mut col_sums = DVec::<T>::zeros(d2);
            for j in 0..d2 {
                for i in 0..d1 {
                    row_sums[i] += mask[(i, j)];
                    col_sums[j] += mask[(i, j)];
                }
            }
            let s1 = DMat::from_diagonal(
                &row_sums.map(|s| (s / (mf * scalar::<T>(d2 as f64))).sqrt()),
            );
            let s2 = DMat::from_diagonal(
                &col_sums.map(|s| (s / (mf * scalar::<T>(d1 as f64))).sqrt()),
            );
            RescalingPair::assemble(RescalingKind::Pair, s1, s2)
        }
        OperatorKind::Quadratic => {
            // D² = (1/(m·d)) Σ ‖xᵢ‖² xᵢxᵢᵀ
            let feats = op.features().expect("quadratic carries feature vectors");
            let mut s = DMat::<T>::zeros(d1, d1);
            for i in 0..m {
                let x = feats.column(i);
                let w = x.norm_squared();
                s += (x * x.transpose()) * w;
            }
            s /= mf * scalar::<T>(d1 as f64);
            let d = psd_sqrt(&s)?;
            RescalingPair::assemble(RescalingKind::Symmetric, d.clone(), d)
        }
        OperatorKind::HadamardColumns => {
            let a = op.sensing_matrix().expect("vector sensing carries its matrix");
            let mut diag = DVec::<T>::zeros(d1);
            for j in 0..d1 {
                diag[j] = a.column(j).norm_squared() / mf;
            }
            RescalingPair::assemble(
                RescalingKind::DepthDiagonal,
                DMat::from_diagonal(&diag),
                DMat::identity(1, 1),
            )
        }
        OperatorKind::Gaussian | OperatorKind::Bilinear | OperatorKind::SplitBilinear => {
            let mut s1 = DMat::<T>::zeros(d1, d1);
            let mut s2 = DMat::<T>::zeros(d2, d2);
            for i in 0..m {
                let a = op.measurement_matrix(i);
                s1 += &a * a.transpose();
                s2 += a.transpose() * &a;
            }
            s1 /= mf * scalar::<T>(d2 as f64);
            s2 /= mf * scalar::<T>(d1 as f64);
            RescalingPair::assemble(RescalingKind::Pair, psd_sqrt(&s1)?, psd_sqrt(&s2)?)
        }
    }
}

/// Which norm the restricted-isometry ratio uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RipNorm {
    L1,
    L2,
}

/// Empirical restricted-isometry bracket from sampled low-rank probes.
///
/// The extreme observed ratios are a certified-*necessary* bracket of the
/// true constants: the true `δ₁` is at most `delta1_hat` and the true
/// `δ₂` at least `delta2_hat`, never the other way around.
#[derive(Debug, Clone)]
pub struct RipEstimate<T: Scalar> {
    pub p_norm: RipNorm,
    pub rank_tested: usize,
    pub trials: usize,
    /// Smallest observed ratio `‖𝒜(X)‖_p / (m^{1/p} ‖X‖_F)`.
    pub delta1_hat: T,
    /// Largest observed ratio.
    pub delta2_hat: T,
    /// Average observed ratio.
    pub mean_ratio: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct RipSummary {
    pub p_norm: RipNorm,
    pub rank_tested: usize,
    pub trials: usize,
    pub delta1_hat: f64,
    pub delta2_hat: f64,
    pub mean_ratio: f64,
}

impl<T: Scalar> RipEstimate<T> {
    pub fn summary(&self) -> RipSummary {
        RipSummary {
            p_norm: self.p_norm,
            rank_tested: self.rank_tested,
            trials: self.trials,
            delta1_hat: to_f64(self.delta1_hat),
            delta2_hat: to_f64(self.delta2_hat),
            mean_ratio: to_f64(self.mean_ratio),
        }
    }
}

/// Estimate RIP constants of an arbitrary map given by a forward closure.
pub fn estimate_rip_map<T, F>(
    forward: F,
    d1: usize,
    d2: usize,
    m: usize,
    r: usize,
    trials: usize,
    p_norm: RipNorm,
    seed: u64,
) -> Result<RipEstimate<T>>
where
    T: Scalar,
    F: Fn(&DMat<T>) -> Result<DVec<T>>,
{
    if r == 0 || r > d1.min(d2) {
        return Err(Error::InvalidParameter(format!(
            "tested rank must lie in 1..=min(d1,d2), got {r}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let mut stream = rng::stream(seed, "rip", &[d1 as u64, d2 as u64, r as u64]);
    let normalizer = match p_norm {
        RipNorm::L1 => scalar::<T>(m as f64),
        RipNorm::L2 => scalar::<T>(m as f64).sqrt(),
    };
    let mut lo = scalar::<T>(f64::INFINITY);
    let mut hi = T::zero();
    let mut sum = T::zero();
    for _ in 0..trials {
        let g1 = rng::normal_matrix::<T>(&mut stream, d1, r);
        let g2 = rng::normal_matrix::<T>(&mut stream, d2, r);
        let mut x = g1 * g2.transpose();
        x /= x.norm();
        let y = forward(&x)?;
        let norm = match p_norm {
            RipNorm::L1 => y.iter().fold(T::zero(), |a, v| a + v.abs()),
            RipNorm::L2 => y.norm(),
        };
        let ratio = norm / normalizer;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        sum += ratio;
    }
    Ok(RipEstimate {
        p_norm,
        rank_tested: r,
        trials,
        delta1_hat: lo,
        delta2_hat: hi,
        mean_ratio: sum / scalar::<T>(trials as f64),
    })
}

/// Estimate RIP constants of a sampled operator over random rank-`r`
/// unit-Frobenius probes.
pub fn estimate_rip<T: Scalar>(
    op: &SensingOperator<T>,
    r: usize,
    trials: usize,
    p_norm: RipNorm,
    seed: u64,
) -> Result<RipEstimate<T>> {
    estimate_rip_map(
        |x| op.forward(x),
        op.d1(),
        op.d2(),
        op.measurements(),
        r,
        trials,
        p_norm,
        seed,
    )
}

/// Carry an estimate through a rescaling: the composed map
/// `𝒜(D₁⁻¹ · D₂⁻¹)` satisfies RIP with `(δ₁/α₂², δ₂/α₁²)`.
pub fn transfer_rip<T: Scalar>(
    est: &RipEstimate<T>,
    pair: &RescalingPair<T>,
) -> Result<RipEstimate<T>> {
    if pair.is_singular() {
        return Err(Error::SingularRescaling(
            "cannot transfer RIP through a singular rescaling".into(),
        ));
    }
    let (alpha1, alpha2) = pair.alpha_bounds();
    Ok(RipEstimate {
        p_norm: est.p_norm,
        rank_tested: est.rank_tested,
        trials: est.trials,
        delta1_hat: est.delta1_hat / (alpha2 * alpha2),
        delta2_hat: est.delta2_hat / (alpha1 * alpha1),
        mean_ratio: est.mean_ratio / (alpha1 * alpha2),
    })
}
