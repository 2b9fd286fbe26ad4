//! Measurement ensembles: sampling, forward/adjoint application, and
//! ground-truth generation.
//!
//! A [`SensingOperator`] is a linear map from `d₁ × d₂` matrices to `ℝᵐ`,
//! stored in whatever factored form the ensemble admits: Gaussian
//! ensembles keep dense measurement matrices, bilinear and quadratic
//! ensembles keep only their factor vectors, completion keeps a 0/1 mask,
//! and vector sensing keeps the `m × d` sensing matrix itself (matrices
//! are then `d × 1`). Sampling is deterministic in the seed; operators
//! serialize to a small JSON descriptor from which the payload is
//! regenerated, never stored.

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

/// The measurement models supported by the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// `𝒜(X) = vec(X)`, one measurement per entry.
    Identity,
    /// Dense measurement matrices with i.i.d. standard normal entries.
    Gaussian,
    /// Rank-one measurements `Aᵢ = aᵢ bᵢᵀ` with Gaussian factor vectors.
    Bilinear,
    /// Bernoulli(p) entry sampling; `m = d₁·d₂` with a 0/1 mask.
    Completion,
    /// Symmetric rank-one measurements `Aᵢ = xᵢ xᵢᵀ` (quadratic features).
    Quadratic,
    /// Vector sensing by an `m × d` Gaussian matrix; inputs are `d × 1`.
    HadamardColumns,
    /// Paired differences of a quadratic ensemble, `Aᵢ = uᵢ vᵢᵀ`.
    SplitBilinear,
}

impl OperatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorKind::Identity => "identity",
            OperatorKind::Gaussian => "gaussian",
            OperatorKind::Bilinear => "bilinear",
            OperatorKind::Completion => "completion",
            OperatorKind::Quadratic => "quadratic",
            OperatorKind::HadamardColumns => "hadamard-columns",
            OperatorKind::SplitBilinear => "split-bilinear",
        }
    }
}

/// Size parameter passed at sampling time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnsembleSize {
    /// Number of measurements.
    Measurements(usize),
    /// Bernoulli observation probability (completion only).
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Payload<T: Scalar> {
    Identity,
    /// `m × (d₁·d₂)`; row `i` is `vec(Aᵢ)ᵀ` in column-major order.
    Dense { rows: DMat<T> },
    /// Columns of `left` are the `aᵢ`, columns of `right` are the `bᵢ`.
    Factored { left: DMat<T>, right: DMat<T> },
    /// 0/1 observation mask; measurement `i` reads entry `(i mod d₁, i div d₁)`.
    Mask { mask: DMat<T> },
    /// Columns are the feature vectors `xᵢ`.
    Features { feats: DMat<T> },
    /// The `m × d` sensing matrix acting on `d × 1` inputs.
    Columns { a: DMat<T> },
    /// Columns of `plus`/`minus` are `(x₂ᵢ₋₁ ± x₂ᵢ)/√2`.
    SplitPairs { plus: DMat<T>, minus: DMat<T> },
}

/// A sampled linear measurement map with forward and adjoint application.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator<T: Scalar> {
    kind: OperatorKind,
    d1: usize,
    d2: usize,
    m: usize,
    seed: u64,
    /// Observation probability for the completion kind.
    probability: Option<f64>,
    /// Set when an odd trailing measurement was dropped by the split map.
    dropped_odd: bool,
    payload: Payload<T>,
}

/// JSON-serializable description; the payload regenerates from the seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OperatorDescriptor {
    pub kind: OperatorKind,
    pub d1: usize,
    pub d2: usize,
    pub size: EnsembleSize,
    pub seed: u64,
}

fn require_positive_dims(d1: usize, d2: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "dimensions must be positive, got {d1}×{d2}"
        )));
    }
    Ok(())
}

/// Sample a measurement ensemble. Deterministic for a fixed seed.
pub fn sample_ensemble<T: Scalar>(
    kind: OperatorKind,
    d1: usize,
    d2: usize,
    size: EnsembleSize,
    seed: u64,
) -> Result<SensingOperator<T>> {
    require_positive_dims(d1, d2)?;
    let measurements = |s: EnsembleSize| -> Result<usize> {
        match s {
            EnsembleSize::Measurements(m) if m > 0 => Ok(m),
            EnsembleSize::Measurements(_) => Err(Error::InvalidParameter(
                "measurement count must be positive".into(),
            )),
            EnsembleSize::Probability(_) => Err(Error::InvalidParameter(
                "this ensemble takes a measurement count, not a probability".into(),
            )),
        }
    };
    let mut stream = rng::stream(seed, "ensemble", &[kind as u64, d1 as u64, d2 as u64]);
    let op = match kind {
        OperatorKind::Identity => SensingOperator {
            kind,
            d1,
            d2,
            m: d1 * d2,
            seed,
            probability: None,
            dropped_odd: false,
            payload: Payload::Identity,
        },
        OperatorKind::Gaussian => {
            let m = measurements(size)?;
            let n = d1 * d2;
            let mut rows = DMat::zeros(m, n);
            for i in 0..m {
                let a = rng::normal_matrix::<T>(&mut stream, d1, d2);
                for (j, v) in a.iter().enumerate() {
                    rows[(i, j)] = *v;
                }
            }
            SensingOperator {
                kind,
                d1,
                d2,
                m,
                seed,
                probability: None,
                dropped_odd: false,
                payload: Payload::Dense { rows },
            }
        }
        OperatorKind::Bilinear => {
            let m = measurements(size)?;
            let mut left = DMat::zeros(d1, m);
            let mut right = DMat::zeros(d2, m);
            for i in 0..m {
                left.column_mut(i)
                    .copy_from(&rng::normal_vector::<T>(&mut stream, d1));
                right
                    .column_mut(i)
                    .copy_from(&rng::normal_vector::<T>(&mut stream, d2));
            }
            SensingOperator {
                kind,
                d1,
                d2,
                m,
                seed,
                probability: None,
                dropped_odd: false,
                payload: Payload::Factored { left, right },
            }
        }
        OperatorKind::Completion => {
            let p = match size {
                EnsembleSize::Probability(p) if p > 0.0 && p <= 1.0 => p,
                EnsembleSize::Probability(p) => {
                    return Err(Error::InvalidParameter(format!(
                        "observation probability must lie in (0, 1], got {p}"
                    )))
                }
                EnsembleSize::Measurements(_) => {
                    return Err(Error::InvalidParameter(
                        "completion takes an observation probability".into(),
                    ))
                }
            };
            let mut mask = DMat::zeros(d1, d2);
            for j in 0..d2 {
                for i in 0..d1 {
                    if rng::bernoulli(&mut stream, p) {
                        mask[(i, j)] = T::one();
                    }
                }
            }
            SensingOperator {
                kind,
                d1,
                d2,
                m: d1 * d2,
                seed,
                probability: Some(p),
                dropped_odd: false,
                payload: Payload::Mask { mask },
            }
        }
        OperatorKind::Quadratic => {
            if d1 != d2 {
                return Err(Error::InvalidParameter(format!(
                    "quadratic ensemble requires square dimensions, got {d1}×{d2}"
                )));
            }
            let m = measurements(size)?;
            let mut feats = DMat::zeros(d1, m);
            for i in 0..m {
                feats
                    .column_mut(i)
                    .copy_from(&rng::normal_vector::<T>(&mut stream, d1));
            }
            SensingOperator {
                kind,
                d1,
                d2,
                m,
                seed,
                probability: None,
                dropped_odd: false,
                payload: Payload::Features { feats },
            }
        }
        OperatorKind::HadamardColumns => {
            if d2 != 1 {
                return Err(Error::InvalidParameter(
                    "vector sensing acts on d×1 inputs; d2 must be 1".into(),
                ));
            }
            let m = measurements(size)?;
            let a = rng::normal_matrix::<T>(&mut stream, m, d1);
            SensingOperator {
                kind,
                d1,
                d2,
                m,
                seed,
                probability: None,
                dropped_odd: false,
                payload: Payload::Columns { a },
            }
        }
        OperatorKind::SplitBilinear => {
            let m = measurements(size)?;
            let base = sample_ensemble::<T>(
                OperatorKind::Quadratic,
                d1,
                d2,
                EnsembleSize::Measurements(m),
                seed,
            )?;
            return base.split_bilinear();
        }
    };
    Ok(op)
}

impl<T: Scalar> SensingOperator<T> {
    pub fn identity(d1: usize, d2: usize) -> Result<Self> {
        sample_ensemble(
            OperatorKind::Identity,
            d1,
            d2,
            EnsembleSize::Measurements(d1 * d2),
            0,
        )
    }

    pub fn gaussian(d1: usize, d2: usize, m: usize, seed: u64) -> Result<Self> {
        sample_ensemble(OperatorKind::Gaussian, d1, d2, EnsembleSize::Measurements(m), seed)
    }

    pub fn bilinear(d1: usize, d2: usize, m: usize, seed: u64) -> Result<Self> {
        sample_ensemble(OperatorKind::Bilinear, d1, d2, EnsembleSize::Measurements(m), seed)
    }

    pub fn completion(d1: usize, d2: usize, p: f64, seed: u64) -> Result<Self> {
        sample_ensemble(
            OperatorKind::Completion,
            d1,
            d2,
            EnsembleSize::Probability(p),
            seed,
        )
    }

    pub fn quadratic(d: usize, m: usize, seed: u64) -> Result<Self> {
        sample_ensemble(OperatorKind::Quadratic, d, d, EnsembleSize::Measurements(m), seed)
    }

    pub fn hadamard_columns(d: usize, m: usize, seed: u64) -> Result<Self> {
        sample_ensemble(
            OperatorKind::HadamardColumns,
            d,
            1,
            EnsembleSize::Measurements(m),
            seed,
        )
    }

    /// Build a vector-sensing operator from an explicit `m × d` matrix.
    pub fn from_sensing_matrix(a: DMat<T>) -> Result<Self> {
        let (m, d) = (a.nrows(), a.ncols());
        require_positive_dims(d, 1)?;
        if m == 0 {
            return Err(Error::InvalidParameter("need at least one row".into()));
        }
        Ok(SensingOperator {
            kind: OperatorKind::HadamardColumns,
            d1: d,
            d2: 1,
            m,
            seed: 0,
            probability: None,
            dropped_odd: false,
            payload: Payload::Columns { a },
        })
    }

    /// Build a bilinear operator directly from factor columns.
    pub fn from_bilinear_factors(left: DMat<T>, right: DMat<T>) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(Error::DimensionMismatch(
                "left and right factor counts differ".into(),
            ));
        }
        let (d1, d2, m) = (left.nrows(), right.nrows(), left.ncols());
        require_positive_dims(d1, d2)?;
        Ok(SensingOperator {
            kind: OperatorKind::Bilinear,
            d1,
            d2,
            m,
            seed: 0,
            probability: None,
            dropped_odd: false,
            payload: Payload::Factored { left, right },
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }
    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn d2(&self) -> usize {
        self.d2
    }
    pub fn measurements(&self) -> usize {
        self.m
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn probability(&self) -> Option<f64> {
        self.probability
    }
    pub fn dropped_odd_measurement(&self) -> bool {
        self.dropped_odd
    }

    /// The observation mask (completion kind only).
    pub fn mask(&self) -> Option<&DMat<T>> {
        match &self.payload {
            Payload::Mask { mask } => Some(mask),
            _ => None,
        }
    }

    /// The `m × d` sensing matrix (vector-sensing kind only).
    pub fn sensing_matrix(&self) -> Option<&DMat<T>> {
        match &self.payload {
            Payload::Columns { a } => Some(a),
            _ => None,
        }
    }

    /// The feature vectors as columns (quadratic kind only).
    pub fn features(&self) -> Option<&DMat<T>> {
        match &self.payload {
            Payload::Features { feats } => Some(feats),
            _ => None,
        }
    }

    fn check_shape(&self, x: &DMat<T>) -> Result<()> {
        if x.nrows() != self.d1 || x.ncols() != self.d2 {
            return Err(Error::DimensionMismatch(format!(
                "operator expects {}×{} inputs, got {}×{}",
                self.d1,
                self.d2,
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Apply the map: `[𝒜(X)]ᵢ = ⟨Aᵢ, X⟩`.
    pub fn forward(&self, x: &DMat<T>) -> Result<DVec<T>> {
        self.check_shape(x)?;
        Ok(match &self.payload {
            Payload::Identity => DVec::from_column_slice(x.as_slice()),
            Payload::Dense { rows } => rows * DVec::from_column_slice(x.as_slice()),
            Payload::Factored { left, right } => factored_forward(left, right, x),
            Payload::Mask { mask } => DVec::from_column_slice(x.component_mul(mask).as_slice()),
            Payload::Features { feats } => factored_forward(feats, feats, x),
            Payload::Columns { a } => a * x.column(0).clone_owned(),
            Payload::SplitPairs { plus, minus } => factored_forward(plus, minus, x),
        })
    }

    /// Apply the adjoint: `𝒜*(y) = Σᵢ yᵢ Aᵢ`.
    pub fn adjoint(&self, y: &DVec<T>) -> Result<DMat<T>> {
        if y.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "adjoint expects length-{} vectors, got {}",
                self.m,
                y.len()
            )));
        }
        Ok(match &self.payload {
            Payload::Identity => DMat::from_column_slice(self.d1, self.d2, y.as_slice()),
            Payload::Dense { rows } => {
                let v = rows.transpose() * y;
                DMat::from_column_slice(self.d1, self.d2, v.as_slice())
            }
            Payload::Factored { left, right } => factored_adjoint(left, right, y),
            Payload::Mask { mask } => {
                DMat::from_column_slice(self.d1, self.d2, y.as_slice()).component_mul(mask)
            }
            Payload::Features { feats } => factored_adjoint(feats, feats, y),
            Payload::Columns { a } => {
                let v = a.transpose() * y;
                DMat::from_column_slice(self.d1, 1, v.as_slice())
            }
            Payload::SplitPairs { plus, minus } => factored_adjoint(plus, minus, y),
        })
    }

    /// Materialize the `i`-th measurement matrix (debug/diagnostic path).
    pub fn measurement_matrix(&self, i: usize) -> DMat<T> {
        assert!(i < self.m, "measurement index {i} out of range 0..{}", self.m);
        match &self.payload {
            Payload::Identity => {
                let mut a = DMat::zeros(self.d1, self.d2);
                a[(i % self.d1, i / self.d1)] = T::one();
                a
            }
            Payload::Dense { rows } => {
                DMat::from_column_slice(self.d1, self.d2, rows.row(i).transpose().as_slice())
            }
            Payload::Factored { left, right } => left.column(i) * right.column(i).transpose(),
            Payload::Mask { mask } => {
                let (r, c) = (i % self.d1, i / self.d1);
                let mut a = DMat::zeros(self.d1, self.d2);
                a[(r, c)] = mask[(r, c)];
                a
            }
            Payload::Features { feats } => feats.column(i) * feats.column(i).transpose(),
            Payload::Columns { a } => {
                DMat::from_column_slice(self.d1, 1, a.row(i).transpose().as_slice())
            }
            Payload::SplitPairs { plus, minus } => plus.column(i) * minus.column(i).transpose(),
        }
    }

    /// Build the paired-difference map of a quadratic ensemble:
    /// `[𝒜₁(Z)]ᵢ = ((x₂ᵢ₋₁+x₂ᵢ)/√2)ᵀ Z ((x₂ᵢ₋₁−x₂ᵢ)/√2)`, which equals
    /// `½([𝒜(Z)]₂ᵢ₋₁ − [𝒜(Z)]₂ᵢ)` on symmetric `Z`. An odd trailing
    /// measurement is dropped and recorded.
    pub fn split_bilinear(&self) -> Result<SensingOperator<T>> {
        let feats = match &self.payload {
            Payload::Features { feats } => feats,
            _ => {
                return Err(Error::WrongOperatorKind {
                    expected: "quadratic".into(),
                    found: self.kind.as_str().into(),
                })
            }
        };
        let pairs = self.m / 2;
        if pairs == 0 {
            return Err(Error::InvalidParameter(
                "split map needs at least two measurements".into(),
            ));
        }
        let inv_sqrt2 = T::one() / scalar::<T>(2.0).sqrt();
        let mut plus = DMat::zeros(self.d1, pairs);
        let mut minus = DMat::zeros(self.d1, pairs);
        for i in 0..pairs {
            let a = feats.column(2 * i);
            let b = feats.column(2 * i + 1);
            plus.column_mut(i).copy_from(&((a + b) * inv_sqrt2));
            minus.column_mut(i).copy_from(&((a - b) * inv_sqrt2));
        }
        Ok(SensingOperator {
            kind: OperatorKind::SplitBilinear,
            d1: self.d1,
            d2: self.d2,
            m: pairs,
            seed: self.seed,
            probability: None,
            dropped_odd: self.m % 2 == 1,
            payload: Payload::SplitPairs { plus, minus },
        })
    }

    /// Descriptor from which this operator can be regenerated.
    pub fn descriptor(&self) -> OperatorDescriptor {
        let size = match self.kind {
            OperatorKind::Completion => EnsembleSize::Probability(self.probability.unwrap_or(1.0)),
            // store the parent quadratic measurement count
            OperatorKind::SplitBilinear => {
                EnsembleSize::Measurements(2 * self.m + usize::from(self.dropped_odd))
            }
            _ => EnsembleSize::Measurements(self.m),
        };
        OperatorDescriptor {
            kind: self.kind,
            d1: self.d1,
            d2: self.d2,
            size,
            seed: self.seed,
        }
    }

    /// Regenerate an operator from its descriptor.
    pub fn from_descriptor(desc: &OperatorDescriptor) -> Result<Self> {
        sample_ensemble(desc.kind, desc.d1, desc.d2, desc.size, desc.seed)
    }
}

fn factored_forward<T: Scalar>(left: &DMat<T>, right: &DMat<T>, x: &DMat<T>) -> DVec<T> {
    let xr = x * right; // d1 × m
    let mut y = DVec::zeros(left.ncols());
    for i in 0..left.ncols() {
        y[i] = left.column(i).dot(&xr.column(i));
    }
    y
}

fn factored_adjoint<T: Scalar>(left: &DMat<T>, right: &DMat<T>, y: &DVec<T>) -> DMat<T> {
    let mut scaled = left.clone();
    for i in 0..scaled.ncols() {
        scaled.column_mut(i).scale_mut(y[i]);
    }
    &scaled * right.transpose()
}

/// Ground truths for the recovery experiments.
#[derive(Debug, Clone)]
pub enum GroundTruth<T: Scalar> {
    /// `M = L₀ R₀ᵀ` with exactly `rank` columns in each factor.
    LowRank {
        matrix: DMat<T>,
        left: DMat<T>,
        right: DMat<T>,
        rank: usize,
    },
    /// `M = U₁U₁ᵀ − U₂U₂ᵀ`, symmetric with signed spectrum.
    SymmetricSigned {
        matrix: DMat<T>,
        u1: DMat<T>,
        u2: DMat<T>,
    },
    /// Sparse vector with `sparsity` nonzero leading coordinates.
    SparseVector { x: DVec<T>, sparsity: usize },
}

impl<T: Scalar> GroundTruth<T> {
    /// The ground truth as a matrix (`d × 1` for the vector case).
    pub fn as_matrix(&self) -> DMat<T> {
        match self {
            GroundTruth::LowRank { matrix, .. } | GroundTruth::SymmetricSigned { matrix, .. } => {
                matrix.clone()
            }
            GroundTruth::SparseVector { x, .. } => {
                DMat::from_column_slice(x.len(), 1, x.as_slice())
            }
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            GroundTruth::LowRank { rank, .. } => *rank,
            GroundTruth::SymmetricSigned { u1, u2, .. } => u1.ncols() + u2.ncols(),
            GroundTruth::SparseVector { sparsity, .. } => *sparsity,
        }
    }
}

/// Rank-`r` ground truth from Gaussian factors, optionally normalized to
/// unit Frobenius norm.
pub fn sample_low_rank<T: Scalar>(
    d1: usize,
    d2: usize,
    r: usize,
    unit_norm: bool,
    seed: u64,
) -> Result<GroundTruth<T>> {
    require_positive_dims(d1, d2)?;
    if r == 0 || r > d1.min(d2) {
        return Err(Error::InvalidParameter(format!(
            "rank must lie in 1..=min(d1,d2), got {r}"
        )));
    }
    let mut stream = rng::stream(seed, "ground-truth", &[d1 as u64, d2 as u64, r as u64]);
    let mut left = rng::normal_matrix::<T>(&mut stream, d1, r);
    let mut right = rng::normal_matrix::<T>(&mut stream, d2, r);
    let mut matrix = &left * right.transpose();
    if unit_norm {
        let norm = matrix.norm();
        let root = norm.sqrt();
        matrix /= norm;
        left /= root;
        right /= root;
    }
    Ok(GroundTruth::LowRank {
        matrix,
        left,
        right,
        rank: r,
    })
}

/// Symmetric signed ground truth `U₁U₁ᵀ − U₂U₂ᵀ` with `r₁` positive and
/// `r₂` negative spectral directions.
pub fn sample_symmetric_signed<T: Scalar>(
    d: usize,
    r1: usize,
    r2: usize,
    unit_norm: bool,
    seed: u64,
) -> Result<GroundTruth<T>> {
    if d == 0 || r1 + r2 == 0 || r1 + r2 > d {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ r1 + r2 ≤ d, got r1={r1}, r2={r2}, d={d}"
        )));
    }
    let mut stream = rng::stream(seed, "ground-truth-sym", &[d as u64, r1 as u64, r2 as u64]);
    let mut u1 = rng::normal_matrix::<T>(&mut stream, d, r1);
    let mut u2 = rng::normal_matrix::<T>(&mut stream, d, r2);
    let mut matrix = &u1 * u1.transpose() - &u2 * u2.transpose();
    if unit_norm {
        let norm = matrix.norm();
        let root = norm.sqrt();
        matrix /= norm;
        u1 /= root;
        u2 /= root;
    }
    Ok(GroundTruth::SymmetricSigned { matrix, u1, u2 })
}

/// Sparse vector whose first `r` coordinates are one.
pub fn spike_vector<T: Scalar>(d: usize, r: usize) -> Result<GroundTruth<T>> {
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!(
            "sparsity must lie in 1..=d, got {r}"
        )));
    }
    let mut x = DVec::zeros(d);
    for i in 0..r {
        x[i] = T::one();
    }
    Ok(GroundTruth::SparseVector { x, sparsity: r })
}
