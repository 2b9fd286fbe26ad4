//! Diagnostics: the direct-vs-closed trace identity sweep and the
//! empirical RIP benchmark.

use serde::Serialize;

use flatrank::ensembles::{OperatorKind, SensingOperator};
use flatrank::hessian::{scaled_trace_closed, scaled_trace_direct, FactorPair};
use flatrank::rescaling::{
    build_rescaling, estimate_rip, transfer_rip, RescalingSummary, RipNorm, RipSummary,
};
use flatrank::rng::{self, derive_seed};

use crate::config::{RipBenchConfig, TraceCheckConfig};

/// The ensemble kinds covered by the trace sweep.
pub const TRACE_KINDS: [OperatorKind; 6] = [
    OperatorKind::Identity,
    OperatorKind::Gaussian,
    OperatorKind::Bilinear,
    OperatorKind::Completion,
    OperatorKind::Quadratic,
    OperatorKind::HadamardColumns,
];

#[derive(Debug, Clone, Serialize)]
pub struct TraceCheckResult {
    pub cases: usize,
    pub max_rel_deviation: f64,
    /// Worst case as (kind, seed) for reproduction.
    pub worst_case: (String, u64),
}

fn pick(stream: &mut flatrank::rng::Stream, lo: usize, hi: usize) -> usize {
    lo + (rng::standard_normal::<f64>(stream).abs() * 1e9) as usize % (hi - lo + 1)
}

/// Compare the basis-enumeration trace against the closed form on random
/// interpolating instances of every ensemble kind.
pub fn run_trace_check(cfg: &TraceCheckConfig) -> anyhow::Result<TraceCheckResult> {
    let mut cases = 0;
    let mut worst = 0.0f64;
    let mut worst_case = (String::new(), 0u64);
    for kind in TRACE_KINDS {
        for s in 0..cfg.seeds_per_kind {
            let seed = derive_seed(cfg.seed, "trace-check", &[kind as u64, s]);
            let mut stream = rng::stream(seed, "trace-instance", &[]);
            let d1 = pick(&mut stream, 2, cfg.max_dim);
            let d2 = pick(&mut stream, 2, cfg.max_dim);
            let (op, factors) = match kind {
                OperatorKind::Identity => (
                    SensingOperator::<f64>::identity(d1, d2)?,
                    random_asymmetric(&mut stream, d1, d2),
                ),
                OperatorKind::Gaussian => (
                    SensingOperator::<f64>::gaussian(d1, d2, d1 * d2 / 2 + 2, seed)?,
                    random_asymmetric(&mut stream, d1, d2),
                ),
                OperatorKind::Bilinear => (
                    SensingOperator::<f64>::bilinear(d1, d2, d1 * d2 / 2 + 2, seed)?,
                    random_asymmetric(&mut stream, d1, d2),
                ),
                OperatorKind::Completion => (
                    SensingOperator::<f64>::completion(d1, d2, 0.7, seed)?,
                    random_asymmetric(&mut stream, d1, d2),
                ),
                OperatorKind::Quadratic => {
                    let op = SensingOperator::<f64>::quadratic(d1, 2 * d1, seed)?;
                    let k1 = pick(&mut stream, 1, 2);
                    let k2 = pick(&mut stream, 1, 2);
                    let factors = FactorPair::SymmetricSigned {
                        u1: rng::normal_matrix(&mut stream, d1, k1),
                        u2: rng::normal_matrix(&mut stream, d1, k2),
                    };
                    (op, factors)
                }
                OperatorKind::HadamardColumns => {
                    let op = SensingOperator::<f64>::hadamard_columns(d1, 2 * d1, seed)?;
                    let k = pick(&mut stream, 2, 4);
                    let factors = FactorPair::Hadamard {
                        factors: (0..k).map(|_| rng::normal_vector(&mut stream, d1)).collect(),
                    };
                    (op, factors)
                }
                OperatorKind::SplitBilinear => unreachable!(),
            };
            let b = op.forward(&factors.product())?;
            let pair = build_rescaling(&op)?;
            let direct = scaled_trace_direct(&op, &factors, &b)?;
            let closed = scaled_trace_closed(&op, &pair, &factors)?;
            let rel = (direct - closed).abs() / direct.abs().max(1e-300);
            cases += 1;
            if rel > worst {
                worst = rel;
                worst_case = (kind.as_str().to_string(), seed);
            }
        }
    }
    Ok(TraceCheckResult {
        cases,
        max_rel_deviation: worst,
        worst_case,
    })
}

fn random_asymmetric(
    stream: &mut flatrank::rng::Stream,
    d1: usize,
    d2: usize,
) -> FactorPair<f64> {
    let k = pick(stream, 1, 3);
    FactorPair::Asymmetric {
        left: rng::normal_matrix(stream, d1, k),
        right: rng::normal_matrix(stream, d2, k),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RipBenchOutput {
    pub kind: String,
    pub d1: usize,
    pub d2: usize,
    pub m: usize,
    pub rescaling: RescalingSummary,
    pub estimate: RipSummary,
    /// The estimate carried through the operator's own rescaling, when
    /// that rescaling is nonsingular.
    pub transferred: Option<RipSummary>,
}

pub fn run_rip_bench(cfg: &RipBenchConfig) -> anyhow::Result<RipBenchOutput> {
    let op = match cfg.kind.as_str() {
        "identity" => SensingOperator::<f64>::identity(cfg.d1, cfg.d2)?,
        "gaussian" => SensingOperator::<f64>::gaussian(cfg.d1, cfg.d2, cfg.m, cfg.seed)?,
        "bilinear" => SensingOperator::<f64>::bilinear(cfg.d1, cfg.d2, cfg.m, cfg.seed)?,
        other => anyhow::bail!("unsupported rip ensemble {other:?}"),
    };
    let p_norm = match cfg.p_norm.as_str() {
        "l1" => RipNorm::L1,
        "l2" => RipNorm::L2,
        other => anyhow::bail!("p_norm must be l1 or l2, got {other:?}"),
    };
    let pair = build_rescaling(&op)?;
    let est = estimate_rip(&op, cfg.rank, cfg.trials, p_norm, cfg.seed ^ 0x9e37)?;
    let transferred = if pair.is_singular() {
        None
    } else {
        Some(transfer_rip(&est, &pair)?.summary())
    };
    Ok(RipBenchOutput {
        kind: cfg.kind.clone(),
        d1: op.d1(),
        d2: op.d2(),
        m: op.measurements(),
        rescaling: pair.summary(),
        estimate: est.summary(),
        transferred,
    })
}
