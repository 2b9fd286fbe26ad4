//! Phase-transition and regularity grids.
//!
//! For each `(d, m-or-p)` cell: one ground truth (seeded by the cell
//! values), then `trials` independent operator draws, and for each draw
//! the flat pipeline plus the plain nuclear baseline. Trials run on a
//! bounded worker pool; seeds derive from `(master seed, purpose, cell
//! values, trial index)`, so results are independent of scheduling and
//! any single cell can be regenerated in isolation.

use rayon::prelude::*;

use flatrank::ensembles::{sample_low_rank, sample_symmetric_signed, SensingOperator};
use flatrank::numlin::to_f64;
use flatrank::recovery::{flat_pipeline, PipelineConfig, RecoveryReport};
use flatrank::rng::derive_seed;

use crate::config::{Family, PhaseGridConfig, SizeParam};
use crate::output::{fmt, render_csv};

/// Sentinel written for the regularity measures on singular-D trials.
pub const SINGULAR_SENTINEL: f64 = 1e20;

/// Per-trial outcome, flattened to `f64` for aggregation and CSV.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub success: bool,
    pub baseline_success: bool,
    pub fro_error: f64,
    pub rel_nuc_error: f64,
    pub baseline_fro_error: f64,
    pub balancedness: f64,
    pub norm_ratio: f64,
    pub gen_gap: f64,
    pub kappa: f64,
    pub singular: bool,
    pub solver_failed: bool,
    pub certificate_gap: f64,
    pub certificate_offtangent: f64,
}

impl TrialOutcome {
    fn from_report(report: &RecoveryReport<f64>) -> Self {
        let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
        Self {
            success: report.success,
            baseline_success: report.baseline_success.unwrap_or(false),
            fro_error: report.fro_error,
            rel_nuc_error: report.nuc_error,
            baseline_fro_error: opt(report.baseline_fro_error),
            balancedness: opt(report.balancedness),
            norm_ratio: opt(report.norm_ratio),
            gen_gap: opt(report.generalization_gap),
            kappa: report.kappa,
            singular: report.singular_d,
            solver_failed: !report.singular_d
                && (!report.solver_converged || report.baseline_converged == Some(false)),
            certificate_gap: report
                .certificate
                .as_ref()
                .map(|c| to_f64(c.duality_gap))
                .unwrap_or(f64::NAN),
            certificate_offtangent: report
                .certificate
                .as_ref()
                .map(|c| to_f64(c.offtangent_opnorm))
                .unwrap_or(f64::NAN),
        }
    }
}

/// One grid cell with its raw trial outcomes.
#[derive(Debug, Clone)]
pub struct PhaseCell {
    pub cell_i: usize,
    pub cell_j: usize,
    pub d: usize,
    pub size: SizeParam,
    pub outcomes: Vec<TrialOutcome>,
}

fn mean_over<F: Fn(&TrialOutcome) -> f64>(outcomes: &[TrialOutcome], f: F) -> f64 {
    let vals: Vec<f64> = outcomes.iter().map(&f).filter(|v| v.is_finite()).collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

impl PhaseCell {
    pub fn success_rate(&self) -> f64 {
        self.outcomes.iter().filter(|o| o.success).count() as f64 / self.outcomes.len() as f64
    }

    pub fn baseline_success_rate(&self) -> f64 {
        self.outcomes.iter().filter(|o| o.baseline_success).count() as f64
            / self.outcomes.len() as f64
    }

    pub fn mean_fro_error(&self) -> f64 {
        mean_over(&self.outcomes, |o| o.fro_error)
    }

    pub fn mean_rel_nuc_error(&self) -> f64 {
        mean_over(&self.outcomes, |o| o.rel_nuc_error)
    }

    pub fn mean_baseline_error(&self) -> f64 {
        mean_over(&self.outcomes, |o| o.baseline_fro_error)
    }

    pub fn mean_balancedness(&self) -> f64 {
        mean_over(&self.outcomes, |o| o.balancedness)
    }

    pub fn mean_norm_ratio(&self) -> f64 {
        mean_over(&self.outcomes, |o| o.norm_ratio)
    }

    pub fn mean_kappa(&self) -> f64 {
        mean_over(&self.outcomes, |o| if o.singular { f64::NAN } else { o.kappa })
    }

    pub fn mean_gen_gap(&self) -> f64 {
        mean_over(&self.outcomes, |o| o.gen_gap)
    }

    pub fn solver_failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.solver_failed).count()
    }

    pub fn singular_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.singular).count()
    }

    /// Mean of `norm_ratio − 1` with the sentinel on singular trials.
    pub fn regularity_norm_measure(&self) -> f64 {
        let vals: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| if o.singular { SINGULAR_SENTINEL } else { o.norm_ratio - 1.0 })
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    /// Mean balancedness with the sentinel on singular trials.
    pub fn regularity_balance_measure(&self) -> f64 {
        let vals: Vec<f64> = self
            .outcomes
            .iter()
            .map(|o| if o.singular { SINGULAR_SENTINEL } else { o.balancedness })
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct PhaseGridResult {
    pub config: PhaseGridConfig,
    pub cells: Vec<PhaseCell>,
}

fn pipeline_config(cfg: &PhaseGridConfig) -> PipelineConfig<f64> {
    PipelineConfig {
        solver: cfg.solver.to_config(),
        success_threshold: cfg.threshold,
        compute_certificate: cfg.certificates,
        compute_baseline: true,
    }
}

/// Run a single trial of a cell. Seeds depend only on the master seed,
/// the family, the cell values, and the trial index.
fn run_trial(cfg: &PhaseGridConfig, d: usize, size: SizeParam, trial: usize) -> anyhow::Result<TrialOutcome> {
    let tag = cfg.family.tag();
    let truth_seed = derive_seed(cfg.seed, "truth", &[tag, d as u64, size.seed_bits()]);
    let op_seed = derive_seed(
        cfg.seed,
        "operator",
        &[tag, d as u64, size.seed_bits(), trial as u64],
    );
    let pipe_cfg = pipeline_config(cfg);

    let (op, truth) = match (cfg.family, size) {
        (Family::MatrixSensing, SizeParam::Measurements(m)) => (
            SensingOperator::<f64>::gaussian(d, d, m, op_seed)?,
            sample_low_rank(d, d, cfg.rank, true, truth_seed)?,
        ),
        (Family::Bilinear, SizeParam::Measurements(m)) => (
            SensingOperator::<f64>::bilinear(d, d, m, op_seed)?,
            sample_low_rank(d, d, cfg.rank, true, truth_seed)?,
        ),
        (Family::Completion, SizeParam::Probability(p)) => (
            SensingOperator::<f64>::completion(d, d, p, op_seed)?,
            sample_low_rank(d, d, cfg.rank, true, truth_seed)?,
        ),
        (Family::QuadraticNn, SizeParam::Measurements(m)) => (
            SensingOperator::<f64>::quadratic(d, m, op_seed)?,
            sample_symmetric_signed(d, cfg.r1, cfg.r2, true, truth_seed)?,
        ),
        _ => anyhow::bail!("size axis does not match family {}", cfg.family.as_str()),
    };
    let k = if cfg.k == 0 { d } else { cfg.k };
    let report = flat_pipeline(&op, &truth, k, &pipe_cfg)?;
    Ok(TrialOutcome::from_report(&report))
}

/// Run the full grid (or the restriction to one cell).
pub fn run_phase_cells(
    cfg: &PhaseGridConfig,
    only_cell: Option<(usize, usize)>,
) -> anyhow::Result<PhaseGridResult> {
    cfg.validate()?;
    let sizes = cfg.sizes();
    let mut tasks = Vec::new();
    for (i, &d) in cfg.d_list.iter().enumerate() {
        for (j, &size) in sizes.iter().enumerate() {
            if let Some((ci, cj)) = only_cell {
                if ci != i || cj != j {
                    continue;
                }
            }
            for t in 0..cfg.trials {
                tasks.push((i, j, d, size, t));
            }
        }
    }
    if tasks.is_empty() {
        anyhow::bail!("cell selection is outside the grid");
    }

    let outcomes: Vec<anyhow::Result<(usize, usize, usize, TrialOutcome)>> = tasks
        .par_iter()
        .map(|&(i, j, d, size, t)| run_trial(cfg, d, size, t).map(|o| (i, j, t, o)))
        .collect();

    let mut by_cell: std::collections::BTreeMap<(usize, usize), Vec<(usize, TrialOutcome)>> =
        std::collections::BTreeMap::new();
    for result in outcomes {
        let (i, j, t, o) = result?;
        by_cell.entry((i, j)).or_default().push((t, o));
    }

    let mut cells = Vec::new();
    for ((i, j), mut trials) in by_cell {
        trials.sort_by_key(|(t, _)| *t);
        cells.push(PhaseCell {
            cell_i: i,
            cell_j: j,
            d: cfg.d_list[i],
            size: sizes[j],
            outcomes: trials.into_iter().map(|(_, o)| o).collect(),
        });
    }
    Ok(PhaseGridResult {
        config: cfg.clone(),
        cells,
    })
}

pub fn run_phase(cfg: &PhaseGridConfig) -> anyhow::Result<PhaseGridResult> {
    run_phase_cells(cfg, None)
}

pub const PHASE_HEADER: &[&str] = &[
    "family",
    "cell_i",
    "cell_j",
    "d1",
    "d2",
    "m_or_p",
    "rank",
    "k",
    "trials",
    "seed",
    "success_rate",
    "nuc_success_rate",
    "mean_fro_error",
    "mean_rel_nuc_error",
    "mean_nuc_baseline_error",
    "mean_balancedness",
    "mean_norm_ratio",
    "mean_kappa",
    "mean_gen_gap",
    "solver_failures",
    "singular_d_count",
];

/// Render the phase CSV (byte-deterministic for a fixed config and seed).
pub fn phase_csv(result: &PhaseGridResult) -> String {
    let cfg = &result.config;
    let rows: Vec<Vec<String>> = result
        .cells
        .iter()
        .map(|c| {
            vec![
                cfg.family.as_str().to_string(),
                c.cell_i.to_string(),
                c.cell_j.to_string(),
                c.d.to_string(),
                c.d.to_string(),
                fmt(c.size.as_f64()),
                cfg.rank.to_string(),
                (if cfg.k == 0 { c.d } else { cfg.k }).to_string(),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
                fmt(c.success_rate()),
                fmt(c.baseline_success_rate()),
                fmt(c.mean_fro_error()),
                fmt(c.mean_rel_nuc_error()),
                fmt(c.mean_baseline_error()),
                fmt(c.mean_balancedness()),
                fmt(c.mean_norm_ratio()),
                fmt(c.mean_kappa()),
                fmt(c.mean_gen_gap()),
                c.solver_failures().to_string(),
                c.singular_count().to_string(),
            ]
        })
        .collect();
    render_csv(PHASE_HEADER, &rows)
}

pub const REGULARITY_HEADER: &[&str] = &[
    "family",
    "cell_i",
    "cell_j",
    "d1",
    "d2",
    "m_or_p",
    "rank",
    "trials",
    "seed",
    "measure_norm",
    "measure_balance",
    "log10_measure_norm",
    "log10_measure_balance",
    "success_rate",
    "solver_failures",
    "singular_d_count",
];

fn log10_clamped(x: f64) -> f64 {
    x.max(1e-30).log10()
}

/// Render the regularity CSV with the `1e20` singular-cell sentinel.
pub fn regularity_csv(result: &PhaseGridResult) -> String {
    let cfg = &result.config;
    let rows: Vec<Vec<String>> = result
        .cells
        .iter()
        .map(|c| {
            let norm = c.regularity_norm_measure();
            let balance = c.regularity_balance_measure();
            vec![
                cfg.family.as_str().to_string(),
                c.cell_i.to_string(),
                c.cell_j.to_string(),
                c.d.to_string(),
                c.d.to_string(),
                fmt(c.size.as_f64()),
                cfg.rank.to_string(),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
                fmt(norm),
                fmt(balance),
                fmt(log10_clamped(norm)),
                fmt(log10_clamped(balance)),
                fmt(c.success_rate()),
                c.solver_failures().to_string(),
                c.singular_count().to_string(),
            ]
        })
        .collect();
    render_csv(REGULARITY_HEADER, &rows)
}
