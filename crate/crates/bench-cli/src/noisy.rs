//! Noisy recovery scaling: the ball-constrained flat relaxation against
//! the plain nuclear-norm ball program as the noise level grows.
//!
//! Per rank `r` one Gaussian operator and one ground truth are drawn and
//! reused across the whole `σ` axis; each `(σ, trial)` draws fresh noise
//! `e ~ N(0, σ²I)` and solves both programs with radius `‖e‖₂`.

use rayon::prelude::*;

use flatrank::ensembles::{sample_low_rank, SensingOperator};
use flatrank::rescaling::{build_rescaling, RescalingPair};
use flatrank::rng::{self, derive_seed};
use flatrank::solvers::{solve, ConvexProgramSpec};

use crate::config::NoisyConfig;
use crate::output::{fmt, render_csv};

#[derive(Debug, Clone)]
pub struct NoisyCell {
    pub cell_i: usize,
    pub cell_j: usize,
    pub r: usize,
    pub sigma: f64,
    pub flat_errors: Vec<f64>,
    pub nuclear_errors: Vec<f64>,
    pub solver_failures: usize,
}

impl NoisyCell {
    pub fn mean_flat_error(&self) -> f64 {
        self.flat_errors.iter().sum::<f64>() / self.flat_errors.len() as f64
    }
    pub fn mean_nuclear_error(&self) -> f64 {
        self.nuclear_errors.iter().sum::<f64>() / self.nuclear_errors.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct NoisyResult {
    pub config: NoisyConfig,
    pub cells: Vec<NoisyCell>,
}

pub fn run_noisy_cells(
    cfg: &NoisyConfig,
    only_cell: Option<(usize, usize)>,
) -> anyhow::Result<NoisyResult> {
    if cfg.r_list.is_empty() || cfg.sigma_list.is_empty() || cfg.trials == 0 {
        anyhow::bail!("empty noisy grid");
    }
    let mut tasks = Vec::new();
    for (i, &r) in cfg.r_list.iter().enumerate() {
        for (j, &sigma) in cfg.sigma_list.iter().enumerate() {
            if let Some((ci, cj)) = only_cell {
                if ci != i || cj != j {
                    continue;
                }
            }
            for t in 0..cfg.trials {
                tasks.push((i, j, r, sigma, t));
            }
        }
    }
    if tasks.is_empty() {
        anyhow::bail!("cell selection is outside the grid");
    }

    let solver = cfg.solver.to_config();
    let outcomes: Vec<anyhow::Result<(usize, usize, usize, f64, f64, bool)>> = tasks
        .par_iter()
        .map(|&(i, j, r, sigma, t)| {
            // operator and truth fixed per rank row
            let op_seed = derive_seed(cfg.seed, "noisy-operator", &[r as u64]);
            let truth_seed = derive_seed(cfg.seed, "noisy-truth", &[r as u64]);
            let op = SensingOperator::<f64>::gaussian(cfg.d, cfg.d, cfg.m, op_seed)?;
            let truth = sample_low_rank::<f64>(cfg.d, cfg.d, r, true, truth_seed)?;
            let m_nat = truth.as_matrix();
            let pair = build_rescaling(&op)?;

            let mut noise_stream = rng::stream(
                cfg.seed,
                "noise",
                &[r as u64, sigma.to_bits(), t as u64],
            );
            let noise = rng::normal_vector::<f64>(&mut noise_stream, cfg.m) * sigma;
            let b = op.forward(&m_nat)? + &noise;
            let radius = noise.norm();

            let flat_spec =
                ConvexProgramSpec::nuclear_ball(op.clone(), pair.clone(), b.clone(), radius)?;
            let flat = solve(&flat_spec, &solver)?;
            let flat_error =
                (pair.inverse_d1()? * &flat.x_hat * pair.inverse_d2()? - &m_nat).norm();

            let nuc_spec = ConvexProgramSpec::nuclear_ball(
                op.clone(),
                RescalingPair::identity(cfg.d, cfg.d),
                b,
                radius,
            )?;
            let nuc = solve(&nuc_spec, &solver)?;
            let nuc_error = (&nuc.x_hat - &m_nat).norm();

            Ok((i, j, t, flat_error, nuc_error, !flat.converged || !nuc.converged))
        })
        .collect();

    let mut by_cell: std::collections::BTreeMap<(usize, usize), Vec<(usize, f64, f64, bool)>> =
        std::collections::BTreeMap::new();
    for result in outcomes {
        let (i, j, t, fe, ne, failed) = result?;
        by_cell.entry((i, j)).or_default().push((t, fe, ne, failed));
    }
    let mut cells = Vec::new();
    for ((i, j), mut trials) in by_cell {
        trials.sort_by_key(|(t, _, _, _)| *t);
        cells.push(NoisyCell {
            cell_i: i,
            cell_j: j,
            r: cfg.r_list[i],
            sigma: cfg.sigma_list[j],
            flat_errors: trials.iter().map(|(_, fe, _, _)| *fe).collect(),
            nuclear_errors: trials.iter().map(|(_, _, ne, _)| *ne).collect(),
            solver_failures: trials.iter().filter(|(_, _, _, f)| *f).count(),
        });
    }
    Ok(NoisyResult {
        config: cfg.clone(),
        cells,
    })
}

pub fn run_noisy(cfg: &NoisyConfig) -> anyhow::Result<NoisyResult> {
    run_noisy_cells(cfg, None)
}

pub const NOISY_HEADER: &[&str] = &[
    "family",
    "cell_i",
    "cell_j",
    "r",
    "sigma",
    "d",
    "m",
    "trials",
    "seed",
    "mean_flat_error",
    "mean_nuclear_error",
    "solver_failures",
];

pub fn noisy_csv(result: &NoisyResult) -> String {
    let cfg = &result.config;
    let rows: Vec<Vec<String>> = result
        .cells
        .iter()
        .map(|c| {
            vec![
                "noisy".to_string(),
                c.cell_i.to_string(),
                c.cell_j.to_string(),
                c.r.to_string(),
                fmt(c.sigma),
                cfg.d.to_string(),
                cfg.m.to_string(),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
                fmt(c.mean_flat_error()),
                fmt(c.mean_nuclear_error()),
                c.solver_failures.to_string(),
            ]
        })
        .collect();
    render_csv(NOISY_HEADER, &rows)
}

/// Least-squares line fit `y ≈ a + b·x`; returns `(slope, intercept, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx.max(1e-300);
    let intercept = my - slope * mx;
    let r2 = (sxy * sxy) / (sxx * syy).max(1e-300);
    (slope, intercept, r2)
}
