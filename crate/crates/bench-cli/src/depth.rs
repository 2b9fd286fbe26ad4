//! Depth experiment: recovery of a sparse spike by the weighted-ℓ^{2−2/k}
//! program as the Hadamard factorization deepens.
//!
//! Protocol per `(k, r)` cell: `m = 3⌈r·ln d⌉` Gaussian measurements of
//! the vector with `r` leading ones, 25 sensing-matrix realizations, mean
//! relative ℓ₂ error across them.

use rayon::prelude::*;

use flatrank::ensembles::{spike_vector, SensingOperator};
use flatrank::recovery::{flat_pipeline, PipelineConfig};
use flatrank::rng::derive_seed;

use crate::config::DepthConfig;
use crate::output::{fmt, render_csv};

#[derive(Debug, Clone)]
pub struct DepthCell {
    pub cell_i: usize,
    pub cell_j: usize,
    pub k: usize,
    pub r: usize,
    pub m: usize,
    pub rel_errors: Vec<f64>,
    pub solver_failures: usize,
}

impl DepthCell {
    pub fn mean_rel_error(&self) -> f64 {
        self.rel_errors.iter().sum::<f64>() / self.rel_errors.len() as f64
    }

    pub fn success_rate(&self, threshold: f64) -> f64 {
        self.rel_errors.iter().filter(|&&e| e <= threshold).count() as f64
            / self.rel_errors.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct DepthResult {
    pub config: DepthConfig,
    pub cells: Vec<DepthCell>,
}

pub fn measurements_for(d: usize, r: usize) -> usize {
    3 * (r as f64 * (d as f64).ln()).ceil() as usize
}

pub fn run_depth_cells(
    cfg: &DepthConfig,
    only_cell: Option<(usize, usize)>,
) -> anyhow::Result<DepthResult> {
    if cfg.k_list.iter().any(|&k| k < 2) {
        anyhow::bail!("depth values must be at least 2");
    }
    if cfg.trials == 0 || cfg.k_list.is_empty() || cfg.r_list.is_empty() {
        anyhow::bail!("empty depth grid");
    }
    let mut tasks = Vec::new();
    for (i, &k) in cfg.k_list.iter().enumerate() {
        for (j, &r) in cfg.r_list.iter().enumerate() {
            if let Some((ci, cj)) = only_cell {
                if ci != i || cj != j {
                    continue;
                }
            }
            for t in 0..cfg.trials {
                tasks.push((i, j, k, r, t));
            }
        }
    }
    if tasks.is_empty() {
        anyhow::bail!("cell selection is outside the grid");
    }

    let pipe_cfg = PipelineConfig {
        solver: cfg.solver.to_config(),
        success_threshold: cfg.threshold,
        compute_certificate: false,
        compute_baseline: false,
    };

    let outcomes: Vec<anyhow::Result<(usize, usize, usize, f64, bool)>> = tasks
        .par_iter()
        .map(|&(i, j, k, r, t)| {
            let m = measurements_for(cfg.d, r);
            let seed = derive_seed(cfg.seed, "depth-operator", &[k as u64, r as u64, t as u64]);
            let op = SensingOperator::<f64>::hadamard_columns(cfg.d, m, seed)?;
            let truth = spike_vector::<f64>(cfg.d, r)?;
            let report = flat_pipeline(&op, &truth, k, &pipe_cfg)?;
            let rel = report.fro_error / (r as f64).sqrt();
            Ok((i, j, t, rel, !report.solver_converged))
        })
        .collect();

    let mut by_cell: std::collections::BTreeMap<(usize, usize), Vec<(usize, f64, bool)>> =
        std::collections::BTreeMap::new();
    for result in outcomes {
        let (i, j, t, rel, failed) = result?;
        by_cell.entry((i, j)).or_default().push((t, rel, failed));
    }
    let mut cells = Vec::new();
    for ((i, j), mut trials) in by_cell {
        trials.sort_by_key(|(t, _, _)| *t);
        cells.push(DepthCell {
            cell_i: i,
            cell_j: j,
            k: cfg.k_list[i],
            r: cfg.r_list[j],
            m: measurements_for(cfg.d, cfg.r_list[j]),
            rel_errors: trials.iter().map(|(_, rel, _)| *rel).collect(),
            solver_failures: trials.iter().filter(|(_, _, f)| *f).count(),
        });
    }
    Ok(DepthResult {
        config: cfg.clone(),
        cells,
    })
}

pub fn run_depth(cfg: &DepthConfig) -> anyhow::Result<DepthResult> {
    run_depth_cells(cfg, None)
}

pub const DEPTH_HEADER: &[&str] = &[
    "family",
    "cell_i",
    "cell_j",
    "k",
    "r",
    "d",
    "m",
    "trials",
    "seed",
    "mean_rel_error",
    "success_rate",
    "solver_failures",
];

pub fn depth_csv(result: &DepthResult) -> String {
    let cfg = &result.config;
    let rows: Vec<Vec<String>> = result
        .cells
        .iter()
        .map(|c| {
            vec![
                "depth".to_string(),
                c.cell_i.to_string(),
                c.cell_j.to_string(),
                c.k.to_string(),
                c.r.to_string(),
                cfg.d.to_string(),
                c.m.to_string(),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
                fmt(c.mean_rel_error()),
                fmt(c.success_rate(cfg.threshold)),
                c.solver_failures.to_string(),
            ]
        })
        .collect();
    render_csv(DEPTH_HEADER, &rows)
}

/// Spearman rank correlation between two equal-length sequences.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let mut ranks = vec![0.0; vals.len()];
        for (r, &i) in idx.iter().enumerate() {
            ranks[i] = r as f64;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        cov += (rx[i] - mean) * (ry[i] - mean);
        vx += (rx[i] - mean).powi(2);
        vy += (ry[i] - mean).powi(2);
    }
    cov / (vx.sqrt() * vy.sqrt()).max(1e-300)
}
