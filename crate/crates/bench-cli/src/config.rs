//! Experiment configuration: serde types, desk-scale presets, and the
//! larger `--full` presets. Configs load from JSON or TOML by extension.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use flatrank::solvers::SolverConfig;

/// Which recovery family a phase/regularity grid runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    MatrixSensing,
    Bilinear,
    Completion,
    QuadraticNn,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::MatrixSensing => "matrix-sensing",
            Family::Bilinear => "bilinear",
            Family::Completion => "completion",
            Family::QuadraticNn => "quadratic-nn",
        }
    }

    pub fn tag(&self) -> u64 {
        *self as u64
    }
}

/// Splitting-solver settings as they appear in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub adaptive_penalty: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            rho: 1.0,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_iter: 100_000,
            adaptive_penalty: true,
        }
    }
}

impl SolverSettings {
    pub fn to_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            rho: self.rho,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_iter: self.max_iter,
            adaptive_penalty: self.adaptive_penalty,
            ..SolverConfig::default()
        }
    }
}

/// Grid over (dimension, measurement budget) cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseGridConfig {
    pub family: Family,
    pub d_list: Vec<usize>,
    /// Measurement counts (sensing families).
    pub m_list: Vec<usize>,
    /// Observation probabilities (completion).
    pub p_list: Vec<f64>,
    pub rank: usize,
    /// Positive/negative widths for the quadratic-network family.
    pub r1: usize,
    pub r2: usize,
    /// Factor width; 0 means the full width `min(d₁, d₂)`.
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    /// Frobenius success threshold.
    pub threshold: f64,
    /// Attach dual certificates to each flat solve.
    pub certificates: bool,
    pub solver: SolverSettings,
}

impl Default for PhaseGridConfig {
    fn default() -> Self {
        desk_phase_preset(Family::MatrixSensing)
    }
}

/// One point on the grid's size axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeParam {
    Measurements(usize),
    Probability(f64),
}

impl SizeParam {
    pub fn as_f64(&self) -> f64 {
        match self {
            SizeParam::Measurements(m) => *m as f64,
            SizeParam::Probability(p) => *p,
        }
    }

    pub fn seed_bits(&self) -> u64 {
        match self {
            SizeParam::Measurements(m) => *m as u64,
            SizeParam::Probability(p) => p.to_bits(),
        }
    }
}

impl PhaseGridConfig {
    pub fn sizes(&self) -> Vec<SizeParam> {
        match self.family {
            Family::Completion => self.p_list.iter().map(|&p| SizeParam::Probability(p)).collect(),
            _ => self.m_list.iter().map(|&m| SizeParam::Measurements(m)).collect(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.d_list.is_empty() {
            bail!("d_list must be non-empty");
        }
        if self.sizes().is_empty() {
            bail!(
                "{} grids need a non-empty {} axis",
                self.family.as_str(),
                if self.family == Family::Completion { "p_list" } else { "m_list" }
            );
        }
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.rank == 0 && self.family != Family::QuadraticNn {
            bail!("rank must be at least 1");
        }
        if self.family == Family::QuadraticNn && self.r1 + self.r2 == 0 {
            bail!("quadratic-nn needs r1 + r2 ≥ 1");
        }
        Ok(())
    }
}

/// Desk-scale phase preset: shrunken grids that keep the transition shape.
pub fn desk_phase_preset(family: Family) -> PhaseGridConfig {
    let (d_list, m_list, p_list, rank, r1, r2) = match family {
        Family::MatrixSensing | Family::Bilinear => {
            (vec![20], vec![45, 120, 200, 300, 400], vec![], 2, 0, 0)
        }
        Family::Completion => (vec![30], vec![], vec![0.3, 0.5, 0.7, 0.9], 2, 0, 0),
        Family::QuadraticNn => (vec![10], vec![60, 100, 150], vec![], 3, 2, 1),
    };
    PhaseGridConfig {
        family,
        d_list,
        m_list,
        p_list,
        rank,
        r1,
        r2,
        k: 0,
        trials: 10,
        seed: 7,
        threshold: 1e-6,
        certificates: false,
        solver: SolverSettings::default(),
    }
}

/// Full-scale phase preset (slow; several hours of compute).
pub fn full_phase_preset(family: Family) -> PhaseGridConfig {
    let mut cfg = desk_phase_preset(family);
    match family {
        Family::MatrixSensing | Family::Bilinear => {
            cfg.d_list = vec![10, 15, 20, 25, 30];
            cfg.m_list = (1..=15).map(|i| 40 * i).collect();
        }
        Family::Completion => {
            cfg.d_list = vec![20, 30, 40];
            cfg.p_list = (1..=9).map(|i| i as f64 / 10.0).collect();
        }
        Family::QuadraticNn => {
            cfg.d_list = vec![10, 15, 20];
            cfg.m_list = (1..=8).map(|i| 50 * i).collect();
        }
    }
    cfg
}

/// Depth-experiment grid over (k, sparsity).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthConfig {
    pub d: usize,
    pub k_list: Vec<usize>,
    pub r_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Relative-error threshold counted as exact recovery.
    pub threshold: f64,
    pub solver: SolverSettings,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            d: 200,
            k_list: (2..=10).collect(),
            r_list: vec![1, 2, 3],
            trials: 25,
            seed: 11,
            threshold: 1e-4,
            solver: SolverSettings::default(),
        }
    }
}

/// Full-scale depth preset.
pub fn full_depth_preset() -> DepthConfig {
    DepthConfig {
        d: 1000,
        r_list: (1..=5).collect(),
        ..DepthConfig::default()
    }
}

/// Noisy-recovery grid over (rank, noise level).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisyConfig {
    pub d: usize,
    pub m: usize,
    pub r_list: Vec<usize>,
    pub sigma_list: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverSettings,
}

impl Default for NoisyConfig {
    fn default() -> Self {
        Self {
            d: 15,
            m: 300,
            r_list: vec![1, 2, 3],
            sigma_list: (1..=10).map(|i| i as f64 / 10.0).collect(),
            trials: 25,
            seed: 13,
            // errors here are O(σ); tight tolerances would only burn time
            solver: SolverSettings {
                abs_tol: 1e-8,
                rel_tol: 1e-8,
                max_iter: 20_000,
                ..SolverSettings::default()
            },
        }
    }
}

/// Full-scale noisy preset.
pub fn full_noisy_preset() -> NoisyConfig {
    NoisyConfig {
        d: 25,
        m: 1000,
        r_list: (1..=10).collect(),
        sigma_list: (1..=15).map(|i| i as f64 / 10.0).collect(),
        ..NoisyConfig::default()
    }
}

/// Robust-PCA trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RpcaConfig {
    pub d: usize,
    pub rank: usize,
    /// Corrupted entries per row and per column.
    pub corruptions_per_line: usize,
    pub trials: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Ground truths are resampled until their strong incoherence is at
    /// most this bound; `0` means the automatic `3·ln d` bound.
    pub max_incoherence: f64,
    pub solver: SolverSettings,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        Self {
            d: 20,
            rank: 1,
            corruptions_per_line: 1,
            trials: 10,
            seed: 17,
            threshold: 1e-5,
            max_incoherence: 0.0,
            solver: SolverSettings::default(),
        }
    }
}

/// Empirical RIP benchmark settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RipBenchConfig {
    /// Ensemble to probe: identity, gaussian, or bilinear.
    pub kind: String,
    pub d1: usize,
    pub d2: usize,
    pub m: usize,
    pub rank: usize,
    pub trials: usize,
    /// "l1" or "l2".
    pub p_norm: String,
    pub seed: u64,
}

impl Default for RipBenchConfig {
    fn default() -> Self {
        Self {
            kind: "gaussian".into(),
            d1: 10,
            d2: 10,
            m: 400,
            rank: 1,
            trials: 200,
            p_norm: "l2".into(),
            seed: 19,
        }
    }
}

/// Trace-identity sweep settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceCheckConfig {
    pub max_dim: usize,
    pub seeds_per_kind: u64,
    pub seed: u64,
}

impl Default for TraceCheckConfig {
    fn default() -> Self {
        Self {
            max_dim: 6,
            seeds_per_kind: 50,
            seed: 23,
        }
    }
}

/// Load a config from JSON (`.json`) or TOML (anything else).
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        serde_json::from_str(&text).with_context(|| format!("parsing JSON {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing TOML {}", path.display()))
    }
}
