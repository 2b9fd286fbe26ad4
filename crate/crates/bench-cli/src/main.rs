use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use flatrank_bench::config::{
    desk_phase_preset, full_depth_preset, full_noisy_preset, full_phase_preset, load_config,
    DepthConfig, Family, NoisyConfig, PhaseGridConfig, RipBenchConfig, RpcaConfig,
    TraceCheckConfig,
};
use flatrank_bench::output::{write_sidecar, write_text};
use flatrank_bench::{
    depth_csv, noisy_csv, phase_csv, regularity_csv, rpca_csv, run_depth_cells, run_noisy_cells,
    run_phase_cells, run_rip_bench, run_rpca, run_trace_check,
};

/// Flat-minima low-rank recovery experiments.
#[derive(Parser)]
#[command(name = "flatrank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (JSON or TOML). Defaults to a desk-scale preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path (CSV for grids, JSON for `rip`/`trace-check`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run a single grid cell, e.g. `--cell 0,3`.
    #[arg(long, global = true, value_parser = parse_cell)]
    cell: Option<(usize, usize)>,
    /// Use the full-scale preset grids (slow) instead of the desk preset.
    #[arg(long, global = true)]
    full: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exact-recovery phase-transition grid.
    Phase {
        /// Recovery family when no config file is given.
        #[arg(long, value_enum, default_value = "matrix-sensing")]
        family: FamilyArg,
    },
    /// Norm-minimality and balancedness measures over the same grid.
    Regularity {
        #[arg(long, value_enum, default_value = "matrix-sensing")]
        family: FamilyArg,
    },
    /// Effect of Hadamard factorization depth on sparse recovery.
    Depth,
    /// Noise-level scaling of the ball-constrained programs.
    Noisy,
    /// Robust PCA trials with per-row/column sparse corruption.
    Rpca,
    /// Empirical restricted-isometry constants of an ensemble.
    Rip,
    /// Direct-vs-closed Hessian trace identity sweep.
    TraceCheck,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FamilyArg {
    MatrixSensing,
    Bilinear,
    Completion,
    QuadraticNn,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::MatrixSensing => Family::MatrixSensing,
            FamilyArg::Bilinear => Family::Bilinear,
            FamilyArg::Completion => Family::Completion,
            FamilyArg::QuadraticNn => Family::QuadraticNn,
        }
    }
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected i,j".into());
    }
    let i = parts[0].trim().parse().map_err(|e| format!("bad cell index: {e}"))?;
    let j = parts[1].trim().parse().map_err(|e| format!("bad cell index: {e}"))?;
    Ok((i, j))
}

fn phase_config(common: &Common, family: FamilyArg) -> anyhow::Result<PhaseGridConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config::<PhaseGridConfig>(path)?,
        None if common.full => {
            eprintln!("note: --full preset grids take substantially longer to run");
            full_phase_preset(family.into())
        }
        None => desk_phase_preset(family.into()),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_with_threads<R>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("building worker pool")
            .install(f),
        None => f(),
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let common = cli.common.clone();

    match cli.command {
        Command::Phase { family } => {
            let cfg = phase_config(&common, family)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("phase.csv"));
            let result =
                run_with_threads(common.threads, || run_phase_cells(&cfg, common.cell))?;
            write_text(&out, &phase_csv(&result))?;
            write_sidecar(&out, "phase", &cfg)?;
            eprintln!("wrote {} cells to {}", result.cells.len(), out.display());
        }
        Command::Regularity { family } => {
            let cfg = phase_config(&common, family)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("regularity.csv"));
            let result =
                run_with_threads(common.threads, || run_phase_cells(&cfg, common.cell))?;
            write_text(&out, &regularity_csv(&result))?;
            write_sidecar(&out, "regularity", &cfg)?;
            eprintln!("wrote {} cells to {}", result.cells.len(), out.display());
        }
        Command::Depth => {
            let mut cfg = match &common.config {
                Some(path) => load_config::<DepthConfig>(path)?,
                None if common.full => {
                    eprintln!("note: the full depth preset (d = 1000) is slow");
                    full_depth_preset()
                }
                None => DepthConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("depth.csv"));
            let result =
                run_with_threads(common.threads, || run_depth_cells(&cfg, common.cell))?;
            write_text(&out, &depth_csv(&result))?;
            write_sidecar(&out, "depth", &cfg)?;
            eprintln!("wrote {} cells to {}", result.cells.len(), out.display());
        }
        Command::Noisy => {
            let mut cfg = match &common.config {
                Some(path) => load_config::<NoisyConfig>(path)?,
                None if common.full => {
                    eprintln!("note: the full noisy preset (d = 25, m = 1000) is slow");
                    full_noisy_preset()
                }
                None => NoisyConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("noisy.csv"));
            let result =
                run_with_threads(common.threads, || run_noisy_cells(&cfg, common.cell))?;
            write_text(&out, &noisy_csv(&result))?;
            write_sidecar(&out, "noisy", &cfg)?;
            eprintln!("wrote {} cells to {}", result.cells.len(), out.display());
        }
        Command::Rpca => {
            let mut cfg = match &common.config {
                Some(path) => load_config::<RpcaConfig>(path)?,
                None => RpcaConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("rpca.csv"));
            let result = run_with_threads(common.threads, || run_rpca(&cfg))?;
            write_text(&out, &rpca_csv(&result))?;
            write_sidecar(&out, "rpca", &cfg)?;
            eprintln!(
                "{}/{} exact recoveries; wrote {}",
                result.success_count(),
                cfg.trials,
                out.display()
            );
        }
        Command::Rip => {
            let mut cfg = match &common.config {
                Some(path) => load_config::<RipBenchConfig>(path)?,
                None => RipBenchConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let output = run_rip_bench(&cfg)?;
            let json = serde_json::to_string_pretty(&output).context("serializing rip output")?;
            match &common.out {
                Some(path) => {
                    write_text(path, &json)?;
                    write_sidecar(path, "rip", &cfg)?;
                    eprintln!("wrote {}", path.display());
                }
                None => println!("{json}"),
            }
        }
        Command::TraceCheck => {
            let mut cfg = match &common.config {
                Some(path) => load_config::<TraceCheckConfig>(path)?,
                None => TraceCheckConfig::default(),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let result = run_trace_check(&cfg)?;
            println!(
                "trace identity over {} cases: max relative deviation {:e} (worst: {} seed {})",
                result.cases,
                result.max_rel_deviation,
                result.worst_case.0,
                result.worst_case.1
            );
            if let Some(path) = &common.out {
                write_text(path, &serde_json::to_string_pretty(&result)?)?;
            }
            if result.max_rel_deviation > 1e-9 {
                anyhow::bail!("trace identity deviation exceeds 1e-9");
            }
        }
    }
    Ok(())
}
