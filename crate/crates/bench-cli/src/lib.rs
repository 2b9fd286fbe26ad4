//! Experiment harness behind the `flatrank` CLI: seeded Monte-Carlo
//! grids over the recovery families, with deterministic CSV output.
//!
//! Everything the binary does is callable as a library function so the
//! grids can be driven from tests; reruns with the same config and seed
//! are byte-identical regardless of worker-thread count.

pub mod config;
pub mod depth;
pub mod diagnostics;
pub mod grid;
pub mod noisy;
pub mod output;
pub mod rpca;

pub use config::{
    desk_phase_preset, full_depth_preset, full_noisy_preset, full_phase_preset, load_config,
    DepthConfig, Family, NoisyConfig, PhaseGridConfig, RipBenchConfig, RpcaConfig, SolverSettings,
    TraceCheckConfig,
};
pub use depth::{depth_csv, run_depth, run_depth_cells, spearman, DepthResult};
pub use diagnostics::{run_rip_bench, run_trace_check, RipBenchOutput, TraceCheckResult};
pub use grid::{
    phase_csv, regularity_csv, run_phase, run_phase_cells, PhaseCell, PhaseGridResult,
    SINGULAR_SENTINEL,
};
pub use noisy::{linear_fit, noisy_csv, run_noisy, run_noisy_cells, NoisyResult};
pub use rpca::{rpca_csv, run_rpca, sparse_corruption, RpcaResult};
