//! Harness-level behavior: single-cell regeneration, config loading,
//! CSV schema stability, and the binary's end-to-end plumbing.

use std::process::Command;

use flatrank_bench::config::{Family, PhaseGridConfig, SolverSettings};
use flatrank_bench::{
    depth_csv, noisy_csv, phase_csv, run_depth_cells, run_noisy_cells, run_phase,
    run_phase_cells, run_rip_bench, DepthConfig, NoisyConfig, RipBenchConfig,
};

fn tiny_grid() -> PhaseGridConfig {
    PhaseGridConfig {
        family: Family::MatrixSensing,
        d_list: vec![6, 8],
        m_list: vec![12, 36],
        p_list: vec![],
        rank: 1,
        r1: 0,
        r2: 0,
        k: 0,
        trials: 3,
        seed: 41,
        threshold: 1e-6,
        certificates: false,
        solver: SolverSettings {
            max_iter: 20_000,
            ..SolverSettings::default()
        },
    }
}

#[test]
fn single_cell_regenerates_the_full_grid_row() {
    let cfg = tiny_grid();
    let full = run_phase(&cfg).unwrap();
    let single = run_phase_cells(&cfg, Some((1, 0))).unwrap();
    assert_eq!(single.cells.len(), 1);
    let full_csv = phase_csv(&full);
    let single_row = phase_csv(&single);
    let wanted = full_csv
        .lines()
        .find(|l| l.starts_with("matrix-sensing,1,0,"))
        .expect("row present in full grid");
    assert!(
        single_row.lines().any(|l| l == wanted),
        "isolated cell row differs from the full-grid row"
    );

    assert!(run_phase_cells(&cfg, Some((5, 5))).is_err());
}

#[test]
fn depth_and_noisy_cells_regenerate_too() {
    let depth_cfg = DepthConfig {
        d: 40,
        k_list: vec![2, 3],
        r_list: vec![1],
        trials: 3,
        seed: 43,
        ..DepthConfig::default()
    };
    let full = run_depth_cells(&depth_cfg, None).unwrap();
    let one = run_depth_cells(&depth_cfg, Some((1, 0))).unwrap();
    let row = depth_csv(&full)
        .lines()
        .find(|l| l.starts_with("depth,1,0,"))
        .unwrap()
        .to_string();
    assert!(depth_csv(&one).lines().any(|l| l == row));

    let noisy_cfg = NoisyConfig {
        d: 6,
        m: 40,
        r_list: vec![1],
        sigma_list: vec![0.2, 0.4],
        trials: 2,
        seed: 44,
        ..NoisyConfig::default()
    };
    let full = run_noisy_cells(&noisy_cfg, None).unwrap();
    let one = run_noisy_cells(&noisy_cfg, Some((0, 1))).unwrap();
    let row = noisy_csv(&full)
        .lines()
        .find(|l| l.starts_with("noisy,0,1,"))
        .unwrap()
        .to_string();
    assert!(noisy_csv(&one).lines().any(|l| l == row));
}

#[test]
fn configs_load_from_json_and_toml() {
    let dir = tempfile::tempdir().unwrap();
    let toml_path = dir.path().join("grid.toml");
    std::fs::write(
        &toml_path,
        r#"
family = "completion"
d_list = [5]
p_list = [0.5, 1.0]
rank = 1
trials = 2
seed = 3

[solver]
max_iter = 500
"#,
    )
    .unwrap();
    let cfg: PhaseGridConfig = flatrank_bench::load_config(&toml_path).unwrap();
    assert_eq!(cfg.family, Family::Completion);
    assert_eq!(cfg.solver.max_iter, 500);
    assert_eq!(cfg.trials, 2);

    let json_path = dir.path().join("grid.json");
    std::fs::write(
        &json_path,
        r#"{"family":"matrix-sensing","d_list":[4],"m_list":[8],"rank":1,"trials":1,"seed":5}"#,
    )
    .unwrap();
    let cfg: PhaseGridConfig = flatrank_bench::load_config(&json_path).unwrap();
    assert_eq!(cfg.family, Family::MatrixSensing);
    assert_eq!(cfg.seed, 5);
    // unspecified fields take defaults
    assert_eq!(cfg.solver.max_iter, 100_000);
}

#[test]
fn rip_bench_identity_is_exact() {
    let cfg = RipBenchConfig {
        kind: "identity".into(),
        d1: 3,
        d2: 3,
        m: 9,
        rank: 1,
        trials: 10,
        p_norm: "l2".into(),
        seed: 9,
    };
    let out = run_rip_bench(&cfg).unwrap();
    assert!((out.estimate.delta1_hat - 1.0 / 3.0).abs() < 1e-12);
    assert!((out.estimate.delta2_hat - 1.0 / 3.0).abs() < 1e-12);
    assert!(!out.rescaling.singular);
    let json = serde_json::to_string(&out).unwrap();
    assert!(json.contains("delta1_hat"));
}

#[test]
fn binary_runs_a_tiny_phase_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("tiny.toml");
    std::fs::write(
        &config_path,
        r#"
family = "matrix-sensing"
d_list = [5]
m_list = [10, 25]
rank = 1
trials = 2
seed = 21

[solver]
max_iter = 20000
"#,
    )
    .unwrap();
    let out_path = dir.path().join("out/phase.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_flatrank"))
        .args([
            "phase",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
            "--threads",
            "1",
        ])
        .status()
        .expect("binary runs");
    assert!(status.success());
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with("# flatrank-csv-v1\n"));
    assert_eq!(csv.lines().count(), 4, "schema line + header + 2 cells");
    let sidecar = std::fs::read_to_string(dir.path().join("out/phase.csv.meta.json")).unwrap();
    assert!(sidecar.contains("\"command\": \"phase\""));
    assert!(sidecar.contains("\"seed\": 21"));

    // --cell restricts to one row, matching the full run byte for byte
    let cell_out = dir.path().join("out/cell.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_flatrank"))
        .args([
            "phase",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            cell_out.to_str().unwrap(),
            "--cell",
            "0,1",
            "--threads",
            "1",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let cell_csv = std::fs::read_to_string(&cell_out).unwrap();
    let row = cell_csv.lines().nth(2).unwrap();
    assert!(csv.lines().any(|l| l == row));

    // trace-check exits zero and reports the deviation
    let output = Command::new(env!("CARGO_BIN_EXE_flatrank"))
        .args(["trace-check"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("max relative deviation"));

    // config errors exit nonzero
    let status = Command::new(env!("CARGO_BIN_EXE_flatrank"))
        .args(["phase", "--config", "/nonexistent/x.toml"])
        .status()
        .unwrap();
    assert!(!status.success());
}
