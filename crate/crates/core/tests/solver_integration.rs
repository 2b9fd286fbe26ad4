//! End-to-end checks of the convex-program solvers: hand-computable
//! instances, independent solver oracles, certificates, and the
//! structural identities the splitting methods must preserve.

use flatrank::ensembles::{sample_low_rank, sample_symmetric_signed, SensingOperator};
use flatrank::numlin::{nuclear_norm, Spectrum};
use flatrank::rescaling::{build_rescaling, RescalingPair};
use flatrank::rng;
use flatrank::solvers::{
    solve, solve_nuclear_equality_from, verify_optimality,
    ConvexProgramSpec, SolverConfig,
};
use flatrank::{DMat, DVec};

fn config() -> SolverConfig<f64> {
    SolverConfig::default()
}

fn equality_spec(
    op: &SensingOperator<f64>,
    m_nat: &DMat<f64>,
) -> (ConvexProgramSpec<f64>, DMat<f64>) {
    let pair = build_rescaling(op).unwrap();
    let b = op.forward(m_nat).unwrap();
    let spec = ConvexProgramSpec::nuclear_equality(op.clone(), pair.clone(), b).unwrap();
    let scaled_truth = pair.d1_matrix() * m_nat * pair.d2_matrix();
    (spec, scaled_truth)
}

#[test]
fn zero_rhs_returns_zero() {
    let op = SensingOperator::<f64>::gaussian(5, 5, 10, 1).unwrap();
    let pair = build_rescaling(&op).unwrap();
    let spec = ConvexProgramSpec::nuclear_equality(op, pair, DVec::zeros(10)).unwrap();
    let report = solve(&spec, &config()).unwrap();
    assert!(report.converged);
    assert!(report.x_hat.norm() < 1e-10);
    assert!(report.objective < 1e-10);
}

#[test]
fn identity_operator_pins_the_solution() {
    let truth = sample_low_rank::<f64>(4, 4, 1, true, 7).unwrap();
    let m_nat = truth.as_matrix();
    let op = SensingOperator::<f64>::identity(4, 4).unwrap();
    let (spec, scaled_truth) = equality_spec(&op, &m_nat);
    let report = solve(&spec, &config()).unwrap();
    assert!(report.converged);
    assert!(
        (&report.x_hat - &scaled_truth).norm() < 1e-8,
        "unique feasible point missed by {}",
        (&report.x_hat - &scaled_truth).norm()
    );

    // same point from several random starts
    let mut stream = rng::stream(99, "init", &[]);
    for _ in 0..10 {
        let x0 = rng::normal_matrix::<f64>(&mut stream, 4, 4);
        let restart = solve_nuclear_equality_from(&spec, &config(), Some(&x0)).unwrap();
        assert!((&restart.x_hat - &report.x_hat).norm() < 1e-8);
    }
}

#[test]
fn gaussian_exact_recovery_with_certificate_and_subgradient_oracle() {
    let truth = sample_low_rank::<f64>(8, 8, 1, true, 3).unwrap();
    let m_nat = truth.as_matrix();
    let op = SensingOperator::<f64>::gaussian(8, 8, 48, 5).unwrap();
    let (spec, scaled_truth) = equality_spec(&op, &m_nat);
    let report = solve(&spec, &config()).unwrap();
    assert!(report.converged);

    let pair = build_rescaling(&op).unwrap();
    let recovered = pair.inverse_d1().unwrap() * &report.x_hat * pair.inverse_d2().unwrap();
    assert!(
        (&recovered - &m_nat).norm() < 1e-6,
        "recovery error {}",
        (&recovered - &m_nat).norm()
    );
    assert!((&report.x_hat - &scaled_truth).norm() < 1e-6);

    let cert = verify_optimality(&spec, &report.x_hat).unwrap();
    assert!(cert.tangent_residual < 1e-8, "tangent {}", cert.tangent_residual);
    assert!(cert.offtangent_opnorm <= 1.0 - 1e-3, "offtangent {}", cert.offtangent_opnorm);
    assert!(cert.duality_gap.abs() < 1e-6, "gap {}", cert.duality_gap);

    // negative control: perturbing the solution must break the gap
    let mut stream = rng::stream(17, "control", &[]);
    let noise = rng::normal_matrix::<f64>(&mut stream, 8, 8) * 0.1;
    let bad = &report.x_hat + noise;
    let bad_cert = verify_optimality(&spec, &bad).unwrap();
    assert!(bad_cert.duality_gap > 1e-3, "gap {}", bad_cert.duality_gap);
}

#[test]
fn subgradient_descent_agrees_on_small_instance() {
    // independent route to the same program: projected subgradient
    // descent on the nuclear norm over the affine feasible set
    let truth = sample_low_rank::<f64>(5, 5, 1, true, 11).unwrap();
    let m_nat = truth.as_matrix();
    let op = SensingOperator::<f64>::gaussian(5, 5, 20, 13).unwrap();
    let (spec, _) = equality_spec(&op, &m_nat);
    let report = solve(&spec, &config()).unwrap();

    let pair = build_rescaling(&op).unwrap();
    let b = op.forward(&m_nat).unwrap();
    let inv1 = pair.inverse_d1().unwrap().clone();
    let inv2 = pair.inverse_d2().unwrap().clone();
    // dense rescaled operator rows for the projection
    let mut rows = DMat::<f64>::zeros(20, 25);
    for i in 0..20 {
        let bi = &inv1 * op.measurement_matrix(i) * &inv2;
        for (j, v) in bi.iter().enumerate() {
            rows[(i, j)] = *v;
        }
    }
    let gram_chol = nalgebra::Cholesky::new(&rows * rows.transpose()).unwrap();
    let project = |x: &DMat<f64>| -> DMat<f64> {
        let vx = DVec::from_column_slice(x.as_slice());
        let resid = &rows * &vx - &b;
        let corr = rows.transpose() * gram_chol.solve(&resid);
        DMat::from_column_slice(5, 5, (vx - corr).as_slice())
    };

    let mut x = project(&DMat::zeros(5, 5));
    for t in 1..=20_000usize {
        let spec_x = Spectrum::compute(&x).unwrap();
        let subgrad = &spec_x.left * spec_x.right.transpose();
        let step = 0.3 / (t as f64).sqrt();
        x = project(&(x - subgrad * step));
    }
    assert!(
        (&x - &report.x_hat).norm() < 5e-3,
        "subgradient oracle differs by {}",
        (&x - &report.x_hat).norm()
    );
    assert!(nuclear_norm(&x) >= nuclear_norm(&report.x_hat) - 1e-6);
}

#[test]
fn scale_covariance_of_the_equality_program() {
    let truth = sample_low_rank::<f64>(5, 5, 1, true, 23).unwrap();
    let op = SensingOperator::<f64>::gaussian(5, 5, 15, 29).unwrap();
    let pair = build_rescaling(&op).unwrap();
    let b = op.forward(&truth.as_matrix()).unwrap();
    let base = solve(
        &ConvexProgramSpec::nuclear_equality(op.clone(), pair.clone(), b.clone()).unwrap(),
        &config(),
    )
    .unwrap();
    for c in [2.0, -3.0] {
        let scaled = solve(
            &ConvexProgramSpec::nuclear_equality(op.clone(), pair.clone(), &b * c).unwrap(),
            &config(),
        )
        .unwrap();
        let rel = (&scaled.x_hat - &base.x_hat * c).norm() / base.x_hat.norm().max(1e-300);
        assert!(rel < 1e-8, "c={c}: relative deviation {rel}");
    }
}

#[test]
fn residuals_decay_over_hundred_iteration_windows() {
    let truth = sample_low_rank::<f64>(6, 6, 2, true, 31).unwrap();
    let op = SensingOperator::<f64>::gaussian(6, 6, 30, 37).unwrap();
    let pair = build_rescaling(&op).unwrap();
    let b = op.forward(&truth.as_matrix()).unwrap();
    let spec = ConvexProgramSpec::nuclear_equality(op, pair, b).unwrap();
    let mut cfg = config();
    cfg.record_history = true;
    cfg.adaptive_penalty = false; // fixed penalty isolates the decay
    let report = solve(&spec, &cfg).unwrap();
    let history = &report.residual_history;
    assert!(history.len() > 200, "solver stopped after {}", history.len());
    let window_max: Vec<f64> = history.chunks(100).map(|w| w.iter().fold(0.0f64, |a, &b| a.max(b))).collect();
    for pair in window_max.windows(2) {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-9),
            "window residual grew: {} -> {}",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn ball_with_zero_radius_matches_equality() {
    for seed in 0..20 {
        let truth = sample_low_rank::<f64>(6, 6, 1, true, 100 + seed).unwrap();
        let op = SensingOperator::<f64>::gaussian(6, 6, 30, 200 + seed).unwrap();
        let pair = build_rescaling(&op).unwrap();
        let b = op.forward(&truth.as_matrix()).unwrap();
        let eq = solve(
            &ConvexProgramSpec::nuclear_equality(op.clone(), pair.clone(), b.clone()).unwrap(),
            &config(),
        )
        .unwrap();
        let ball = solve(
            &ConvexProgramSpec::nuclear_ball(op, pair, b, 0.0).unwrap(),
            &config(),
        )
        .unwrap();
        assert!(
            (&eq.x_hat - &ball.x_hat).norm() < 1e-8,
            "seed {seed}: deviation {}",
            (&eq.x_hat - &ball.x_hat).norm()
        );
    }
}

#[test]
fn ball_containing_origin_returns_zero() {
    let truth = sample_low_rank::<f64>(5, 5, 1, true, 41).unwrap();
    let op = SensingOperator::<f64>::gaussian(5, 5, 20, 43).unwrap();
    let pair = build_rescaling(&op).unwrap();
    let b = op.forward(&truth.as_matrix()).unwrap();
    let radius = b.norm() * 1.01;
    let report = solve(
        &ConvexProgramSpec::nuclear_ball(op, pair, b, radius).unwrap(),
        &config(),
    )
    .unwrap();
    assert!(report.x_hat.norm() < 1e-7, "‖X̂‖ = {}", report.x_hat.norm());
    assert!(report.objective < 1e-7);
}

#[test]
fn robust_pca_zero_radius_returns_observation() {
    let mut stream = rng::stream(47, "rpca", &[]);
    let y = rng::normal_matrix::<f64>(&mut stream, 6, 6);
    let spec = ConvexProgramSpec::robust_pca(y.clone(), 0.0).unwrap();
    let report = solve(&spec, &config()).unwrap();
    assert_eq!(report.x_hat, y);

    // rank-1 observation with no corruption: recovered exactly
    let truth = sample_low_rank::<f64>(6, 6, 1, true, 49).unwrap();
    let spec = ConvexProgramSpec::robust_pca(truth.as_matrix(), 0.0).unwrap();
    let report = solve(&spec, &config()).unwrap();
    assert!((&report.x_hat - truth.as_matrix()).norm() < 1e-12);
}

#[test]
fn robust_pca_small_instance_recovers() {
    let truth = sample_low_rank::<f64>(10, 10, 1, true, 53).unwrap();
    let m_nat = truth.as_matrix();
    // exactly one corrupted entry per row and per column
    let mut s_nat = DMat::<f64>::zeros(10, 10);
    let mut stream = rng::stream(59, "sparse", &[]);
    let mut perm: Vec<usize> = (0..10).collect();
    for i in (1..10).rev() {
        let j = (rng::standard_normal::<f64>(&mut stream).abs() * 1e6) as usize % (i + 1);
        perm.swap(i, j);
    }
    for i in 0..10 {
        s_nat[(i, perm[i])] = rng::standard_normal::<f64>(&mut stream);
    }
    let y = &m_nat + &s_nat;
    let radius: f64 = s_nat.iter().map(|v| v.abs()).sum();
    let spec = ConvexProgramSpec::robust_pca(y, radius).unwrap();
    let report = solve(&spec, &config()).unwrap();
    assert!(report.converged);
    assert!(
        (&report.x_hat - &m_nat).norm() < 1e-5,
        "recovery error {}",
        (&report.x_hat - &m_nat).norm()
    );
    assert!(report.feasibility_gap < 1e-8);
}

#[test]
fn symmetric_family_zero_rhs_and_covariance_corner() {
    let op = SensingOperator::<f64>::quadratic(6, 60, 61).unwrap();
    let pair = build_rescaling(&op).unwrap();
    let zero = solve(
        &ConvexProgramSpec::nuclear_symmetric(op.clone(), pair.clone(), DVec::zeros(60)).unwrap(),
        &config(),
    )
    .unwrap();
    assert!(zero.x_hat.norm() < 1e-9);

    // r2 = 0: covariance-style PSD ground truth
    let truth = sample_symmetric_signed::<f64>(6, 1, 0, true, 67).unwrap();
    let m_nat = truth.as_matrix();
    let b = op.forward(&m_nat).unwrap();
    let spec = ConvexProgramSpec::nuclear_symmetric(op.clone(), pair.clone(), b).unwrap();
    let report = solve(&spec, &config()).unwrap();
    assert!(report.converged);
    let scaled_truth = pair.d1_matrix() * &m_nat * pair.d1_matrix();
    assert!(
        (&report.x_hat - &scaled_truth).norm() < 1e-6,
        "error {}",
        (&report.x_hat - &scaled_truth).norm()
    );
    assert!((&report.x_hat - report.x_hat.transpose()).norm() < 1e-10);

    // the split program (same D) lands on the same solution
    let split = op.split_bilinear().unwrap();
    let b_split = split.forward(&m_nat).unwrap();
    let split_spec =
        ConvexProgramSpec::nuclear_symmetric(split, pair.clone(), b_split).unwrap();
    let split_report = solve(&split_spec, &config()).unwrap();
    assert!(
        (&split_report.x_hat - &report.x_hat).norm() < 1e-6,
        "split deviation {}",
        (&split_report.x_hat - &report.x_hat).norm()
    );
}

#[test]
fn weighted_lp_hand_examples() {
    let a = DMat::from_row_slice(1, 2, &[2.0, 1.0]);
    let op = SensingOperator::from_sensing_matrix(a).unwrap();
    let b = DVec::from_column_slice(&[2.0]);
    let weights = DVec::from_element(2, 1.0);

    // p = 1 (depth 2): vertex (1, 0) beats (0, 2)
    let spec = ConvexProgramSpec::weighted_lp(op.clone(), weights.clone(), 1.0, b.clone()).unwrap();
    let report = solve(&spec, &config()).unwrap();
    let x = report.x_vec();
    assert!((x[0] - 1.0).abs() < 1e-8 && x[1].abs() < 1e-8, "x = {x:?}");
    assert!((report.objective - 1.0).abs() < 1e-8);

    // p → 2 limit: least-norm interpolation Aᵀ(AAᵀ)⁻¹b = (0.8, 0.4)
    let spec =
        ConvexProgramSpec::weighted_lp(op.clone(), weights.clone(), 1.999, b.clone()).unwrap();
    let x = solve(&spec, &config()).unwrap().x_vec();
    assert!((x[0] - 0.8).abs() < 1e-2 && (x[1] - 0.4).abs() < 1e-2, "x = {x:?}");

    // p = 4/3 (depth 3): 1-D grid + refinement oracle over x₂ = 2 − 2x₁
    let spec = ConvexProgramSpec::weighted_lp(op, weights, 4.0 / 3.0, b).unwrap();
    let x = solve(&spec, &config()).unwrap().x_vec();
    let objective = |t: f64| t.abs().powf(4.0 / 3.0) + (2.0 - 2.0 * t).abs().powf(4.0 / 3.0);
    let mut best = (f64::INFINITY, 0.0);
    let n = 400_000;
    for i in 0..=n {
        let t = 1.5 * i as f64 / n as f64 - 0.25;
        let val = objective(t);
        if val < best.0 {
            best = (val, t);
        }
    }
    // golden-section refinement around the grid winner
    let (mut lo, mut hi) = (best.1 - 2e-6, best.1 + 2e-6);
    for _ in 0..80 {
        let m1 = lo + 0.381_966_011_250_105 * (hi - lo);
        let m2 = hi - 0.381_966_011_250_105 * (hi - lo);
        if objective(m1) < objective(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t_star = 0.5 * (lo + hi);
    assert!(
        (x[0] - t_star).abs() < 1e-6,
        "x₁ = {} vs oracle {t_star}",
        x[0]
    );
    assert!((x[1] - (2.0 - 2.0 * t_star)).abs() < 2e-6);
}

#[test]
fn weighted_l1_matches_standalone_basis_pursuit() {
    // independent basis-pursuit ADMM written directly against nalgebra
    let mut stream = rng::stream(71, "bp", &[]);
    let a = rng::normal_matrix::<f64>(&mut stream, 10, 30);
    let mut x0 = DVec::<f64>::zeros(30);
    x0[2] = 1.5;
    x0[11] = -0.7;
    x0[24] = 2.2;
    let b = &a * &x0;

    let op = SensingOperator::from_sensing_matrix(a.clone()).unwrap();
    let weights = DVec::from_element(30, 1.0);
    let spec = ConvexProgramSpec::weighted_lp(op, weights, 1.0, b.clone()).unwrap();
    let ours = solve(&spec, &config()).unwrap();

    let chol = nalgebra::Cholesky::new(&a * a.transpose()).unwrap();
    let project = |v: &DVec<f64>| -> DVec<f64> {
        let r = &a * v - &b;
        v - a.transpose() * chol.solve(&r)
    };
    let soft = |v: f64, t: f64| v.signum() * (v.abs() - t).max(0.0);
    let mut z = project(&DVec::zeros(30));
    let mut x = z.clone();
    let mut u = DVec::<f64>::zeros(30);
    let rho = 1.0f64;
    for _ in 0..200_000 {
        for j in 0..30 {
            x[j] = soft(z[j] - u[j], 1.0 / rho);
        }
        let z_new = project(&(&x + &u));
        let r = (&x - &z_new).norm();
        let s = (&z_new - &z).norm() * rho;
        u += &x - &z_new;
        z = z_new;
        if r < 1e-12 && s < 1e-12 {
            break;
        }
    }
    assert!(
        (ours.x_vec() - &z).norm() < 1e-8,
        "deviation {}",
        (ours.x_vec() - &z).norm()
    );
    // this regime recovers the planted sparse vector as well
    assert!((ours.x_vec() - &x0).norm() < 1e-6);
}

#[test]
fn non_convergence_is_reported_not_raised() {
    let truth = sample_low_rank::<f64>(6, 6, 2, true, 73).unwrap();
    let op = SensingOperator::<f64>::gaussian(6, 6, 30, 79).unwrap();
    let pair = build_rescaling(&op).unwrap();
    let b = op.forward(&truth.as_matrix()).unwrap();
    let spec = ConvexProgramSpec::nuclear_equality(op, pair, b).unwrap();
    let mut cfg = config();
    cfg.max_iter = 3;
    let report = solve(&spec, &cfg).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 3);
}

#[test]
fn singular_rescaling_is_refused() {
    let op = SensingOperator::<f64>::gaussian(3, 3, 9, 83).unwrap();
    let singular = RescalingPair::from_matrices(
        DMat::from_diagonal(&DVec::from_column_slice(&[1.0, 1.0, 0.0])),
        DMat::<f64>::identity(3, 3),
    )
    .unwrap();
    assert!(singular.is_singular());
    let spec =
        ConvexProgramSpec::nuclear_equality(op, singular, DVec::zeros(9)).unwrap();
    assert!(matches!(
        solve(&spec, &config()),
        Err(flatrank::Error::SingularRescaling(_))
    ));
}

#[test]
fn spec_construction_rejects_mismatches() {
    let op = SensingOperator::<f64>::quadratic(4, 8, 1).unwrap();
    let pair = build_rescaling(&op).unwrap();
    // quadratic operators must go through the symmetric family
    assert!(ConvexProgramSpec::nuclear_equality(op.clone(), pair.clone(), DVec::zeros(8)).is_err());
    // depth below two is not convex
    let vec_op = SensingOperator::<f64>::hadamard_columns(5, 10, 2).unwrap();
    let vec_pair = build_rescaling(&vec_op).unwrap();
    assert!(
        ConvexProgramSpec::weighted_lp_depth(vec_op.clone(), &vec_pair, 1, DVec::zeros(10))
            .is_err()
    );
    assert!(
        ConvexProgramSpec::weighted_lp_depth(vec_op, &vec_pair, 2, DVec::zeros(10)).is_ok()
    );
    // the symmetric family rejects asymmetric rescalings
    let gauss = SensingOperator::<f64>::gaussian(4, 4, 8, 3).unwrap();
    let gauss_pair = build_rescaling(&gauss).unwrap();
    assert!(ConvexProgramSpec::nuclear_symmetric(
        SensingOperator::<f64>::quadratic(4, 8, 4).unwrap(),
        gauss_pair,
        DVec::zeros(8)
    )
    .is_err());
}
