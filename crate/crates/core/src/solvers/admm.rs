//! The splitting iterations behind each program family.
//!
//! All four loops are scaled-dual ADMM with residual-based stopping
//! (`r ≤ √n·ε_abs + ε_rel·max(‖X‖,‖Z‖)`, `s ≤ √n·ε_abs + ε_rel·ρ‖U‖`)
//! and optional residual balancing of the penalty.

use super::rescaled::RescaledMap;
use super::{SolverConfig, SolverReport};
use crate::ensembles::SensingOperator;
use crate::numlin::{entrywise_l1, nuclear_norm, project_l1_ball, prox_power, svt, to_f64};
use crate::rescaling::RescalingPair;
use crate::{scalar, DMat, DVec, Error, Result, Scalar};

const RHO_MIN: f64 = 1e-8;
const RHO_MAX: f64 = 1e8;

/// Iterations between residual-balancing checks. Adapting on every
/// iteration lets the penalty flip-flop once both residuals are tiny,
/// which stalls convergence; a sparse cadence keeps the balancing
/// benefit without the oscillation.
const ADAPT_CADENCE: usize = 50;

struct Penalty<T: Scalar> {
    rho: T,
    adaptive: bool,
    ratio: T,
    factor: T,
    countdown: usize,
}

impl<T: Scalar> Penalty<T> {
    fn new(cfg: &SolverConfig<T>) -> Self {
        Self {
            rho: cfg.rho,
            adaptive: cfg.adaptive_penalty,
            ratio: cfg.balance_ratio,
            factor: cfg.balance_factor,
            countdown: ADAPT_CADENCE,
        }
    }

    /// Residual balancing; returns the factor by which the scaled duals
    /// must be divided (1 when unchanged).
    fn adapt(&mut self, r: T, s: T) -> T {
        if !self.adaptive {
            return T::one();
        }
        if self.countdown > 1 {
            self.countdown -= 1;
            return T::one();
        }
        self.countdown = ADAPT_CADENCE;
        let lo = scalar::<T>(RHO_MIN);
        let hi = scalar::<T>(RHO_MAX);
        if r > self.ratio * s && self.rho * self.factor <= hi {
            self.rho *= self.factor;
            self.factor
        } else if s > self.ratio * r && self.rho / self.factor >= lo {
            self.rho /= self.factor;
            T::one() / self.factor
        } else {
            T::one()
        }
    }
}

fn tolerances<T: Scalar>(
    cfg: &SolverConfig<T>,
    sqrt_n: T,
    x_scale: T,
    dual_scale: T,
) -> (T, T) {
    (
        sqrt_n * cfg.abs_tol + cfg.rel_tol * x_scale,
        sqrt_n * cfg.abs_tol + cfg.rel_tol * dual_scale,
    )
}

fn symmetrize<T: Scalar>(x: &DMat<T>) -> DMat<T> {
    (x + x.transpose()) * scalar::<T>(0.5)
}

/// Least-squares-scaled starting point `c·ℬ*(b)` with `c` chosen so the
/// first constraint residual is O(1).
fn default_init<T: Scalar>(map: &RescaledMap<T>, b: &DVec<T>) -> DMat<T> {
    let atb = map.adjoint(b);
    let batb = map.forward(&atb);
    let denom = batb.norm_squared();
    if denom > T::zero() {
        &atb * (b.dot(&batb) / denom)
    } else {
        atb
    }
}

/// Two-block ADMM for `min ‖X‖_*` s.t. `ℬ(X) = b`: SVT on one block,
/// affine projection on the other. `symmetric` keeps iterates in the
/// symmetric subspace (measurement matrices are symmetrized and each
/// X-iterate is re-symmetrized as a round-off guard).
pub(super) fn nuclear_equality<T: Scalar>(
    op: &SensingOperator<T>,
    pair: &RescalingPair<T>,
    b: &DVec<T>,
    cfg: &SolverConfig<T>,
    init: Option<&DMat<T>>,
    symmetric: bool,
) -> Result<SolverReport<T>> {
    let map = RescaledMap::new(op, pair, symmetric)?;
    let proj = map.affine_projector()?;
    let n = op.d1() * op.d2();
    let sqrt_n = scalar::<T>((n as f64).sqrt());

    let mut x = match init {
        Some(x0) => {
            if x0.nrows() != op.d1() || x0.ncols() != op.d2() {
                return Err(Error::DimensionMismatch("bad init shape".into()));
            }
            if symmetric {
                symmetrize(x0)
            } else {
                x0.clone()
            }
        }
        None => default_init(&map, b),
    };
    let mut z = proj.project(&map, &x, b);
    if symmetric {
        z = symmetrize(&z);
    }
    let mut u = DMat::<T>::zeros(op.d1(), op.d2());
    let mut penalty = Penalty::new(cfg);

    let mut iterations = cfg.max_iter;
    let mut converged = false;
    let mut primal = T::zero();
    let mut dual = T::zero();
    let mut history = Vec::new();

    for it in 0..cfg.max_iter {
        x = svt(&(&z - &u), T::one() / penalty.rho)?;
        if symmetric {
            x = symmetrize(&x);
        }
        let v = &x + &u;
        let mut z_new = proj.project(&map, &v, b);
        if symmetric {
            z_new = symmetrize(&z_new);
        }
        primal = (&x - &z_new).norm();
        dual = penalty.rho * (&z_new - &z).norm();
        u += &x - &z_new;
        z = z_new;
        if cfg.record_history {
            history.push(to_f64(primal + dual));
        }
        let (eps_pri, eps_dual) =
            tolerances(cfg, sqrt_n, x.norm().max(z.norm()), penalty.rho * u.norm());
        if primal <= eps_pri && dual <= eps_dual {
            iterations = it + 1;
            converged = true;
            break;
        }
        let shrink = penalty.adapt(primal, dual);
        if shrink != T::one() {
            u /= shrink;
        }
    }

    let feasibility_gap = (map.forward(&z) - b).norm();
    Ok(SolverReport {
        objective: nuclear_norm(&z),
        x_hat: z,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        pseudo_projection: proj.is_pseudo(),
        feasibility_gap,
        residual_history: history,
        certificate: None,
    })
}

fn project_l2_ball<T: Scalar>(y: &DVec<T>, center: &DVec<T>, radius: T) -> DVec<T> {
    let diff = y - center;
    let norm = diff.norm();
    if norm <= radius {
        y.clone()
    } else if norm == T::zero() {
        center.clone()
    } else {
        center + diff * (radius / norm)
    }
}

/// Three-block ADMM for `min ‖X‖_*` s.t. `‖ℬ(X) − b‖₂ ≤ radius`, with the
/// auxiliary measurement vector `w = ℬ(Z)` projected onto the ball.
pub(super) fn nuclear_ball<T: Scalar>(
    op: &SensingOperator<T>,
    pair: &RescalingPair<T>,
    b: &DVec<T>,
    radius: T,
    cfg: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    let map = RescaledMap::new(op, pair, false)?;
    let ridge = map.ridge_factor()?;
    let n = op.d1() * op.d2() + op.measurements();
    let sqrt_n = scalar::<T>((n as f64).sqrt());

    let mut z = default_init(&map, b);
    let mut x;
    let mut w;
    let mut ux = DMat::<T>::zeros(op.d1(), op.d2());
    let mut uw = DVec::<T>::zeros(op.measurements());
    let mut penalty = Penalty::new(cfg);

    let mut iterations = cfg.max_iter;
    let mut converged = false;
    let mut primal = T::zero();
    let mut dual = T::zero();
    let mut history = Vec::new();

    for it in 0..cfg.max_iter {
        x = svt(&(&z - &ux), T::one() / penalty.rho)?;
        let bz = map.forward(&z);
        w = project_l2_ball(&(&bz - &uw), b, radius);
        let rhs = &x + &ux + map.adjoint(&(&w + &uw));
        let z_new = ridge.solve_ridge(&map, &rhs);
        let bz_new = map.forward(&z_new);

        let dz = &z_new - &z;
        primal = ((&x - &z_new).norm_squared() + (&w - &bz_new).norm_squared()).sqrt();
        dual = penalty.rho * (dz.norm_squared() + map.forward(&dz).norm_squared()).sqrt();
        ux += &x - &z_new;
        uw += &w - &bz_new;
        z = z_new;
        if cfg.record_history {
            history.push(to_f64(primal + dual));
        }
        let scale = x.norm().max(z.norm()).max(w.norm());
        let dual_scale = penalty.rho * (ux.norm_squared() + uw.norm_squared()).sqrt();
        let (eps_pri, eps_dual) = tolerances(cfg, sqrt_n, scale, dual_scale);
        if primal <= eps_pri && dual <= eps_dual {
            iterations = it + 1;
            converged = true;
            break;
        }
        let shrink = penalty.adapt(primal, dual);
        if shrink != T::one() {
            ux /= shrink;
            uw /= shrink;
        }
    }

    let slack = (map.forward(&z) - b).norm() - radius;
    Ok(SolverReport {
        objective: nuclear_norm(&z),
        feasibility_gap: slack.max(T::zero()),
        x_hat: z,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        pseudo_projection: false,
        residual_history: history,
        certificate: None,
    })
}

/// ADMM for `min ‖X‖_*` s.t. `Y − X ∈ {‖S‖₁ ≤ radius}`. The zero-radius
/// case returns `Y` directly: the feasible set is the single point `{Y}`.
pub(super) fn robust_pca<T: Scalar>(
    y: &DMat<T>,
    radius: T,
    cfg: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    if radius == T::zero() {
        return Ok(SolverReport {
            objective: nuclear_norm(y),
            x_hat: y.clone(),
            iterations: 0,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            converged: true,
            pseudo_projection: false,
            feasibility_gap: T::zero(),
            residual_history: Vec::new(),
            certificate: None,
        });
    }
    let (d1, d2) = (y.nrows(), y.ncols());
    let sqrt_n = scalar::<T>(((d1 * d2) as f64).sqrt());

    let mut x = DMat::<T>::zeros(d1, d2);
    let mut s = DMat::<T>::zeros(d1, d2);
    let mut u = DMat::<T>::zeros(d1, d2);
    let mut penalty = Penalty::new(cfg);

    let mut iterations = cfg.max_iter;
    let mut converged = false;
    let mut primal = T::zero();
    let mut dual = T::zero();
    let mut history = Vec::new();

    for it in 0..cfg.max_iter {
        x = svt(&(y - &s - &u), T::one() / penalty.rho)?;
        let s_new = project_l1_ball(&(y - &x - &u), radius)?;
        primal = (&x + &s_new - y).norm();
        dual = penalty.rho * (&s_new - &s).norm();
        u += &x + &s_new - y;
        s = s_new;
        if cfg.record_history {
            history.push(to_f64(primal + dual));
        }
        let (eps_pri, eps_dual) = tolerances(
            cfg,
            sqrt_n,
            x.norm().max(s.norm()).max(y.norm()),
            penalty.rho * u.norm(),
        );
        if primal <= eps_pri && dual <= eps_dual {
            iterations = it + 1;
            converged = true;
            break;
        }
        let shrink = penalty.adapt(primal, dual);
        if shrink != T::one() {
            u /= shrink;
        }
    }

    let slack = entrywise_l1(&(y - &x)) - radius;
    Ok(SolverReport {
        objective: nuclear_norm(&x),
        feasibility_gap: slack.max(T::zero()),
        x_hat: x,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        pseudo_projection: false,
        residual_history: history,
        certificate: None,
    })
}

/// ADMM for `min Σ wⱼ|xⱼ|^p` s.t. `Ax = b`: separable power prox on one
/// block, affine projection through a Cholesky factor of `AAᵀ` on the
/// other.
pub(super) fn weighted_lp<T: Scalar>(
    op: &SensingOperator<T>,
    weights: &DVec<T>,
    power: T,
    b: &DVec<T>,
    cfg: &SolverConfig<T>,
) -> Result<SolverReport<T>> {
    let a = op
        .sensing_matrix()
        .expect("weighted-lp specs carry a vector-sensing operator");
    let d = a.ncols();
    let sqrt_d = scalar::<T>((d as f64).sqrt());
    let chol = nalgebra::Cholesky::new(a * a.transpose()).ok_or_else(|| {
        Error::InvalidParameter("sensing matrix must have full row rank".into())
    })?;
    let project = |v: &DVec<T>| -> DVec<T> {
        let residual = a * v - b;
        v - a.transpose() * chol.solve(&residual)
    };

    let mut z = project(&DVec::zeros(d));
    let mut x = z.clone();
    let mut u = DVec::<T>::zeros(d);
    let mut penalty = Penalty::new(cfg);

    let mut iterations = cfg.max_iter;
    let mut converged = false;
    let mut primal = T::zero();
    let mut dual = T::zero();
    let mut history = Vec::new();

    for it in 0..cfg.max_iter {
        let step = T::one() / penalty.rho;
        for j in 0..d {
            x[j] = prox_power(z[j] - u[j], weights[j], power, step)?;
        }
        let z_new = project(&(&x + &u));
        primal = (&x - &z_new).norm();
        dual = penalty.rho * (&z_new - &z).norm();
        u += &x - &z_new;
        z = z_new;
        if cfg.record_history {
            history.push(to_f64(primal + dual));
        }
        let (eps_pri, eps_dual) =
            tolerances(cfg, sqrt_d, x.norm().max(z.norm()), penalty.rho * u.norm());
        if primal <= eps_pri && dual <= eps_dual {
            iterations = it + 1;
            converged = true;
            break;
        }
        let shrink = penalty.adapt(primal, dual);
        if shrink != T::one() {
            u /= shrink;
        }
    }

    let objective = (0..d).fold(T::zero(), |acc, j| {
        acc + weights[j] * z[j].abs().powf(power)
    });
    let feasibility_gap = (a * &z - b).norm();
    Ok(SolverReport {
        objective,
        x_hat: DMat::from_column_slice(d, 1, z.as_slice()),
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        pseudo_projection: false,
        feasibility_gap,
        residual_history: history,
        certificate: None,
    })
}
