//! Rank-controlled robust PCA: Frobenius-regularised bilinear factors fitted by
//! alternating ridge updates, plus a convex nuclear-norm reference solver and
//! the optimality certificate linking the two.

use nalgebra::{DMatrix, DVector};

use crate::batch::{shrink, Thresholds};
use crate::error::{dims, invalid, Error, Result};
use crate::linalg::{center_rows, column_means, ridge_right_solve, spectral_norm, svd};
use crate::model::{scaled_penalty, DataMatrix, OutlierMatrix, RegularizerKind, SolverOptions};
use crate::rng::random_scores;

/// Whether the rank-controlled fit estimates a mean vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Estimate `m` jointly (the default cycle).
    Estimate,
    /// Pin `m = 0`; the objective then matches the nuclear-norm program.
    None,
}

#[derive(Debug, Clone)]
pub struct RankFit {
    pub mean: DVector<f64>,
    /// `p x qbar`, not orthonormal.
    pub u: DMatrix<f64>,
    /// `N x qbar`.
    pub s: DMatrix<f64>,
    pub outliers: OutlierMatrix,
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    pub lambda_star: f64,
    pub lambda2: f64,
}

impl RankFit {
    /// `S U'` (without the mean).
    pub fn low_rank(&self) -> DMatrix<f64> {
        &self.s * self.u.transpose()
    }

    /// `X - 1m' - SU' - O`.
    pub fn residual(&self, x: &DataMatrix) -> DMatrix<f64> {
        center_rows(x.values(), &self.mean) - self.low_rank() - self.outliers.values()
    }
}

/// Noise-calibrated tuning `(lambda_star, lambda2) = (2 sqrt(2 N s2), 2 sqrt(2 s2))`.
pub fn noise_presets(n: usize, sigma2: f64) -> (f64, f64) {
    (2.0 * (2.0 * n as f64 * sigma2).sqrt(), 2.0 * (2.0 * sigma2).sqrt())
}

/// `||X - 1m' - SU' - O||_F^2 + (lambda_star/2)(||U||_F^2 + ||S||_F^2) + lambda2 pen(O)`.
#[allow(clippy::too_many_arguments)]
pub fn rank_objective(
    x: &DataMatrix,
    mean: &DVector<f64>,
    u: &DMatrix<f64>,
    s: &DMatrix<f64>,
    o: &DMatrix<f64>,
    lambda_star: f64,
    lambda2: f64,
    kind: RegularizerKind,
) -> f64 {
    let r = center_rows(x.values(), mean) - s * u.transpose() - o;
    r.norm_squared()
        + 0.5 * lambda_star * (u.norm_squared() + s.norm_squared())
        + scaled_penalty(lambda2, kind.penalty(o))
}

fn degenerate() -> Error {
    Error::Numerical("ridge system is singular (lambda_star = 0 with rank-deficient factors)".into())
}

/// Alternating ridge updates for the Frobenius-regularised bilinear model.
///
/// `S(0)` is drawn from `opts.seed` (normal entries scaled by `1/sqrt(qbar)`),
/// `O(0) = 0`.
pub fn fit_rank(
    x: &DataMatrix,
    qbar: usize,
    lambda_star: f64,
    lambda2: f64,
    kind: RegularizerKind,
    opts: &SolverOptions,
    centering: Centering,
) -> Result<RankFit> {
    let s0 = random_scores(x.n_rows(), qbar, opts.seed);
    fit_rank_from(x, s0, lambda_star, lambda2, kind, opts, centering)
}

/// [`fit_rank`] from a caller-supplied `S(0)`.
pub fn fit_rank_from(
    x: &DataMatrix,
    s0: DMatrix<f64>,
    lambda_star: f64,
    lambda2: f64,
    kind: RegularizerKind,
    opts: &SolverOptions,
    centering: Centering,
) -> Result<RankFit> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let qbar = s0.ncols();
    if qbar == 0 || qbar > n.min(p) {
        return Err(invalid(format!("qbar = {qbar} outside 1..={}", n.min(p))));
    }
    if s0.nrows() != n {
        return Err(dims("S(0) must have one row per observation"));
    }
    if !(lambda_star >= 0.0) || !(lambda2 >= 0.0) {
        return Err(invalid("regularisation weights must be non-negative"));
    }
    opts.validate()?;
    let xv = x.values();
    let ridge = lambda_star / 2.0;
    let th = Thresholds::Uniform(lambda2 / 2.0);
    let mut s = s0;
    let mut u = DMatrix::zeros(p, qbar);
    let mut o = DMatrix::zeros(n, p);
    let mut mean = DVector::zeros(p);
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut objective = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;

    for _ in 0..opts.max_iters {
        iters += 1;
        let compensated = xv - &o;
        if centering == Centering::Estimate {
            mean = column_means(&compensated);
        }
        let xo = center_rows(&compensated, &mean);
        u = ridge_right_solve(&(xo.transpose() * &s), &(s.transpose() * &s), ridge).ok_or_else(degenerate)?;
        s = ridge_right_solve(&(&xo * &u), &(u.transpose() * &u), ridge).ok_or_else(degenerate)?;
        let resid = xo + &o - &s * u.transpose();
        o = shrink(&resid, &th, kind);
        objective = (resid - &o).norm_squared()
            + 0.5 * lambda_star * (u.norm_squared() + s.norm_squared())
            + scaled_penalty(lambda2, kind.penalty(&o));
        if opts.record_trace {
            trace.push(objective);
        }
        if prev.is_finite() && opts.converged(prev, objective) {
            converged = true;
            break;
        }
        prev = objective;
    }

    Ok(RankFit {
        mean,
        u,
        s,
        outliers: OutlierMatrix::new(o, kind),
        objective_trace: trace,
        objective,
        iters,
        converged,
        lambda_star,
        lambda2,
    })
}

/// Result of the spectral-norm optimality test.
#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub holds: bool,
    /// `lambda_star / 2 - ||X - 1m' - SU' - O||_2`.
    pub gap: f64,
    pub residual_norm: f64,
}

/// A stationary point whose residual has spectral norm at most
/// `lambda_star / 2` solves the nuclear-norm program globally.
pub fn check_certificate(x: &DataMatrix, fit: &RankFit, lambda_star: f64) -> Certificate {
    let residual_norm = spectral_norm(&fit.residual(x));
    let gap = lambda_star / 2.0 - residual_norm;
    Certificate {
        holds: gap >= 0.0,
        gap,
        residual_norm,
    }
}

/// `(||U*||_F^2 + ||S*||_F^2)/2 - ||L||_*` for the SVD-balanced factors
/// `U* = V sqrt(Sigma)`, `S* = U_L sqrt(Sigma)`.
pub fn nuclear_variational_gap(l: &DMatrix<f64>) -> Result<f64> {
    let (s_star, u_star) = balanced_factors(l)?;
    let nuclear: f64 = svd(l)?.values.iter().sum();
    Ok(0.5 * (u_star.norm_squared() + s_star.norm_squared()) - nuclear)
}

/// Balanced factorisation `L = S* U*'` with `S* = U_L sqrt(Sigma)` and
/// `U* = V_L sqrt(Sigma)`.
pub fn balanced_factors(l: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = svd(l)?;
    let root = DMatrix::from_diagonal(&d.values.map(f64::sqrt));
    Ok((&d.left * &root, &d.right * &root))
}

pub fn nuclear_norm(l: &DMatrix<f64>) -> Result<f64> {
    Ok(svd(l)?.values.iter().sum())
}

/// Singular-value soft-thresholding.
pub fn svt(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let d = svd(a)?;
    let kept: Vec<usize> = (0..d.values.len()).filter(|&i| d.values[i] > tau).collect();
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for i in kept {
        out += (d.values[i] - tau) * d.left.column(i) * d.right.column(i).transpose();
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SpcpOptions {
    pub max_iters: usize,
    /// Target for the scaled fixed-point residual.
    pub tol: f64,
    /// Subtract column means before solving (oracle-only convenience).
    pub precenter: bool,
}

impl Default for SpcpOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-8,
            precenter: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpcpSolution {
    pub l: DMatrix<f64>,
    pub o: DMatrix<f64>,
    pub objective: f64,
    /// `||T(L) - L||_F / max(1, ||X||_F)` for the proximal-gradient map `T`.
    pub dual_residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// Column means removed when `precenter` was set.
    pub center: Option<DVector<f64>>,
}

/// `||X - L - O||_F^2 + lambda_star ||L||_* + lambda2 pen(O)`.
pub fn spcp_objective(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    o: &DMatrix<f64>,
    lambda_star: f64,
    lambda2: f64,
    kind: RegularizerKind,
) -> Result<f64> {
    Ok((x - l - o).norm_squared() + lambda_star * nuclear_norm(l)? + scaled_penalty(lambda2, kind.penalty(o)))
}

/// Reference solver for the convex low-rank-plus-sparse program.
///
/// Minimising out `O` leaves a Huber-type smooth term in `L` whose gradient is
/// 2-Lipschitz; accelerated proximal gradient with step `1/2` then alternates
/// singular-value thresholding at `lambda_star/2` with the outlier shrinkage.
/// Momentum restarts whenever the objective increases.
pub fn spcp_reference(
    x: &DataMatrix,
    lambda_star: f64,
    lambda2: f64,
    kind: RegularizerKind,
    opts: &SpcpOptions,
) -> Result<SpcpSolution> {
    if !(lambda_star > 0.0) || !(lambda2 > 0.0) {
        return Err(invalid("spcp needs positive lambda_star and lambda2"));
    }
    let (xc, center) = if opts.precenter {
        let m = column_means(x.values());
        (center_rows(x.values(), &m), Some(m))
    } else {
        (x.values().clone(), None)
    };
    let th = Thresholds::Uniform(lambda2 / 2.0);
    let scale = xc.norm().max(1.0);
    let outliers_for = |l: &DMatrix<f64>| shrink(&(&xc - l), &th, kind);
    let value =
        |l: &DMatrix<f64>, o: &DMatrix<f64>| -> Result<f64> { spcp_objective(&xc, l, o, lambda_star, lambda2, kind) };
    // Proximal-gradient map: L+ = SVT(X - O*(Y), lambda_star / 2).
    let step = |y: &DMatrix<f64>| -> Result<DMatrix<f64>> { svt(&(&xc - outliers_for(y)), lambda_star / 2.0) };

    let mut l = DMatrix::zeros(xc.nrows(), xc.ncols());
    let mut l_prev = l.clone();
    let mut f_prev = value(&l, &outliers_for(&l))?;
    let mut t = 1.0f64;
    let mut iters = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;

    while iters < opts.max_iters {
        iters += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let y = &l + (&l - &l_prev) * ((t - 1.0) / t_next);
        let l_new = step(&y)?;
        let f_new = value(&l_new, &outliers_for(&l_new))?;
        if f_new > f_prev {
            // Restart momentum from the current point.
            t = 1.0;
            l_prev = l.clone();
            continue;
        }
        l_prev = std::mem::replace(&mut l, l_new);
        f_prev = f_new;
        t = t_next;
        if iters % 10 == 0 || iters + 1 >= opts.max_iters {
            let tl = step(&l)?;
            residual = (&tl - &l).norm() / scale;
            if residual <= opts.tol {
                l = tl;
                converged = true;
                break;
            }
        }
    }
    let o = outliers_for(&l);
    let objective = value(&l, &o)?;
    if !converged {
        residual = (step(&l)? - &l).norm() / scale;
        converged = residual <= opts.tol;
    }
    Ok(SpcpSolution {
        l,
        o,
        objective,
        dual_residual: residual,
        iters,
        converged,
        center,
    })
}
