//! Alternating-minimisation robust PCA with an orthonormal subspace, and its
//! iteratively reweighted refinement.

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, invalid, Result};
use crate::linalg::{center_rows, column_means, procrustes_rotation, row_norms};
use crate::model::{scaled_penalty, DataMatrix, FactorModel, OutlierMatrix, RegularizerKind, SolverOptions};
use crate::prox::{huber_from_norm, soft};

#[derive(Debug, Clone)]
pub struct BatchFit {
    pub model: FactorModel,
    pub outliers: OutlierMatrix,
    /// Objective after every full update cycle (empty unless tracing).
    pub objective_trace: Vec<f64>,
    /// Objective at the returned iterate.
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    pub lambda2: f64,
}

impl BatchFit {
    /// Estimated low-rank component `1 m' + S U'`.
    pub fn low_rank(&self) -> DMatrix<f64> {
        self.model.low_rank()
    }
}

/// Per-cycle shrinkage levels. The penalty weight matching a threshold `tau`
/// is `2 tau`.
#[derive(Debug, Clone)]
pub(crate) enum Thresholds {
    Uniform(f64),
    PerRow(Vec<f64>),
    PerEntry(DMatrix<f64>),
}

impl Thresholds {
    fn validate(&self, n: usize, p: usize) -> Result<()> {
        match self {
            Thresholds::Uniform(_) => Ok(()),
            Thresholds::PerRow(t) if t.len() == n => Ok(()),
            Thresholds::PerEntry(t) if t.shape() == (n, p) => Ok(()),
            _ => Err(dims("threshold shape does not match data")),
        }
    }
}

/// Shrink a residual matrix row- or entry-wise.
pub(crate) fn shrink(r: &DMatrix<f64>, th: &Thresholds, kind: RegularizerKind) -> DMatrix<f64> {
    let (n, p) = r.shape();
    match kind {
        RegularizerKind::RowL2 => {
            let norms = row_norms(r);
            let mut out = DMatrix::zeros(n, p);
            for i in 0..n {
                let tau = match th {
                    Thresholds::Uniform(t) => *t,
                    Thresholds::PerRow(t) => t[i],
                    // Entry thresholds under a row penalty: use the row's smallest.
                    Thresholds::PerEntry(t) => t.row(i).min(),
                };
                let nrm = norms[i];
                if nrm > tau && nrm > 0.0 {
                    let scale = (nrm - tau) / nrm;
                    for j in 0..p {
                        out[(i, j)] = r[(i, j)] * scale;
                    }
                }
            }
            out
        }
        RegularizerKind::EntryL1 => DMatrix::from_fn(n, p, |i, j| {
            let tau = match th {
                Thresholds::Uniform(t) => *t,
                Thresholds::PerRow(t) => t[i],
                Thresholds::PerEntry(t) => t[(i, j)],
            };
            soft(r[(i, j)], tau)
        }),
    }
}

/// `sum 2 tau |o|` under the given thresholds.
pub(crate) fn weighted_penalty(o: &DMatrix<f64>, th: &Thresholds, kind: RegularizerKind) -> f64 {
    match (kind, th) {
        (_, Thresholds::Uniform(t)) => scaled_penalty(2.0 * t, kind.penalty(o)),
        (RegularizerKind::RowL2, Thresholds::PerRow(t)) => row_norms(o)
            .iter()
            .zip(t)
            .map(|(nrm, tau)| scaled_penalty(2.0 * tau, *nrm))
            .sum(),
        (RegularizerKind::RowL2, Thresholds::PerEntry(t)) => row_norms(o)
            .iter()
            .enumerate()
            .map(|(i, nrm)| scaled_penalty(2.0 * t.row(i).min(), *nrm))
            .sum(),
        (RegularizerKind::EntryL1, Thresholds::PerRow(t)) => o
            .row_iter()
            .zip(t)
            .map(|(row, tau)| scaled_penalty(2.0 * tau, row.iter().map(|v| v.abs()).sum()))
            .sum(),
        (RegularizerKind::EntryL1, Thresholds::PerEntry(t)) => o
            .iter()
            .zip(t.iter())
            .map(|(v, tau)| scaled_penalty(2.0 * tau, v.abs()))
            .sum(),
    }
}

pub(crate) struct Start {
    pub subspace: DMatrix<f64>,
    pub outliers: DMatrix<f64>,
}

/// The alternating cycle `m -> S -> U -> O`, each block minimised exactly.
pub(crate) fn am_loop(
    x: &DataMatrix,
    q: usize,
    th: &Thresholds,
    kind: RegularizerKind,
    opts: &SolverOptions,
    start: Start,
    lambda2: f64,
) -> Result<BatchFit> {
    let xv = x.values();
    let (n, p) = xv.shape();
    th.validate(n, p)?;
    let Start {
        mut subspace,
        outliers: mut o,
    } = start;
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;
    let mut mean = DVector::zeros(p);
    let mut scores = DMatrix::zeros(n, q);
    let mut objective = f64::INFINITY;

    for _ in 0..opts.max_iters {
        iters += 1;
        let compensated = xv - &o;
        mean = column_means(&compensated);
        let xo = center_rows(&compensated, &mean);
        scores = &xo * &subspace;
        subspace = procrustes_rotation(&(xo.transpose() * &scores))?;
        // X - 1m' - S U' = X_o + O - S U'
        let resid = xo + &o - &scores * subspace.transpose();
        o = shrink(&resid, th, kind);
        objective = (resid - &o).norm_squared() + weighted_penalty(&o, th, kind);
        if opts.record_trace {
            trace.push(objective);
        }
        if prev.is_finite() && opts.converged(prev, objective) {
            converged = true;
            break;
        }
        prev = objective;
    }

    Ok(BatchFit {
        model: FactorModel {
            mean,
            subspace,
            scores,
            orthonormal: true,
        },
        outliers: OutlierMatrix::new(o, kind),
        objective_trace: trace,
        objective,
        iters,
        converged,
        lambda2,
    })
}

fn check_rank(x: &DataMatrix, q: usize) -> Result<()> {
    let lim = x.n_rows().min(x.n_cols());
    if q == 0 || q > lim {
        return Err(invalid(format!("q = {q} outside 1..={lim}")));
    }
    Ok(())
}

/// Fit the robust PCA model for a fixed `lambda2`.
///
/// Without `init`, starts from `U = I_p(:, 1:q)` and `O = 0`; with `init`, the
/// iteration resumes from its subspace and outliers (warm start).
pub fn fit_batch(
    x: &DataMatrix,
    q: usize,
    lambda2: f64,
    kind: RegularizerKind,
    opts: &SolverOptions,
    init: Option<&BatchFit>,
) -> Result<BatchFit> {
    check_rank(x, q)?;
    opts.validate()?;
    if !(lambda2 >= 0.0) {
        return Err(invalid("lambda2 must be non-negative"));
    }
    let (n, p) = (x.n_rows(), x.n_cols());
    let start = match init {
        Some(fit) => {
            if fit.model.subspace.shape() != (p, q) || fit.outliers.values().shape() != (n, p) {
                return Err(dims("warm start does not match data / rank"));
            }
            Start {
                subspace: fit.model.subspace.clone(),
                outliers: fit.outliers.values().clone(),
            }
        }
        None => Start {
            subspace: DMatrix::identity(p, q),
            outliers: DMatrix::zeros(n, p),
        },
    };
    am_loop(x, q, &Thresholds::Uniform(lambda2 / 2.0), kind, opts, start, lambda2)
}

/// Default `lambda0` for the reweighted refinement: `lambda2 * delta`, which
/// keeps the first-round threshold of rows with `o_n = 0` at `lambda2 / 2`.
pub fn default_lambda0(lambda2: f64, delta: f64) -> f64 {
    lambda2 * delta
}

/// Reweighting thresholds `(lambda0 / 2) / (|o| + delta)` built from the
/// current outliers (row norms or entry magnitudes, matching `kind`).
pub fn reweighting_thresholds(outliers: &OutlierMatrix, lambda0: f64, delta: f64) -> DMatrix<f64> {
    let o = outliers.values();
    match outliers.kind() {
        RegularizerKind::RowL2 => {
            let norms = row_norms(o);
            DMatrix::from_fn(o.nrows(), o.ncols(), |i, _| 0.5 * lambda0 / (norms[i] + delta))
        }
        RegularizerKind::EntryL1 => o.map(|v| 0.5 * lambda0 / (v.abs() + delta)),
    }
}

/// One majorisation round: freeze the weights at `fit`, then run the
/// alternating cycle with the weighted thresholds until it converges.
pub fn reweighted_round(
    x: &DataMatrix,
    fit: &BatchFit,
    lambda0: f64,
    delta: f64,
    opts: &SolverOptions,
) -> Result<BatchFit> {
    let kind = fit.outliers.kind();
    let t = reweighting_thresholds(&fit.outliers, lambda0, delta);
    let th = match kind {
        RegularizerKind::RowL2 => Thresholds::PerRow(t.column(0).iter().copied().collect()),
        RegularizerKind::EntryL1 => Thresholds::PerEntry(t),
    };
    let start = Start {
        subspace: fit.model.subspace.clone(),
        outliers: fit.outliers.values().clone(),
    };
    am_loop(x, fit.model.q(), &th, kind, opts, start, fit.lambda2)
}

/// Bias-reducing refinement by iteratively reweighted shrinkage.
pub fn refine_reweighted(
    x: &DataMatrix,
    fit: &BatchFit,
    lambda0: f64,
    delta: f64,
    n_rounds: usize,
    opts: &SolverOptions,
) -> Result<BatchFit> {
    if !(delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    if n_rounds == 0 {
        return Err(invalid("n_rounds must be at least 1"));
    }
    if !(lambda0 >= 0.0) {
        return Err(invalid("lambda0 must be non-negative"));
    }
    opts.validate()?;
    let (n, p) = (x.n_rows(), x.n_cols());
    if fit.outliers.values().shape() != (n, p) {
        return Err(dims("fit does not match data"));
    }
    let mut cur = fit.clone();
    for _ in 0..n_rounds {
        cur = reweighted_round(x, &cur, lambda0, delta, opts)?;
    }
    Ok(cur)
}

/// `sum_n huber(x_n - m - U s_n, lambda2)`: the cost of the model after
/// minimising out the (row-sparse) outliers.
pub fn huber_objective(x: &DataMatrix, model: &FactorModel, lambda2: f64) -> Result<f64> {
    let zero = OutlierMatrix::zeros(x.n_rows(), x.n_cols(), RegularizerKind::RowL2);
    let r = crate::model::residual_matrix(x, model, &zero)?;
    Ok(row_norms(&r).iter().map(|nrm| huber_from_norm(*nrm, lambda2)).sum())
}

/// Closed-form optimal outliers for a fixed model: shrink the residuals at
/// `lambda2 / 2`.
pub fn optimal_outliers(
    x: &DataMatrix,
    model: &FactorModel,
    lambda2: f64,
    kind: RegularizerKind,
) -> Result<OutlierMatrix> {
    let zero = OutlierMatrix::zeros(x.n_rows(), x.n_cols(), kind);
    let r = crate::model::residual_matrix(x, model, &zero)?;
    Ok(OutlierMatrix::new(
        shrink(&r, &Thresholds::Uniform(lambda2 / 2.0), kind),
        kind,
    ))
}
