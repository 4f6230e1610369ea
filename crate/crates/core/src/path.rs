//! Robustification paths over a decreasing `lambda2` grid and the two
//! data-driven rules for picking a point on them.

use nalgebra::DMatrix;

use crate::batch::{fit_batch, BatchFit};
use crate::error::{dims, invalid, Error, Result};
use crate::linalg::{row_norms, sym_inv_sqrt};
use crate::model::{pca, residual_matrix, DataMatrix, OutlierMatrix, RegularizerKind, SolverOptions};

/// Row norms (or entries) below this are numerical dust, not outliers.
pub const SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PathResult {
    /// Strictly decreasing.
    pub grid: Vec<f64>,
    pub fits: Vec<BatchFit>,
    /// `N x G`: `||o_n||` at each grid point.
    pub outlier_norms: DMatrix<f64>,
    pub support_counts: Vec<usize>,
    pub kind: RegularizerKind,
}

impl PathResult {
    fn from_fits(grid: Vec<f64>, fits: Vec<BatchFit>, kind: RegularizerKind) -> Self {
        let n = fits.first().map_or(0, |f| f.outliers.values().nrows());
        let mut outlier_norms = DMatrix::zeros(n, fits.len());
        let mut support_counts = Vec::with_capacity(fits.len());
        for (g, fit) in fits.iter().enumerate() {
            for (i, nrm) in fit.outliers.row_norms().into_iter().enumerate() {
                outlier_norms[(i, g)] = nrm;
            }
            support_counts.push(support_count(&fit.outliers));
        }
        Self {
            grid,
            fits,
            outlier_norms,
            support_counts,
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// `||O||_0` ignoring dust: flagged rows for the row penalty, flagged
/// entries for the entry penalty.
pub fn support_count(o: &OutlierMatrix) -> usize {
    match o.kind() {
        RegularizerKind::RowL2 => o.row_norms().iter().filter(|v| **v >= SUPPORT_EPS).count(),
        RegularizerKind::EntryL1 => o.values().iter().filter(|v| v.abs() >= SUPPORT_EPS).count(),
    }
}

/// `G` log-spaced values from `lambda_max` down to `eps * lambda_max`.
pub fn lambda_grid(lambda_max: f64, eps: f64, g: usize) -> Result<Vec<f64>> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(invalid("lambda_max must be positive and finite"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps must lie in (0, 1)"));
    }
    if g < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    let last = (g - 1) as f64;
    Ok((0..g)
        .map(|i| match i {
            0 => lambda_max,
            i if i == g - 1 => eps * lambda_max,
            i => lambda_max * eps.powf(i as f64 / last),
        })
        .collect())
}

/// Headroom for grids built on [`estimate_lambda_max`]. At the estimate itself
/// the extreme row sits on the shrinkage kink, so the canonical cold start only
/// approaches `O = 0` sublinearly; any strict margin gives exact zeros.
pub const LAMBDA_MAX_MARGIN: f64 = 1.01;

/// Smallest `lambda2` at which `O = 0` is a fixed point of the cycle
/// started from plain PCA: twice the largest PCA residual row norm (or
/// entry magnitude for the entry penalty).
pub fn estimate_lambda_max(x: &DataMatrix, q: usize, kind: RegularizerKind) -> Result<f64> {
    let model = pca(x, q)?;
    let zero = OutlierMatrix::zeros(x.n_rows(), x.n_cols(), kind);
    let r = residual_matrix(x, &model, &zero)?;
    let worst = match kind {
        RegularizerKind::RowL2 => row_norms(&r).into_iter().fold(0.0, f64::max),
        RegularizerKind::EntryL1 => r.amax(),
    };
    Ok(2.0 * worst)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("empty grid"));
    }
    if grid.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("grid values must be non-negative"));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("grid must be strictly decreasing"));
    }
    Ok(())
}

/// Warm-started path: the first point starts from the solver defaults, each
/// later point from the previous solution.
pub fn compute_path(
    x: &DataMatrix,
    q: usize,
    grid: &[f64],
    kind: RegularizerKind,
    opts: &SolverOptions,
) -> Result<PathResult> {
    check_grid(grid)?;
    let mut fits: Vec<BatchFit> = Vec::with_capacity(grid.len());
    for &lambda2 in grid {
        let fit = fit_batch(x, q, lambda2, kind, opts, fits.last())?;
        fits.push(fit);
    }
    Ok(PathResult::from_fits(grid.to_vec(), fits, kind))
}

/// Every grid point cold-started, spread over `threads` workers. Results are
/// identical to running the points one by one.
pub fn compute_path_cold(
    x: &DataMatrix,
    q: usize,
    grid: &[f64],
    kind: RegularizerKind,
    opts: &SolverOptions,
    threads: usize,
) -> Result<PathResult> {
    check_grid(grid)?;
    let threads = threads.clamp(1, grid.len());
    let mut slots: Vec<Option<Result<BatchFit>>> = (0..grid.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = grid.len().div_ceil(threads);
        for (lams, out) in grid.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (lambda2, slot) in lams.iter().zip(out.iter_mut()) {
                    *slot = Some(fit_batch(x, q, *lambda2, kind, opts, None));
                }
            });
        }
    });
    let fits = slots
        .into_iter()
        .map(|s| s.expect("every grid point is assigned to a worker"))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathResult::from_fits(grid.to_vec(), fits, kind))
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub lambda2: f64,
    pub fit: BatchFit,
    /// Set when no grid point hits the requested count exactly.
    pub approximate: bool,
    /// Criterion value at the chosen point (noise-covariance rule only).
    pub criterion: Option<f64>,
}

fn select(path: &PathResult, index: usize, approximate: bool, criterion: Option<f64>) -> Selection {
    Selection {
        index,
        lambda2: path.grid[index],
        fit: path.fits[index].clone(),
        approximate,
        criterion,
    }
}

/// Largest `lambda2` whose support count equals `n_outliers`; otherwise the
/// largest one exceeding it, flagged approximate.
pub fn select_by_count(path: &PathResult, n_outliers: usize) -> Result<Selection> {
    if let Some(g) = path.support_counts.iter().position(|&c| c == n_outliers) {
        return Ok(select(path, g, false, None));
    }
    match path.support_counts.iter().position(|&c| c >= n_outliers) {
        Some(g) => Ok(select(path, g, true, None)),
        None => Err(invalid(format!(
            "path never reaches {n_outliers} outliers (max {})",
            path.support_counts.iter().max().copied().unwrap_or(0)
        ))),
    }
}

/// Per-grid-point value of the noise-covariance criterion, `None` where too
/// few rows survive to estimate a covariance.
#[derive(Debug, Clone)]
pub struct NoiseCovScan {
    pub criterion: Vec<Option<f64>>,
    /// Eigenvalues of the noise covariance clipped when whitening.
    pub clipped: usize,
}

/// Minimum number of residual rows used per grid point.
pub const MIN_NOISE_ROWS: usize = 2;

/// `|tr(Sigma_hat) - p|` per grid point, where `Sigma_hat` is the sample
/// second moment of whitened residuals.
///
/// Row penalty: residuals `x_n - m - U s_n` of rows left unflagged.
/// Entry penalty: outlier-compensated residuals `x_n - m - U s_n - o_n` of
/// every row, since almost every row carries some flagged entry.
pub fn noise_cov_scan(path: &PathResult, x: &DataMatrix, sigma_e: &DMatrix<f64>) -> Result<NoiseCovScan> {
    let p = x.n_cols();
    if sigma_e.shape() != (p, p) {
        return Err(dims("noise covariance must be p x p"));
    }
    let (w, clipped) = sym_inv_sqrt(sigma_e)?;
    let mut criterion = Vec::with_capacity(path.len());
    for fit in &path.fits {
        let zero = OutlierMatrix::zeros(x.n_rows(), p, path.kind);
        let raw = residual_matrix(x, &fit.model, &zero)?;
        let (resid, rows): (DMatrix<f64>, Vec<usize>) = match path.kind {
            RegularizerKind::RowL2 => {
                let norms = fit.outliers.row_norms();
                let rows = (0..x.n_rows()).filter(|&i| norms[i] < SUPPORT_EPS).collect();
                (raw, rows)
            }
            RegularizerKind::EntryL1 => (raw - fit.outliers.values(), (0..x.n_rows()).collect()),
        };
        if rows.len() < MIN_NOISE_ROWS {
            criterion.push(None);
            continue;
        }
        let kept = if rows.len() == x.n_rows() {
            resid
        } else {
            resid.select_rows(&rows)
        };
        let trace = (kept * &w).norm_squared() / rows.len() as f64;
        criterion.push(Some((trace - p as f64).abs()));
    }
    Ok(NoiseCovScan { criterion, clipped })
}

/// Grid point minimising `|tr(Sigma_hat) - p|`; ties go to the larger
/// `lambda2`.
pub fn select_by_noise_cov(path: &PathResult, x: &DataMatrix, sigma_e: &DMatrix<f64>) -> Result<Selection> {
    let scan = noise_cov_scan(path, x, sigma_e)?;
    let mut best: Option<(usize, f64)> = None;
    for (g, c) in scan.criterion.iter().enumerate() {
        if let Some(v) = *c {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((g, v));
            }
        }
    }
    let (g, v) = best.ok_or_else(|| Error::InvalidArgument("every grid point left too few rows".into()))?;
    Ok(select(path, g, false, Some(v)))
}
