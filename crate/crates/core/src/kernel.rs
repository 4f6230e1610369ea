//! Robust kernel PCA. Mean, subspace and outliers live in feature space and
//! are carried as coefficient matrices against the Gram matrix:
//! `m = Phi mu`, `U = Phi Upsilon`, `O' = Phi Omega`.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::error::{dims, invalid, Error, Result};
use crate::linalg::ridge_right_solve;
use crate::model::{DataMatrix, SolverOptions};
use crate::rng::{random_scores, seeded};

/// Symmetric PSD kernel matrix.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    k: DMatrix<f64>,
    /// Diagonal shift added to make the matrix PSD (graph kernels).
    pub psd_shift: f64,
}

impl GramMatrix {
    /// Validates symmetry (1e-10) and `lambda_min >= -1e-8`.
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        Self::with_shift(k, 0.0)
    }

    fn with_shift(k: DMatrix<f64>, psd_shift: f64) -> Result<Self> {
        if !k.is_square() || k.nrows() == 0 {
            return Err(dims("Gram matrix must be square and non-empty"));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gram matrix"));
        }
        if (&k - k.transpose()).amax() > 1e-10 {
            return Err(invalid("Gram matrix is not symmetric"));
        }
        let lmin = SymmetricEigen::new(k.clone()).eigenvalues.min();
        if lmin < -1e-8 {
            return Err(invalid(format!("Gram matrix is not PSD (lambda_min = {lmin:e})")));
        }
        Ok(Self { k, psd_shift })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }
}

/// Gaussian kernel `exp(-||x_i - x_j||^2 / c)`.
pub fn rbf_gram(x: &DataMatrix, c: f64) -> Result<GramMatrix> {
    if !(c > 0.0) {
        return Err(invalid("kernel width c must be positive"));
    }
    let v = x.values();
    let n = v.nrows();
    let mut k = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let d2 = (v.row(i) - v.row(j)).norm_squared();
            let e = (-d2 / c).exp();
            k[(i, j)] = e;
            k[(j, i)] = e;
        }
    }
    GramMatrix::new(k)
}

/// Linear kernel `X X'`.
pub fn linear_gram(x: &DataMatrix) -> Result<GramMatrix> {
    let v = x.values();
    let k = v * v.transpose();
    GramMatrix::new((&k + k.transpose()) * 0.5)
}

/// `zeta I + D^{-1/2} A D^{-1/2}`; isolated nodes get a zero normalised row.
/// Without `zeta`, uses `max(0, -lambda_min) + 1e-8`.
pub fn graph_gram(a: &DMatrix<f64>, zeta: Option<f64>) -> Result<GramMatrix> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(dims("adjacency must be square and non-empty"));
    }
    if (a - a.transpose()).amax() > 0.0 {
        return Err(invalid("adjacency is not symmetric"));
    }
    if a.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(invalid("adjacency entries must be finite and non-negative"));
    }
    if a.diagonal().iter().any(|v| *v != 0.0) {
        return Err(invalid("adjacency must have a zero diagonal"));
    }
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = a
        .row_iter()
        .map(|r| r.sum())
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let norm = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let zeta = match zeta {
        Some(z) => z,
        None => (-SymmetricEigen::new(norm.clone()).eigenvalues.min()).max(0.0) + 1e-8,
    };
    GramMatrix::with_shift(norm + DMatrix::identity(n, n) * zeta, zeta)
}

#[derive(Debug, Clone)]
pub struct KernelModel {
    pub mu: DVector<f64>,
    pub upsilon: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub lambda_star: f64,
    pub lambda2: f64,
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    /// `||r_n||` from the last outlier update.
    pub residual_norms: Vec<f64>,
}

/// Robust KPCA objective evaluated through `K`.
pub fn kernel_objective(
    k: &GramMatrix,
    mu: &DVector<f64>,
    upsilon: &DMatrix<f64>,
    s: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    lambda_star: f64,
    lambda2: f64,
) -> f64 {
    let kv = k.values();
    let n = kv.nrows();
    let c = centred_residual_coeffs(mu, upsilon, s, n) - omega;
    let fit = (c.transpose() * kv).component_mul(&c.transpose()).sum();
    let ku = kv * upsilon;
    let ridge = upsilon.component_mul(&ku).sum() + s.norm_squared();
    let kom = kv * omega;
    let pen: f64 = (0..n)
        .map(|j| omega.column(j).dot(&kom.column(j)).max(0.0).sqrt())
        .sum();
    let pen = if pen == 0.0 { 0.0 } else { lambda2 * pen };
    fit + 0.5 * lambda_star * ridge + pen
}

/// `I - mu 1' - Upsilon S'`.
fn centred_residual_coeffs(mu: &DVector<f64>, upsilon: &DMatrix<f64>, s: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n) - upsilon * s.transpose();
    for mut col in p.column_iter_mut() {
        col -= mu;
    }
    p
}

fn degenerate() -> Error {
    Error::Numerical("kernel ridge system is singular".into())
}

/// Alternating updates `mu -> Upsilon -> S -> Omega`. `S(0)` is random normal
/// from `opts.seed`, `Omega(0) = 0`.
pub fn fit_kpca(
    k: &GramMatrix,
    qbar: usize,
    lambda_star: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<KernelModel> {
    fit_kpca_from(k, random_scores(k.n(), qbar, opts.seed), lambda_star, lambda2, opts)
}

pub fn fit_kpca_from(
    k: &GramMatrix,
    s0: DMatrix<f64>,
    lambda_star: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<KernelModel> {
    let kv = k.values();
    let n = kv.nrows();
    let qbar = s0.ncols();
    if qbar == 0 || qbar > n {
        return Err(invalid(format!("qbar = {qbar} outside 1..={n}")));
    }
    if s0.nrows() != n {
        return Err(dims("S(0) must have N rows"));
    }
    if !(lambda_star >= 0.0) || !(lambda2 >= 0.0) {
        return Err(invalid("regularisation weights must be non-negative"));
    }
    opts.validate()?;
    let ridge = lambda_star / 2.0;
    let dust = -1e-10 * kv.diagonal().amax().max(1.0);
    let ones = DVector::from_element(n, 1.0);

    let mut s = s0;
    let mut omega = DMatrix::zeros(n, n);
    let mut mu = DVector::zeros(n);
    let mut upsilon = DMatrix::zeros(n, qbar);
    let mut residual_norms = vec![0.0; n];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut objective = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;

    for _ in 0..opts.max_iters {
        iters += 1;
        mu = (&ones - &omega * &ones) / n as f64;
        let mut phi_o = DMatrix::identity(n, n) - &omega;
        for mut col in phi_o.column_iter_mut() {
            col -= &mu;
        }
        upsilon = ridge_right_solve(&(&phi_o * &s), &(s.transpose() * &s), ridge).ok_or_else(degenerate)?;
        let ku = kv * &upsilon;
        s = ridge_right_solve(&(phi_o.transpose() * &ku), &(upsilon.transpose() * &ku), ridge)
            .ok_or_else(degenerate)?;

        let p = centred_residual_coeffs(&mu, &upsilon, &s, n);
        let kp = kv * &p;
        let mut lam = DVector::zeros(n);
        for j in 0..n {
            let rho = p.column(j).dot(&kp.column(j));
            if rho < dust {
                return Err(Error::Numerical(format!(
                    "negative residual energy {rho:e}: K is not PSD"
                )));
            }
            let r = rho.max(0.0).sqrt();
            residual_norms[j] = r;
            if r > lambda2 / 2.0 {
                lam[j] = (r - lambda2 / 2.0) / r;
            }
        }
        omega = p * DMatrix::from_diagonal(&lam);
        objective = kernel_objective(k, &mu, &upsilon, &s, &omega, lambda_star, lambda2);
        if opts.record_trace {
            trace.push(objective);
        }
        if prev.is_finite() && opts.converged(prev, objective) {
            converged = true;
            break;
        }
        prev = objective;
    }

    Ok(KernelModel {
        mu,
        upsilon,
        s,
        omega,
        lambda_star,
        lambda2,
        objective_trace: trace,
        objective,
        iters,
        converged,
        residual_norms,
    })
}

/// `||o_n|| = sqrt(diag(Omega' K Omega))`.
pub fn outlier_norms(model: &KernelModel, k: &GramMatrix) -> Vec<f64> {
    let kom = k.values() * &model.omega;
    (0..model.omega.ncols())
        .map(|j| {
            if model.omega.column(j).iter().all(|v| *v == 0.0) {
                0.0
            } else {
                model.omega.column(j).dot(&kom.column(j)).max(0.0).sqrt()
            }
        })
        .collect()
}

/// Scores of a new point from its kernel evaluations against the training
/// data: `Upsilon' k_x - Upsilon' K mu`.
pub fn project(model: &KernelModel, k_x: &DVector<f64>, k: &GramMatrix) -> Result<DVector<f64>> {
    if k_x.len() != k.n() || model.upsilon.nrows() != k.n() {
        return Err(dims("kernel vector length differs from N"));
    }
    Ok(model.upsilon.transpose() * (k_x - k.values() * &model.mu))
}

#[derive(Debug, Clone)]
pub struct Clustering {
    /// `None` for excluded (outlier) rows.
    pub labels: Vec<Option<usize>>,
    pub inertia: f64,
}

impl Clustering {
    /// ARI against `truth`, over the rows that received a label.
    pub fn ari(&self, truth: &[usize]) -> Result<f64> {
        if truth.len() != self.labels.len() {
            return Err(dims("truth labels have the wrong length"));
        }
        let (a, b): (Vec<usize>, Vec<usize>) = self
            .labels
            .iter()
            .zip(truth)
            .filter_map(|(l, t)| l.map(|l| (l, *t)))
            .unzip();
        Ok(adjusted_rand_index(&a, &b))
    }
}

/// Outlier rows (norm above this) are dropped before clustering.
const OUTLIER_EPS: f64 = 1e-12;

/// k-means on the rows of `Upsilon`, optionally dropping flagged rows.
pub fn embed_and_cluster(
    model: &KernelModel,
    k: &GramMatrix,
    n_clusters: usize,
    exclude_outliers: bool,
    seed: u64,
) -> Result<Clustering> {
    let norms = outlier_norms(model, k);
    let keep: Vec<usize> = (0..k.n())
        .filter(|&i| !exclude_outliers || norms[i] <= OUTLIER_EPS)
        .collect();
    let pts = DMatrix::from_fn(keep.len(), model.upsilon.ncols(), |r, c| model.upsilon[(keep[r], c)]);
    let (assign, inertia) = kmeans(&pts, n_clusters, 50, seed)?;
    let mut labels = vec![None; k.n()];
    for (r, &i) in keep.iter().enumerate() {
        labels[i] = Some(assign[r]);
    }
    Ok(Clustering { labels, inertia })
}

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs.
pub fn kmeans(pts: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<(Vec<usize>, f64)> {
    let n = pts.nrows();
    if k == 0 {
        return Err(invalid("need at least one cluster"));
    }
    if n < k {
        return Err(invalid(format!("{n} rows cannot form {k} clusters")));
    }
    let mut rng = seeded(seed);
    let dist2 = |i: usize, c: &DMatrix<f64>, j: usize| (pts.row(i) - c.row(j)).norm_squared();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        // k-means++ seeding.
        let mut centres = DMatrix::zeros(k, pts.ncols());
        centres.row_mut(0).copy_from(&pts.row(rng.random_range(0..n)));
        let mut d = vec![f64::INFINITY; n];
        for c in 1..k {
            for (i, di) in d.iter_mut().enumerate() {
                *di = di.min(dist2(i, &centres, c - 1));
            }
            let pick = match WeightedIndex::new(&d) {
                Ok(w) => w.sample(&mut rng),
                // All points coincide with chosen centres.
                Err(_) => rng.random_range(0..n),
            };
            centres.row_mut(c).copy_from(&pts.row(pick));
        }
        let mut assign = vec![usize::MAX; n];
        for _ in 0..300 {
            let mut changed = false;
            for (i, a) in assign.iter_mut().enumerate() {
                let j = (0..k)
                    .min_by(|&x, &y| dist2(i, &centres, x).total_cmp(&dist2(i, &centres, y)))
                    .unwrap();
                if *a != j {
                    *a = j;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = DMatrix::zeros(k, pts.ncols());
            let mut counts = vec![0usize; k];
            for (i, &a) in assign.iter().enumerate() {
                sums.row_mut(a).add_assign(&pts.row(i));
                counts[a] += 1;
            }
            for (j, &c) in counts.iter().enumerate() {
                if c > 0 {
                    centres.row_mut(j).copy_from(&(sums.row(j) / c as f64));
                }
            }
        }
        let inertia: f64 = assign.iter().enumerate().map(|(i, &a)| dist2(i, &centres, a)).sum();
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((assign, inertia));
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Hubert-Arabie adjusted Rand index.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label vectors differ in length");
    let n = a.len();
    let mut table = std::collections::HashMap::<(usize, usize), u64>::new();
    let mut rows = std::collections::HashMap::<usize, u64>::new();
    let mut cols = std::collections::HashMap::<usize, u64>::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = rows.values().map(|&v| c2(v)).sum();
    let sb: f64 = cols.values().map(|&v| c2(v)).sum();
    let total = c2(n as u64);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if max == expected {
        // Both partitions trivial (all singletons or one block).
        return 1.0;
    }
    (index - expected) / (max - expected)
}
