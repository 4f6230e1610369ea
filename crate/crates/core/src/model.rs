//! Data model, objective and plain PCA.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, invalid, Error, Result};
use crate::linalg::{center_rows, column_means, svd};

/// Observations as rows of an `N x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(invalid("data matrix must have at least one row and column"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data matrix"));
        }
        Ok(Self { values })
    }

    pub fn from_row_slice(n: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * p {
            return Err(dims(format!("expected {} values, got {}", n * p, data.len())));
        }
        Self::new(DMatrix::from_row_slice(n, p, data))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Rows `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DMatrix<f64> {
        self.values.select_rows(rows.iter())
    }
}

/// Mean, subspace and principal components `{m, U, S}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub mean: DVector<f64>,
    /// `p x q` subspace.
    pub subspace: DMatrix<f64>,
    /// `N x q` principal components, one row per observation.
    pub scores: DMatrix<f64>,
    pub orthonormal: bool,
}

impl FactorModel {
    pub fn p(&self) -> usize {
        self.subspace.nrows()
    }

    pub fn q(&self) -> usize {
        self.subspace.ncols()
    }

    /// `1 m' + S U'`.
    pub fn low_rank(&self) -> DMatrix<f64> {
        let mut l = &self.scores * self.subspace.transpose();
        for (j, mut col) in l.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.mean[j]);
        }
        l
    }

    fn check(&self, n: usize, p: usize) -> Result<()> {
        if self.mean.len() != p
            || self.subspace.nrows() != p
            || self.scores.nrows() != n
            || self.scores.ncols() != self.subspace.ncols()
        {
            return Err(dims(format!(
                "model (m: {}, U: {:?}, S: {:?}) does not fit data {n}x{p}",
                self.mean.len(),
                self.subspace.shape(),
                self.scores.shape()
            )));
        }
        Ok(())
    }
}

/// Outlier penalty family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    /// `sum_n ||o_n||_2`: whole observations are flagged.
    RowL2,
    /// `sum_n ||o_n||_1`: individual entries are flagged.
    EntryL1,
}

impl RegularizerKind {
    pub fn penalty(self, o: &DMatrix<f64>) -> f64 {
        match self {
            RegularizerKind::RowL2 => crate::linalg::row_norms(o).iter().sum(),
            RegularizerKind::EntryL1 => o.iter().map(|v| v.abs()).sum(),
        }
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" | "rowl2" | "row-l2" => Ok(RegularizerKind::RowL2),
            "entry" | "entryl1" | "entry-l1" => Ok(RegularizerKind::EntryL1),
            other => Err(invalid(format!("unknown regularizer `{other}` (row|entry)"))),
        }
    }
}

/// Outlier matrix with its support.
///
/// `row_support` holds exactly the rows with a nonzero entry; `entry_count`
/// the number of nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierMatrix {
    values: DMatrix<f64>,
    row_support: BTreeSet<usize>,
    entry_count: usize,
    kind: RegularizerKind,
}

impl OutlierMatrix {
    pub fn new(values: DMatrix<f64>, kind: RegularizerKind) -> Self {
        let mut row_support = BTreeSet::new();
        let mut entry_count = 0;
        for i in 0..values.nrows() {
            let nz = values.row(i).iter().filter(|v| **v != 0.0).count();
            if nz > 0 {
                row_support.insert(i);
                entry_count += nz;
            }
        }
        Self {
            values,
            row_support,
            entry_count,
            kind,
        }
    }

    pub fn zeros(n: usize, p: usize, kind: RegularizerKind) -> Self {
        Self::new(DMatrix::zeros(n, p), kind)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn row_support(&self) -> &BTreeSet<usize> {
        &self.row_support
    }

    pub fn entry_count(&self) -> usize {
        self.entry_count
    }

    /// `||O||_0`: nonzero rows for [`RegularizerKind::RowL2`], nonzero entries
    /// for [`RegularizerKind::EntryL1`].
    pub fn l0(&self) -> usize {
        match self.kind {
            RegularizerKind::RowL2 => self.row_support.len(),
            RegularizerKind::EntryL1 => self.entry_count,
        }
    }

    pub fn row_norms(&self) -> Vec<f64> {
        crate::linalg::row_norms(&self.values)
    }
}

/// Iteration controls shared by the alternating solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the relative objective change falls below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rel_tol: 1e-7,
            seed: 0,
            record_trace: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(invalid("rel_tol must be positive"));
        }
        Ok(())
    }

    pub(crate) fn converged(&self, prev: f64, cur: f64) -> bool {
        (prev - cur).abs() <= self.rel_tol * prev.abs().max(f64::MIN_POSITIVE)
    }
}

/// `X - 1 m' - S U' - O`.
pub fn residual_matrix(x: &DataMatrix, model: &FactorModel, outliers: &OutlierMatrix) -> Result<DMatrix<f64>> {
    let (n, p) = (x.n_rows(), x.n_cols());
    model.check(n, p)?;
    if outliers.values().shape() != (n, p) {
        return Err(dims(format!(
            "outliers {:?} vs data {n}x{p}",
            outliers.values().shape()
        )));
    }
    Ok(x.values() - model.low_rank() - outliers.values())
}

/// `||X - 1m' - SU' - O||_F^2 + lambda2 * penalty(O)`.
pub fn objective_value(
    x: &DataMatrix,
    model: &FactorModel,
    outliers: &OutlierMatrix,
    lambda2: f64,
    kind: RegularizerKind,
) -> Result<f64> {
    if !(lambda2 >= 0.0) {
        return Err(invalid("lambda2 must be non-negative"));
    }
    let r = residual_matrix(x, model, outliers)?;
    Ok(r.norm_squared() + scaled_penalty(lambda2, kind.penalty(outliers.values())))
}

/// `lambda * penalty`, with `inf * 0 = 0` so that an infinite weight on an
/// empty outlier matrix contributes nothing.
pub(crate) fn scaled_penalty(lambda: f64, penalty: f64) -> f64 {
    if penalty == 0.0 {
        0.0
    } else {
        lambda * penalty
    }
}

/// Plain rank-`q` PCA of `X`: sample mean, `q` dominant right singular
/// vectors of the centered data and the projections onto them.
pub fn pca(x: &DataMatrix, q: usize) -> Result<FactorModel> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if q == 0 || q > p {
        return Err(invalid(format!("q = {q} outside 1..={p}")));
    }
    let mean = column_means(x.values());
    let centered = center_rows(x.values(), &mean);
    let subspace = leading_right_vectors(&centered, q)?;
    let scores = &centered * &subspace;
    debug_assert_eq!(scores.nrows(), n);
    Ok(FactorModel {
        mean,
        subspace,
        scores,
        orthonormal: true,
    })
}

/// `q` dominant right singular vectors of `a`, completed with canonical
/// directions if `a` has fewer than `q` singular pairs.
pub(crate) fn leading_right_vectors(a: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    let p = a.ncols();
    let d = svd(a)?;
    let k = d.right.ncols();
    if k >= q {
        return Ok(d.right.columns(0, q).into_owned());
    }
    // Fewer rows than q: pad with canonical axes, then orthonormalise.
    let mut u = DMatrix::zeros(p, q);
    u.columns_mut(0, k).copy_from(&d.right);
    let mut next = 0;
    for j in k..q {
        loop {
            let mut e = DVector::zeros(p);
            e[next % p] = 1.0;
            next += 1;
            let proj = &e - u.columns(0, j) * (u.columns(0, j).transpose() * &e);
            let nrm = proj.norm();
            if nrm > 1e-8 {
                u.set_column(j, &(proj / nrm));
                break;
            }
        }
    }
    Ok(u)
}

/// Sum of squared residual norms of plain PCA, i.e. the least-squares PCA cost.
pub fn pca_cost(x: &DataMatrix, model: &FactorModel) -> Result<f64> {
    let zero = OutlierMatrix::zeros(x.n_rows(), x.n_cols(), RegularizerKind::RowL2);
    objective_value(x, model, &zero, 0.0, RegularizerKind::RowL2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_for(x: &DataMatrix, q: usize) -> FactorModel {
        pca(x, q).unwrap()
    }

    #[test]
    fn data_matrix_rejects_nan_and_empty() {
        assert!(DataMatrix::new(DMatrix::from_element(2, 2, f64::NAN)).is_err());
        assert!(DataMatrix::new(DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn residual_is_zero_for_exact_mean_fit() {
        let m = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = DataMatrix::new(DMatrix::from_fn(4, 3, |_, j| m[j])).unwrap();
        let model = FactorModel {
            mean: m,
            subspace: DMatrix::from_fn(3, 1, |i, _| if i == 0 { 1.0 } else { 0.0 }),
            scores: DMatrix::zeros(4, 1),
            orthonormal: true,
        };
        let o = OutlierMatrix::zeros(4, 3, RegularizerKind::RowL2);
        let r = residual_matrix(&x, &model, &o).unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn residual_zero_when_model_identity_holds() {
        let u = DMatrix::from_row_slice(2, 1, &[0.6, 0.8]);
        let m = DVector::from_vec(vec![1.0, 1.0]);
        let s = DMatrix::from_row_slice(2, 1, &[2.0, -1.0]);
        let o = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, -1.0]);
        let x = &s * u.transpose() + &o + DMatrix::from_fn(2, 2, |_, j| m[j]);
        let x = DataMatrix::new(x).unwrap();
        let model = FactorModel {
            mean: m,
            subspace: u,
            scores: s,
            orthonormal: true,
        };
        let r = residual_matrix(&x, &model, &OutlierMatrix::new(o, RegularizerKind::RowL2)).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn residual_matches_scalar_loop() {
        // 3x2 instance, q = 1.
        let x = DataMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 4.0, -1.0]).unwrap();
        let model = FactorModel {
            mean: DVector::from_vec(vec![0.2, -0.1]),
            subspace: DMatrix::from_row_slice(2, 1, &[0.8, -0.6]),
            scores: DMatrix::from_row_slice(3, 1, &[1.5, -0.7, 2.2]),
            orthonormal: true,
        };
        let o = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, -2.0]);
        let om = OutlierMatrix::new(o.clone(), RegularizerKind::RowL2);
        let r = residual_matrix(&x, &model, &om).unwrap();
        for n in 0..3 {
            for j in 0..2 {
                let naive =
                    x.values()[(n, j)] - model.mean[j] - model.subspace[(j, 0)] * model.scores[(n, 0)] - o[(n, j)];
                assert!((r[(n, j)] - naive).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn residual_dimension_mismatch() {
        let x = DataMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let model = model_for(&x, 1);
        let o = OutlierMatrix::zeros(3, 2, RegularizerKind::RowL2);
        assert!(matches!(
            residual_matrix(&x, &model, &o),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn objective_cases() {
        // 2x2, O = I, model zero: residual X - I.
        let x = DataMatrix::from_row_slice(2, 2, &[2.0, 0.5, -1.0, 3.0]).unwrap();
        let model = FactorModel {
            mean: DVector::zeros(2),
            subspace: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            scores: DMatrix::zeros(2, 1),
            orthonormal: true,
        };
        let o = OutlierMatrix::new(DMatrix::identity(2, 2), RegularizerKind::RowL2);
        let lambda2 = 0.7;
        // Residual entries: (1, .5, -1, 2) => 1 + .25 + 1 + 4 = 6.25; penalty 2.
        let expected = 6.25 + lambda2 * 2.0;
        let got = objective_value(&x, &model, &o, lambda2, RegularizerKind::RowL2).unwrap();
        assert!((got - expected).abs() < 1e-14);
        // Scalar-loop oracle with EntryL1 (unit entries too).
        let got_l1 = objective_value(&x, &model, &o, lambda2, RegularizerKind::EntryL1).unwrap();
        assert!((got_l1 - expected).abs() < 1e-14);
        // lambda2 = 0: pure residual.
        let got0 = objective_value(&x, &model, &o, 0.0, RegularizerKind::RowL2).unwrap();
        assert!((got0 - 6.25).abs() < 1e-14);
        assert!(objective_value(&x, &model, &o, -1.0, RegularizerKind::RowL2).is_err());
    }

    #[test]
    fn objective_zero_for_exact_fit() {
        let x = DataMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
        let model = pca(&x, 1).unwrap();
        let o = OutlierMatrix::zeros(3, 2, RegularizerKind::RowL2);
        let v = objective_value(&x, &model, &o, 5.0, RegularizerKind::RowL2).unwrap();
        assert!(v < 1e-24);
    }

    #[test]
    fn objective_without_outliers_is_pca_cost() {
        let x = DataMatrix::from_row_slice(
            5,
            3,
            &[
                1.0, 0.2, -0.3, 0.4, 1.1, 0.0, -2.0, 0.3, 0.9, 0.5, -0.8, 1.7, 0.0, 0.1, 0.2,
            ],
        )
        .unwrap();
        let model = pca(&x, 1).unwrap();
        let o = OutlierMatrix::zeros(5, 3, RegularizerKind::RowL2);
        let v = objective_value(&x, &model, &o, 0.0, RegularizerKind::RowL2).unwrap();
        // PCA cost = sum of squared trailing singular values of the centered data.
        let c = center_rows(x.values(), &column_means(x.values()));
        let sv = svd(&c).unwrap().values;
        let tail: f64 = sv.iter().skip(1).map(|s| s * s).sum();
        assert!((v - tail).abs() < 1e-12);
    }

    #[test]
    fn outlier_support_bookkeeping() {
        let o = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, -2.0, 3.0]);
        let om = OutlierMatrix::new(o, RegularizerKind::RowL2);
        assert_eq!(om.row_support().iter().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(om.l0(), 2);
        assert_eq!(om.entry_count(), 3);
        let oe = OutlierMatrix::new(om.values().clone(), RegularizerKind::EntryL1);
        assert_eq!(oe.l0(), 3);
    }
}
