//! Dense linear-algebra kernels shared by every solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dims, invalid, Error, Result};

/// Thin SVD `A = L diag(s) R'` with singular values in descending order.
///
/// Each singular pair is sign-normalised so that the largest-magnitude entry
/// of the left vector is positive; the result is reproducible across runs.
#[derive(Debug, Clone)]
pub struct Svd {
    pub left: DMatrix<f64>,
    pub values: DVector<f64>,
    /// Right singular vectors as columns (`R`, not `R'`).
    pub right: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svd input"));
    }
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(Svd {
            left: DMatrix::zeros(a.nrows(), 0),
            values: DVector::zeros(0),
            right: DMatrix::zeros(a.ncols(), 0),
        });
    }
    let raw = a.clone().svd(true, true);
    let u = raw
        .u
        .ok_or_else(|| Error::Numerical("svd failed to produce U".into()))?;
    let vt = raw
        .v_t
        .ok_or_else(|| Error::Numerical("svd failed to produce V'".into()))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| raw.singular_values[j].total_cmp(&raw.singular_values[i]));

    let mut left = DMatrix::zeros(a.nrows(), k);
    let mut right = DMatrix::zeros(a.ncols(), k);
    let mut values = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let lcol = u.column(src);
        let mut pivot = 0.0f64;
        for v in lcol.iter() {
            if v.abs() > pivot.abs() {
                pivot = *v;
            }
        }
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        left.set_column(dst, &(lcol * sign));
        right.set_column(dst, &(vt.row(src).transpose() * sign));
        values[dst] = raw.singular_values[src];
    }
    Ok(Svd { left, values, right })
}

/// Reduced-rank Procrustes rotation: the `p x q` matrix with orthonormal
/// columns maximising `tr(U'A)`, given by `L R'` from the SVD of `A`.
pub fn procrustes_rotation(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() > a.nrows() {
        return Err(invalid(format!(
            "procrustes needs q <= p, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let d = svd(a)?;
    Ok(&d.left * d.right.transpose())
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal `p x q` matrices.
pub fn subspace_angle(u1: &DMatrix<f64>, u2: &DMatrix<f64>) -> Result<f64> {
    if u1.shape() != u2.shape() {
        return Err(dims(format!("subspace_angle: {:?} vs {:?}", u1.shape(), u2.shape())));
    }
    for (name, u) in [("first", u1), ("second", u2)] {
        let dev = orthonormality_defect(u);
        if dev > 1e-6 {
            return Err(invalid(format!(
                "{name} basis is not orthonormal (||U'U - I||_F = {dev:.3e})"
            )));
        }
    }
    let cross = u1.transpose() * u2;
    let d = svd(&cross)?;
    let smallest = d.values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(smallest.clamp(-1.0, 1.0).acos())
}

/// `||U'U - I||_F`.
pub fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let q = u.ncols();
    (u.transpose() * u - DMatrix::<f64>::identity(q, q)).norm()
}

/// Orthonormal basis for the column span of `u` (thin QR).
pub fn orthonormal_basis(u: &DMatrix<f64>) -> DMatrix<f64> {
    u.clone().qr().q()
}

/// Spectral norm by power iteration on `A'A`.
///
/// Stops when the relative change of the estimate drops below `1e-10` or after
/// 1000 iterations. The start vector is deterministic.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let n = a.ncols();
    // Mix of a constant and a ramp so the start is unlikely to be orthogonal
    // to the top right singular vector.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt() * 1e-3);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..1000 {
        let av = a * &v;
        let w = a.transpose() * &av;
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let next = av.norm();
        v = w / wn;
        if (next - est).abs() <= 1e-10 * next.max(f64::MIN_POSITIVE) {
            return next;
        }
        est = next;
    }
    (a * v).norm()
}

/// Symmetric inverse square root of an SPD matrix.
///
/// Eigenvalues below `1e-12 * lambda_max` are clipped to that floor; the
/// number of clipped eigenvalues is returned alongside the result.
pub fn sym_inv_sqrt(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    if !sigma.is_square() {
        return Err(dims("covariance must be square"));
    }
    if (sigma - sigma.transpose()).norm() > 1e-10 * sigma.norm().max(1.0) {
        return Err(invalid("covariance is not symmetric"));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let lmax = eig.eigenvalues.max();
    if lmax <= 0.0 {
        return Err(invalid("covariance is not positive definite"));
    }
    let floor = 1e-12 * lmax;
    let mut clipped = 0;
    let d = eig.eigenvalues.map(|l| {
        if l < floor {
            clipped += 1;
            1.0 / floor.sqrt()
        } else {
            1.0 / l.sqrt()
        }
    });
    let v = &eig.eigenvectors;
    Ok((v * DMatrix::from_diagonal(&d) * v.transpose(), clipped))
}

/// Column means of an `N x p` matrix as a `p`-vector.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtract `m'` from every row.
pub fn center_rows(x: &DMatrix<f64>, m: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-m[j]);
    }
    out
}

/// Euclidean norm of every row.
pub fn row_norms(x: &DMatrix<f64>) -> Vec<f64> {
    let mut acc = vec![0.0; x.nrows()];
    for col in x.column_iter() {
        for (a, v) in acc.iter_mut().zip(col.iter()) {
            *a += v * v;
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// Solve `X (G + ridge I) = B` for `X` with `G` symmetric PSD, via Cholesky.
///
/// Returns `None` when the shifted Gram matrix is not numerically positive
/// definite.
pub fn ridge_right_solve(b: &DMatrix<f64>, gram: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let q = gram.nrows();
    let mut g = gram.clone();
    for i in 0..q {
        g[(i, i)] += ridge;
    }
    // Symmetrise against round-off before factoring.
    let g = (&g + g.transpose()) * 0.5;
    let chol = g.cholesky()?;
    // X G = B  <=>  G X' = B'
    Some(chol.solve(&b.transpose()).transpose())
}
