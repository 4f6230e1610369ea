//! Exhaustive small-scale oracles: least-trimmed-squares PCA and the
//! `l0`-penalised outlier model solved by support enumeration.
//!
//! Both reduce to plain PCA on every candidate subset of kept rows. Subsets are
//! visited in lexicographic order and a later subset only wins on a strictly
//! (relatively `1e-12`) smaller cost, so ties resolve to the lexicographically
//! smallest index set.

use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{center_rows, column_means};
use crate::model::{leading_right_vectors, DataMatrix, FactorModel, OutlierMatrix, RegularizerKind};

/// Default bound on the number of enumerated subsets.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone)]
pub struct LtsFit {
    pub model: FactorModel,
    pub kept_indices: BTreeSet<usize>,
    pub trimmed_cost: f64,
}

#[derive(Debug, Clone)]
pub struct L0Fit {
    pub model: FactorModel,
    /// Nonzero rows equal the residuals `x_n - m - U s_n` of the flagged rows.
    pub outliers: OutlierMatrix,
    /// `||X - 1m' - SU' - O||_F^2 + lambda0 ||O||_0`.
    pub objective: f64,
    /// Squared-residual cost over the kept rows.
    pub trimmed_cost: f64,
    pub support_size: usize,
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn better(cost: f64, best: f64) -> bool {
    cost < best - 1e-12 * best.abs().max(1e-300)
}

/// PCA on the rows in `kept`, with scores for every row and the cost summed
/// over `kept`.
fn subset_pca(x: &DataMatrix, q: usize, kept: &[usize]) -> Result<(FactorModel, f64)> {
    let sub = x.select_rows(kept);
    let mean = column_means(&sub);
    let centered_sub = center_rows(&sub, &mean);
    let subspace = leading_right_vectors(&centered_sub, q)?;
    let fitted = &centered_sub - &centered_sub * &subspace * subspace.transpose();
    let cost = fitted.norm_squared();
    let centered = center_rows(x.values(), &mean);
    let scores = centered * &subspace;
    Ok((
        FactorModel {
            mean,
            subspace,
            scores,
            orthonormal: true,
        },
        cost,
    ))
}

fn check_q(x: &DataMatrix, q: usize) -> Result<()> {
    if q == 0 || q > x.n_cols() {
        return Err(invalid(format!("q = {q} outside 1..={}", x.n_cols())));
    }
    Ok(())
}

/// Exact LTS PCA by enumerating every size-`nu` subset (capped at
/// [`DEFAULT_ENUMERATION_CAP`]).
pub fn lts_bruteforce(x: &DataMatrix, q: usize, nu: usize) -> Result<LtsFit> {
    lts_bruteforce_with_cap(x, q, nu, DEFAULT_ENUMERATION_CAP)
}

pub fn lts_bruteforce_with_cap(x: &DataMatrix, q: usize, nu: usize, cap: u128) -> Result<LtsFit> {
    check_q(x, q)?;
    let n = x.n_rows();
    if nu == 0 || nu > n {
        return Err(invalid(format!("coverage nu = {nu} outside 1..={n}")));
    }
    let count = binomial(n, nu);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut best: Option<(FactorModel, f64, Vec<usize>)> = None;
    for kept in (0..n).combinations(nu) {
        let (model, cost) = subset_pca(x, q, &kept)?;
        if best.as_ref().is_none_or(|(_, c, _)| better(cost, *c)) {
            best = Some((model, cost, kept));
        }
    }
    let (model, trimmed_cost, kept) = best.expect("at least one subset");
    Ok(LtsFit {
        model,
        kept_indices: kept.into_iter().collect(),
        trimmed_cost,
    })
}

/// Minimum trimmed PCA cost for every outlier-support size `k = 0..N-1`,
/// together with the minimising kept set.
pub fn trimmed_costs_by_support_size(x: &DataMatrix, q: usize, cap: u128) -> Result<Vec<(f64, Vec<usize>)>> {
    check_q(x, q)?;
    let n = x.n_rows();
    let total: u128 = (0..n).map(|k| binomial(n, k)).sum();
    if total > cap {
        return Err(Error::EnumerationCap { count: total, cap });
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let nu = n - k;
        let fit = lts_bruteforce_with_cap(x, q, nu, cap)?;
        out.push((fit.trimmed_cost, fit.kept_indices.into_iter().collect()));
    }
    Ok(out)
}

/// Exact global minimiser of `||X - 1m' - SU' - O||_F^2 + lambda0 ||O||_0` by
/// enumerating every row support (all sizes up to `N - 1`).
///
/// Flagged rows carry `o_n = x_n - m - U s_n`, so only the kept rows enter the
/// fit; ties prefer smaller supports, then lexicographic order.
pub fn l0_enumeration(x: &DataMatrix, q: usize, lambda0: f64) -> Result<L0Fit> {
    l0_enumeration_with_cap(x, q, lambda0, DEFAULT_ENUMERATION_CAP)
}

pub fn l0_enumeration_with_cap(x: &DataMatrix, q: usize, lambda0: f64, cap: u128) -> Result<L0Fit> {
    check_q(x, q)?;
    if !(lambda0 >= 0.0) {
        return Err(invalid("lambda0 must be non-negative"));
    }
    let n = x.n_rows();
    let total: u128 = (0..n).map(|k| binomial(n, k)).sum();
    if total > cap {
        return Err(Error::EnumerationCap { count: total, cap });
    }
    let mut best: Option<(FactorModel, f64, f64, Vec<usize>)> = None;
    for k in 0..n {
        for kept in (0..n).combinations(n - k) {
            let (model, cost) = subset_pca(x, q, &kept)?;
            let total = cost + lambda0 * k as f64;
            if best.as_ref().is_none_or(|(_, t, _, _)| better(total, *t)) {
                best = Some((model, total, cost, kept));
            }
        }
    }
    let (model, objective, trimmed_cost, kept) = best.expect("at least one support");
    let kept: BTreeSet<usize> = kept.into_iter().collect();
    let resid = x.values() - model.low_rank();
    let p = x.n_cols();
    let o = DMatrix::from_fn(n, p, |i, j| if kept.contains(&i) { 0.0 } else { resid[(i, j)] });
    let outliers = OutlierMatrix::new(o, RegularizerKind::RowL2);
    Ok(L0Fit {
        model,
        support_size: n - kept.len(),
        outliers,
        objective,
        trimmed_cost,
    })
}

/// The interval of `lambda0` values for which a support of exactly `size`
/// rows is globally optimal, or `None` if no such value exists.
pub fn l0_lambda_range(x: &DataMatrix, q: usize, size: usize) -> Result<Option<(f64, f64)>> {
    let costs = trimmed_costs_by_support_size(x, q, DEFAULT_ENUMERATION_CAP)?;
    if size >= costs.len() {
        return Ok(None);
    }
    let c = |k: usize| costs[k].0;
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for k in 0..costs.len() {
        if k < size {
            hi = hi.min((c(k) - c(size)) / (size - k) as f64);
        } else if k > size {
            lo = lo.max((c(size) - c(k)) / (k - size) as f64);
        }
    }
    Ok((lo < hi).then_some((lo, hi)))
}
