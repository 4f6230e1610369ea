//! Shrinkage operators and the vector Huber loss.

use nalgebra::DVector;

/// Vector Huber loss: `||r||^2` inside radius `lambda2/2`, linear beyond.
pub fn huber_vector_loss(r: &DVector<f64>, lambda2: f64) -> f64 {
    huber_from_norm(r.norm(), lambda2)
}

pub(crate) fn huber_from_norm(nrm: f64, lambda2: f64) -> f64 {
    if nrm <= lambda2 / 2.0 {
        nrm * nrm
    } else {
        lambda2 * nrm - lambda2 * lambda2 / 4.0
    }
}

/// Group soft-thresholding: `r (||r|| - tau)_+ / ||r||`, and `0` for `r = 0`.
pub fn row_soft_threshold(r: &DVector<f64>, tau: f64) -> DVector<f64> {
    let nrm = r.norm();
    if nrm <= tau || nrm == 0.0 {
        return DVector::zeros(r.len());
    }
    r * ((nrm - tau) / nrm)
}

/// Entry-wise soft-thresholding: `sign(r_i) (|r_i| - tau)_+`.
pub fn entry_soft_threshold(r: &DVector<f64>, tau: f64) -> DVector<f64> {
    r.map(|v| soft(v, tau))
}

#[inline]
pub(crate) fn soft(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}
