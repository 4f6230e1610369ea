//! Streaming robust subspace tracking: one datum per step, a group-lasso
//! outlier test, then a recursive least-squares subspace update with
//! exponential forgetting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::batch::fit_batch;
use crate::error::{dims, invalid, Error, Result};
use crate::linalg::{orthonormal_basis, orthonormality_defect, subspace_angle};
use crate::model::{pca, DataMatrix, RegularizerKind, SolverOptions};
use crate::path::{
    compute_path, estimate_lambda_max, lambda_grid, select_by_count, select_by_noise_cov, LAMBDA_MAX_MARGIN,
};

/// Solves `min_o 0.5 o'Ho + g'o + lambda ||o||_2` for PSD `H`.
///
/// Zero iff `||g|| <= lambda`; otherwise `o = -(H + gamma I)^{-1} g` where
/// `gamma = lambda / ||o||` is found by bisection on the secular equation
/// `sum_i c_i^2 gamma^2 / (h_i + gamma)^2 = lambda^2` in the eigenbasis of `H`.
pub fn msto(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let p = g.len();
    if h.shape() != (p, p) {
        return Err(dims("H must be p x p"));
    }
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be positive"));
    }
    if h.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("msto input"));
    }
    let gn = g.norm();
    if gn <= lambda {
        return Ok(DVector::zeros(p));
    }
    if (h * h * 0.5 - h).norm() <= 1e-8 {
        return msto_projection(h, g, lambda);
    }

    let eig = SymmetricEigen::new(h.clone());
    let hmax = eig.eigenvalues.amax();
    let hs: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| if v <= 1e-12 * hmax.max(1.0) { 0.0 } else { v })
        .collect();
    let c = eig.eigenvectors.transpose() * g;
    let null_mass: f64 = hs
        .iter()
        .zip(c.iter())
        .filter(|(h, _)| **h == 0.0)
        .map(|(_, c)| c * c)
        .sum();
    if null_mass >= lambda * lambda {
        return Err(Error::Numerical(format!(
            "msto unbounded: null-space part of g has norm {} >= lambda {lambda}",
            null_mass.sqrt()
        )));
    }
    let secular = |gamma: f64| -> f64 {
        hs.iter()
            .zip(c.iter())
            .map(|(h, c)| {
                let t = gamma / (h + gamma);
                c * c * t * t
            })
            .sum::<f64>()
            - lambda * lambda
    };
    // Start from the exact root for H = 2 x projection and grow a bracket.
    let start = 2.0 * lambda / (gn - lambda);
    let (mut lo, mut hi) = (start, start);
    while secular(lo) > 0.0 {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::Numerical("msto bracket collapsed".into()));
        }
    }
    while secular(hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("msto bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = (lo * hi).sqrt().clamp(lo, hi);
        let mid = if mid <= lo || mid >= hi { 0.5 * (lo + hi) } else { mid };
        if secular(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let coef = DVector::from_iterator(p, hs.iter().zip(c.iter()).map(|(h, c)| -c / (h + gamma)));
    Ok(&eig.eigenvectors * coef)
}

/// Closed form when `H = 2 Pi` for an orthogonal projection `Pi`.
fn msto_projection(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let g_range = h * g * 0.5;
    let g_null = g - &g_range;
    let null_sq = g_null.norm_squared();
    if null_sq >= lambda * lambda {
        return Err(Error::Numerical(
            "msto unbounded: null-space part of g exceeds lambda".into(),
        ));
    }
    let rn = g_range.norm();
    // gamma / (2 + gamma) = a
    let a = (lambda * lambda - null_sq).sqrt() / rn;
    let gamma = 2.0 * a / (1.0 - a);
    Ok(-(g_range / (2.0 + gamma) + g_null / gamma))
}

/// `||H o + g + lambda o/||o|| ||` (or `max(0, ||g|| - lambda)` at `o = 0`).
pub fn msto_residual(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64, o: &DVector<f64>) -> f64 {
    let on = o.norm();
    if on == 0.0 {
        return (g.norm() - lambda).max(0.0);
    }
    (h * o + g + o * (lambda / on)).norm()
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    /// `p x q`; not kept orthonormal unless `reorth_every` is set.
    pub u: DMatrix<f64>,
    /// `q x q` inverse weighted Gram of the scores.
    pub p: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub beta: f64,
    pub lambda2: f64,
    /// Time index of the last processed datum.
    pub n: usize,
    /// `sum_i beta^{n-i}`, the normaliser of the running mean.
    pub weight: f64,
    pub reorth_every: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub s: DVector<f64>,
    pub o: DVector<f64>,
    pub is_outlier: bool,
    /// `||x - m - U s - o||^2 / p` with the pre-update `m`, `U`.
    pub reconstruction_error: f64,
}

impl TrackerState {
    /// Start tracking from a known model. `n0` data were summarised to get
    /// `u` and `mean`; `P = p0_scale * I_q`.
    pub fn new(u: DMatrix<f64>, mean: DVector<f64>, beta: f64, lambda2: f64, n0: usize, p0_scale: f64) -> Result<Self> {
        if u.nrows() != mean.len() {
            return Err(dims("subspace and mean disagree on p"));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(invalid("beta must lie in (0, 1]"));
        }
        if !(lambda2 > 0.0) {
            return Err(invalid("lambda2 must be positive (use infinity to disable)"));
        }
        if !(p0_scale > 0.0) {
            return Err(invalid("P(n0) scale must be positive"));
        }
        let weight = if beta == 1.0 {
            n0 as f64
        } else {
            (1.0 - beta.powi(n0 as i32)) / (1.0 - beta)
        };
        let q = u.ncols();
        Ok(Self {
            u,
            p: DMatrix::identity(q, q) * p0_scale,
            mean,
            beta,
            lambda2,
            n: n0,
            weight,
            reorth_every: None,
        })
    }

    /// Outlier estimate for `x` against the current model.
    fn outlier(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        let p = r.len();
        if self.lambda2.is_infinite() {
            return Ok(DVector::zeros(p));
        }
        // M = I - U U'; g = -2 M'M r without forming H unless needed.
        let mr = r - &self.u * (self.u.transpose() * r);
        let g = -2.0 * (&mr - &self.u * (self.u.transpose() * &mr));
        if g.norm() <= self.lambda2 {
            return Ok(DVector::zeros(p));
        }
        let m = DMatrix::identity(p, p) - &self.u * self.u.transpose();
        let h = m.transpose() * &m * 2.0;
        msto(&h, &g, self.lambda2)
    }

    /// Process one datum and advance the state.
    pub fn step(&mut self, x: &DVector<f64>) -> Result<StepOutput> {
        if x.len() != self.mean.len() {
            return Err(dims("datum length differs from p"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stream datum"));
        }
        let r = x - &self.mean;
        let o = self.outlier(&r)?;
        let compensated = &r - &o;
        let s = self.u.transpose() * &compensated;
        let e = &compensated - &self.u * &s;

        let ps = &self.p * &s;
        let k = &ps / (self.beta + s.dot(&ps));
        self.p = (&self.p - &k * ps.transpose()) / self.beta;
        self.p = (&self.p + self.p.transpose()) * 0.5;
        self.u += &e * k.transpose();

        let w = self.beta * self.weight + 1.0;
        self.mean = (&self.mean * (self.beta * self.weight) + (x - &o)) / w;
        self.weight = w;
        self.n += 1;
        if let Some(t) = self.reorth_every {
            if t > 0 && self.n.is_multiple_of(t) {
                self.u = orthonormal_basis(&self.u);
            }
        }

        let is_outlier = o.norm() > 0.0;
        Ok(StepOutput {
            reconstruction_error: e.norm_squared() / x.len() as f64,
            s,
            o,
            is_outlier,
        })
    }

    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.u)
    }
}

/// Functional form of [`TrackerState::step`].
pub fn tracker_step(state: &TrackerState, x: &DVector<f64>) -> Result<(StepOutput, TrackerState)> {
    let mut next = state.clone();
    let out = next.step(x)?;
    Ok((out, next))
}

/// How the initial batch picks `lambda2`.
#[derive(Debug, Clone)]
pub enum Lambda2Rule {
    Fixed(f64),
    /// Non-robust tracking: `lambda2 = infinity`, plain PCA start.
    Infinite,
    /// Path over `grid_size` points down to `eps * lambda_max`, then pick by
    /// flagged-row count.
    Count {
        n_outliers: usize,
        grid_size: usize,
        eps: f64,
    },
    /// Same path, pick by the noise-covariance rule.
    NoiseCov {
        sigma_e: DMatrix<f64>,
        grid_size: usize,
        eps: f64,
    },
}

#[derive(Debug, Clone)]
pub struct TrackerInit {
    pub beta: f64,
    pub rule: Lambda2Rule,
    pub batch: SolverOptions,
    pub p0_scale: f64,
    pub reorth_every: Option<usize>,
}

impl Default for TrackerInit {
    fn default() -> Self {
        Self {
            beta: 0.99,
            rule: Lambda2Rule::Fixed(1.65),
            batch: SolverOptions::default(),
            p0_scale: 1e3,
            reorth_every: None,
        }
    }
}

/// Batch phase on the first `n0` rows, returning the tracker and the
/// `lambda2` it will keep.
pub fn init_tracker(x_init: &DataMatrix, q: usize, init: &TrackerInit) -> Result<(TrackerState, f64)> {
    let n0 = x_init.n_rows();
    if n0 < q {
        return Err(invalid(format!("need at least q = {q} initial rows, got {n0}")));
    }
    let kind = RegularizerKind::RowL2;
    let path_grid = |grid_size: usize, eps: f64| -> Result<Vec<f64>> {
        let lmax = estimate_lambda_max(x_init, q, kind)?;
        if lmax <= 0.0 {
            return Err(invalid("initial batch is exactly low rank; lambda2 cannot be selected"));
        }
        lambda_grid(lmax * LAMBDA_MAX_MARGIN, eps, grid_size)
    };
    let (model, lambda2) = match &init.rule {
        Lambda2Rule::Infinite => (pca(x_init, q)?, f64::INFINITY),
        Lambda2Rule::Fixed(l) => (fit_batch(x_init, q, *l, kind, &init.batch, None)?.model, *l),
        Lambda2Rule::Count {
            n_outliers,
            grid_size,
            eps,
        } => {
            let path = compute_path(x_init, q, &path_grid(*grid_size, *eps)?, kind, &init.batch)?;
            let sel = select_by_count(&path, *n_outliers)?;
            (sel.fit.model, sel.lambda2)
        }
        Lambda2Rule::NoiseCov {
            sigma_e,
            grid_size,
            eps,
        } => {
            let path = compute_path(x_init, q, &path_grid(*grid_size, *eps)?, kind, &init.batch)?;
            let sel = select_by_noise_cov(&path, x_init, sigma_e)?;
            (sel.fit.model, sel.lambda2)
        }
    };
    let mut state = TrackerState::new(
        orthonormal_basis(&model.subspace),
        model.mean,
        init.beta,
        lambda2,
        n0,
        init.p0_scale,
    )?;
    state.reorth_every = init.reorth_every;
    Ok((state, lambda2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamMetrics {
    pub n: usize,
    pub outlier_norm: f64,
    /// Largest principal angle to the reference subspace, if one was given.
    pub angle: Option<f64>,
    pub reconstruction_error: f64,
}

/// Feed every row of `stream` through the tracker.
pub fn run_stream(
    state: &mut TrackerState,
    stream: &DMatrix<f64>,
    truth: Option<&DMatrix<f64>>,
) -> Result<Vec<StreamMetrics>> {
    if let Some(t) = truth {
        if t.nrows() != state.u.nrows() {
            return Err(dims("reference subspace has wrong p"));
        }
    }
    let mut out = Vec::with_capacity(stream.nrows());
    for row in stream.row_iter() {
        let step = state.step(&row.transpose())?;
        let angle = match truth {
            Some(t) => Some(subspace_angle(&orthonormal_basis(&state.u), t)?),
            None => None,
        };
        out.push(StreamMetrics {
            n: state.n,
            outlier_norm: step.o.norm(),
            angle,
            reconstruction_error: step.reconstruction_error,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::row_soft_threshold;
    use crate::rng::{normal_matrix, seeded};
    use proptest::prelude::*;

    fn msto_cost(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64, o: &DVector<f64>) -> f64 {
        0.5 * (o.transpose() * h * o)[0] + g.dot(o) + lambda * o.norm()
    }

    #[test]
    fn msto_examples() {
        let h = DMatrix::identity(2, 2) * 2.0;
        let o = msto(&h, &DVector::from_vec(vec![-6.0, -8.0]), 2.0).unwrap();
        assert!((o - DVector::from_vec(vec![2.4, 3.2])).norm() < 1e-12);
        let small = DVector::from_vec(vec![0.6, 0.8]);
        assert_eq!(msto(&h, &small, 1.0).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn msto_projection_case_is_analytic() {
        let mut rng = seeded(1);
        let u = orthonormal_basis(&normal_matrix(&mut rng, 6, 2, 1.0));
        let m = DMatrix::identity(6, 6) - &u * u.transpose();
        let h = &m * 2.0;
        let g = &m * normal_matrix(&mut rng, 6, 1, 3.0).column(0);
        let lambda = 0.7;
        let gn = g.norm();
        assert!(gn > lambda);
        let eta = lambda * (gn - lambda) / 4.0;
        let gamma = lambda * lambda / (2.0 * eta);
        let expected = -&g / (2.0 + gamma);
        let fast = msto(&h, &g, lambda).unwrap();
        assert!((&fast - &expected).norm() < 1e-12);
        // The general eigen path agrees when the fast path is bypassed.
        let perturbed = &h + DMatrix::identity(6, 6) * 1e-7;
        let slow = msto(&perturbed, &g, lambda).unwrap();
        assert!((slow - &expected).norm() < 1e-5);
        // Independent check: minimise the 1-D objective in eta on a fine grid.
        let phi = |eta: f64| {
            let a = (&h * (2.0 * eta) + DMatrix::identity(6, 6) * (lambda * lambda))
                .try_inverse()
                .unwrap();
            (1.0 - (g.transpose() * a * &g)[0]) * eta
        };
        let best = (1..=20000)
            .map(|k| eta * k as f64 / 10000.0)
            .min_by(|a, b| phi(*a).total_cmp(&phi(*b)))
            .unwrap();
        assert!((best - eta).abs() <= eta * 2e-4, "{best} vs {eta}");
    }

    #[test]
    fn msto_unbounded_is_reported() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let g = DVector::from_vec(vec![0.1, 2.0]);
        assert!(matches!(msto(&h, &g, 1.0), Err(Error::Numerical(_))));
        assert!(msto(&h, &g, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn msto_optimality_on_random_psd(
            seed in 0u64..10_000,
            rank in 1usize..=5,
            lambda in 0.05f64..3.0,
        ) {
            let mut rng = seeded(seed);
            let p = 5;
            let a = normal_matrix(&mut rng, p, rank, 1.0);
            let h = &a * a.transpose();
            // Keep g in the range of H so the problem is bounded.
            let g = &h * normal_matrix(&mut rng, p, 1, 2.0).column(0);
            match msto(&h, &g, lambda) {
                Ok(o) => {
                    prop_assert!(msto_residual(&h, &g, lambda, &o) <= 1e-6 * (1.0 + g.norm()));
                    let base = msto_cost(&h, &g, lambda, &o);
                    for _ in 0..20 {
                        let d = normal_matrix(&mut rng, p, 1, 1e-3).column(0).into_owned();
                        prop_assert!(msto_cost(&h, &g, lambda, &(&o + d)) >= base - 1e-12);
                    }
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn msto_with_2i_is_row_threshold(g in proptest::collection::vec(-5.0f64..5.0, 4), lambda in 0.05f64..6.0) {
            let g = DVector::from_vec(g);
            let o = msto(&(DMatrix::identity(4, 4) * 2.0), &g, lambda).unwrap();
            let expected = row_soft_threshold(&(-&g / 2.0), lambda / 2.0);
            prop_assert!((o - expected).norm() <= 1e-10);
        }
    }

    fn truth(p: usize, q: usize, seed: u64) -> DMatrix<f64> {
        orthonormal_basis(&normal_matrix(&mut seeded(seed), p, q, 1.0))
    }

    #[test]
    fn in_span_datum_is_clean() {
        let u = truth(8, 2, 2);
        let m = DVector::from_fn(8, |i, _| i as f64 * 0.1);
        let mut st = TrackerState::new(u.clone(), m.clone(), 0.95, 0.5, 10, 1e3).unwrap();
        let s_true = DVector::from_vec(vec![1.5, -0.7]);
        let out = st.step(&(&m + &u * &s_true)).unwrap();
        assert!(!out.is_outlier);
        assert_eq!(out.o.norm(), 0.0);
        assert!((out.s - s_true).norm() < 1e-12);
        assert!(out.reconstruction_error <= 1e-10);
        assert_eq!(st.lambda2, 0.5);
    }

    #[test]
    fn gross_outlier_is_flagged() {
        let (p, q) = (150, 5);
        let u = truth(p, q, 3);
        let mut rng = seeded(4);
        let mut st = TrackerState::new(u.clone(), DVector::zeros(p), 0.99, 1.65, 100, 1e3).unwrap();
        // With P(n0) = 1e3 I the first ~q steps refit U from a handful of
        // points; nominal data can be flagged during that transient.
        for k in 0..70 {
            let y = &u * normal_matrix(&mut rng, q, 1, 1.0).column(0)
                + normal_matrix(&mut rng, p, 1, 1e-3f64.sqrt()).column(0);
            let flagged = st.step(&y).unwrap().is_outlier;
            assert!(k < 50 || !flagged, "nominal datum {k} flagged");
        }
        use rand::Rng;
        let x = DVector::from_fn(p, |_, _| rng.random_range(-0.5..0.5));
        let out = st.step(&x).unwrap();
        assert!(out.is_outlier);
        assert_eq!(st.lambda2, 1.65);
    }

    /// Direct weighted least squares with the `P(n0)` prior, the quantity the
    /// recursion tracks.
    fn direct_rls(
        u0: &DMatrix<f64>,
        p0: &DMatrix<f64>,
        beta: f64,
        hist: &[(DVector<f64>, DVector<f64>)],
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let k = hist.len() as i32;
        let p0inv = p0.clone().try_inverse().unwrap();
        let mut gram = &p0inv * beta.powi(k);
        let mut cross = u0 * &p0inv * beta.powi(k);
        for (i, (d, s)) in hist.iter().enumerate() {
            let w = beta.powi(k - 1 - i as i32);
            gram += s * s.transpose() * w;
            cross += d * s.transpose() * w;
        }
        let p = gram.try_inverse().unwrap();
        (&cross * &p, p)
    }

    #[test]
    fn recursion_matches_direct_inversion() {
        for beta in [0.9, 1.0] {
            let (p, q) = (7, 2);
            let mut rng = seeded(5);
            let u0 = truth(p, q, 6);
            let mut st = TrackerState::new(u0.clone(), DVector::zeros(p), beta, f64::INFINITY, 5, 1e3).unwrap();
            let p0 = st.p.clone();
            let mut hist = Vec::new();
            for _ in 0..10 {
                let x = normal_matrix(&mut rng, p, 1, 1.0).column(0).into_owned();
                let m_prev = st.mean.clone();
                let out = st.step(&x).unwrap();
                assert_eq!(out.o.norm(), 0.0);
                hist.push((x - m_prev - out.o, out.s));
            }
            let (u_direct, p_direct) = direct_rls(&u0, &p0, beta, &hist);
            assert!((&st.p - p_direct).norm() <= 1e-6 * st.p.norm().max(1.0), "beta {beta}");
            assert!((&st.u - u_direct).norm() <= 1e-8 * st.u.norm(), "beta {beta}");
        }
    }

    #[test]
    fn running_mean_is_weighted_average() {
        let p = 3;
        let beta = 0.8;
        let mut st = TrackerState::new(
            DMatrix::identity(p, 1),
            DVector::from_element(p, 1.0),
            beta,
            f64::INFINITY,
            4,
            1e3,
        )
        .unwrap();
        let w0 = (1.0 - beta.powi(4)) / (1.0 - beta);
        let xs: Vec<DVector<f64>> = (0..6).map(|i| DVector::from_element(p, i as f64)).collect();
        let mut num = DVector::from_element(p, 1.0) * w0;
        let mut den = w0;
        for x in &xs {
            st.step(x).unwrap();
            num = num * beta + x;
            den = den * beta + 1.0;
        }
        assert!((st.mean - num / den).norm() < 1e-12);
    }

    #[test]
    fn p_stays_symmetric_over_long_runs() {
        let (p, q) = (10, 3);
        let u = truth(p, q, 7);
        let mut rng = seeded(8);
        let mut st = TrackerState::new(u.clone(), DVector::zeros(p), 0.99, 1.0, 50, 1e3).unwrap();
        let stream = normal_matrix(&mut rng, 10_000, q, 1.0) * u.transpose() + normal_matrix(&mut rng, 10_000, p, 0.03);
        run_stream(&mut st, &stream, None).unwrap();
        assert!((&st.p - st.p.transpose()).norm() <= 1e-10);
        assert_eq!(st.n, 10_050);
    }

    #[test]
    fn infinite_lambda_is_plain_tracker() {
        let (p, q) = (6, 2);
        let u = truth(p, q, 9);
        let mut st = TrackerState::new(u, DVector::zeros(p), 0.9, f64::INFINITY, 3, 1e3).unwrap();
        let out = st.step(&DVector::from_element(p, 100.0)).unwrap();
        assert!(!out.is_outlier);
    }

    #[test]
    fn bad_inputs() {
        let u = truth(4, 1, 10);
        assert!(TrackerState::new(u.clone(), DVector::zeros(4), 0.0, 1.0, 1, 1e3).is_err());
        assert!(TrackerState::new(u.clone(), DVector::zeros(4), 1.1, 1.0, 1, 1e3).is_err());
        assert!(TrackerState::new(u.clone(), DVector::zeros(3), 0.9, 1.0, 1, 1e3).is_err());
        let mut st = TrackerState::new(u, DVector::zeros(4), 0.9, 1.0, 1, 1e3).unwrap();
        assert!(matches!(
            st.step(&DVector::from_element(4, f64::NAN)),
            Err(Error::NonFinite(_))
        ));
        let x = DataMatrix::new(DMatrix::zeros(2, 4)).unwrap();
        assert!(init_tracker(&x, 3, &TrackerInit::default()).is_err());
    }

    #[test]
    fn init_on_clean_batch_recovers_subspace() {
        let (p, q) = (20, 3);
        let u = truth(p, q, 11);
        let mut rng = seeded(12);
        let x = normal_matrix(&mut rng, 60, q, 1.0) * u.transpose() + normal_matrix(&mut rng, 60, p, 1e-5);
        let x = DataMatrix::new(x).unwrap();
        let init = TrackerInit {
            batch: SolverOptions {
                max_iters: 500,
                rel_tol: 1e-12,
                ..Default::default()
            },
            ..Default::default()
        };
        let (st, l2) = init_tracker(&x, q, &init).unwrap();
        assert_eq!(l2, 1.65);
        assert!(subspace_angle(&st.u, &u).unwrap() <= 1e-3);
        assert_eq!(st.p, DMatrix::identity(q, q) * 1e3);
        assert_eq!(st.n, 60);
    }

    #[test]
    fn functional_step_leaves_input_untouched() {
        let st = TrackerState::new(truth(5, 1, 13), DVector::zeros(5), 0.9, 1.0, 2, 1e3).unwrap();
        let (_, next) = tracker_step(&st, &DVector::from_element(5, 0.3)).unwrap();
        assert_eq!(st.n, 2);
        assert_eq!(next.n, 3);
    }
}
