//! Seeded synthetic data: low rank plus sparse outliers, binary item
//! responses from a two-parameter logistic model, and noisy concentric rings.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};

use crate::error::{invalid, Result};
use crate::rng::{normal_matrix, seeded};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Probability that an entry carries an outlier.
    pub rho: f64,
    pub sigma2: f64,
    pub outlier_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 200,
            p: 200,
            q: 20,
            rho: 0.01,
            sigma2: 0.01,
            outlier_range: (-5.0, 5.0),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return Err(invalid("dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(invalid("rho must lie in [0, 1]"));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(invalid("sigma2 must be non-negative"));
        }
        let (lo, hi) = self.outlier_range;
        if !(lo < hi) {
            return Err(invalid("outlier range must be a non-empty interval"));
        }
        Ok(())
    }

    /// Variance of the entries of `U` and `S`: `10 sigma_e / sqrt(N)`.
    pub fn factor_variance(&self) -> f64 {
        10.0 * self.sigma2.sqrt() / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct LowRankSample {
    /// `(L + E) + O`.
    pub x: DMatrix<f64>,
    /// `S U'`.
    pub l: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub o: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// Low rank plus Gaussian noise plus Bernoulli-masked uniform outliers.
pub fn gen_lowrank_outliers(spec: &SynthSpec) -> Result<LowRankSample> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let sd = spec.factor_variance().sqrt();
    let u = normal_matrix(&mut rng, spec.p, spec.q, sd);
    let s = normal_matrix(&mut rng, spec.n, spec.q, sd);
    let e = normal_matrix(&mut rng, spec.n, spec.p, spec.sigma2.sqrt());
    let mask = Bernoulli::new(spec.rho).map_err(|e| invalid(e.to_string()))?;
    let (lo, hi) = spec.outlier_range;
    let vals = Uniform::new(lo, hi).map_err(|e| invalid(e.to_string()))?;
    // Draw mask and value for every entry so streams do not depend on rho.
    let mut o = DMatrix::zeros(spec.n, spec.p);
    for i in 0..spec.n {
        for j in 0..spec.p {
            let hit = mask.sample(&mut rng);
            let v = vals.sample(&mut rng);
            if hit {
                o[(i, j)] = v;
            }
        }
    }
    let l = &s * u.transpose();
    let x = (&l + &e) + &o;
    Ok(LowRankSample { x, l, e, o, u, s })
}

#[derive(Debug, Clone)]
pub struct IrtParams {
    /// Discrimination per item.
    pub a: Vec<f64>,
    /// Difficulty per item.
    pub b: Vec<f64>,
    /// `N x q` latent traits.
    pub theta: DMatrix<f64>,
    /// Factor each item loads on (`m mod q`).
    pub factor: Vec<usize>,
}

/// `Pr(y = 1) = 1 / (1 + exp(-1.7 a (theta - b)))`.
pub fn irt_probability(a: f64, theta: f64, b: f64) -> f64 {
    1.0 / (1.0 + (-1.7 * a * (theta - b)).exp())
}

/// Binary responses of `n` subjects to `p` items; each item loads on one of
/// `q` factors in turn.
pub fn gen_irt_2plm(n: usize, p: usize, q: usize, seed: u64) -> Result<(DMatrix<f64>, IrtParams)> {
    if n == 0 || p == 0 || q == 0 {
        return Err(invalid("dimensions must be positive"));
    }
    let mut rng = seeded(seed);
    let a: Vec<f64> = (0..p).map(|_| rng.random_range(1.0..1.5)).collect();
    let b: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let theta = normal_matrix(&mut rng, n, q, 1.0);
    let factor: Vec<usize> = (0..p).map(|m| m % q).collect();
    let mut y = DMatrix::zeros(n, p);
    for i in 0..n {
        for m in 0..p {
            let pr = irt_probability(a[m], theta[(i, factor[m])], b[m]);
            let u: f64 = rng.random();
            if pr >= u {
                y[(i, m)] = 1.0;
            }
        }
    }
    Ok((y, IrtParams { a, b, theta, factor }))
}

/// Redraw the listed rows as independent Bernoulli(`rate`) entries.
pub fn inject_random_responders(y: &DMatrix<f64>, rows: &[usize], rate: f64, seed: u64) -> Result<DMatrix<f64>> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= y.nrows()) {
        return Err(invalid(format!("row {bad} out of range for {} rows", y.nrows())));
    }
    let coin = Bernoulli::new(rate).map_err(|e| invalid(e.to_string()))?;
    let mut rng = seeded(seed);
    let mut x = y.clone();
    for &i in rows {
        for j in 0..x.ncols() {
            x[(i, j)] = if coin.sample(&mut rng) { 1.0 } else { 0.0 };
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentricSpec {
    pub counts: Vec<usize>,
    pub radii: Vec<f64>,
    /// Per-coordinate noise variance.
    pub sigma2: f64,
    pub n_outliers: usize,
    /// Outliers are uniform on `[-box, box]^2`.
    pub half_width: f64,
    pub seed: u64,
}

impl Default for ConcentricSpec {
    fn default() -> Self {
        Self {
            counts: vec![150; 3],
            radii: vec![1.0, 2.8, 5.0],
            sigma2: 0.15,
            n_outliers: 5,
            half_width: 7.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Concentric {
    /// Ring points first, outliers appended.
    pub x: DMatrix<f64>,
    /// Ring index per row; outliers get `radii.len()`.
    pub labels: Vec<usize>,
    pub outliers: Vec<usize>,
}

pub fn gen_concentric(spec: &ConcentricSpec) -> Result<Concentric> {
    if spec.counts.len() != spec.radii.len() {
        return Err(invalid("one count per ring radius"));
    }
    if spec.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("radii must be positive"));
    }
    if !(spec.sigma2 >= 0.0) || !(spec.half_width > 0.0) {
        return Err(invalid("noise variance must be >= 0 and box half-width > 0"));
    }
    let mut rng = seeded(spec.seed);
    let noise = Normal::new(0.0, spec.sigma2.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let ring_total: usize = spec.counts.iter().sum();
    let n = ring_total + spec.n_outliers;
    let mut x = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (ring, (&count, &r)) in spec.counts.iter().zip(&spec.radii).enumerate() {
        for _ in 0..count {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            x[(row, 0)] = r * t.cos() + noise.sample(&mut rng);
            x[(row, 1)] = r * t.sin() + noise.sample(&mut rng);
            labels.push(ring);
            row += 1;
        }
    }
    let h = spec.half_width;
    for _ in 0..spec.n_outliers {
        x[(row, 0)] = rng.random_range(-h..h);
        x[(row, 1)] = rng.random_range(-h..h);
        labels.push(spec.radii.len());
        row += 1;
    }
    Ok(Concentric {
        x,
        labels,
        outliers: (ring_total..n).collect(),
    })
}
