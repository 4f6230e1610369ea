//! Seeded randomness.
//!
//! Every randomized routine draws from [`seeded`], a ChaCha8 stream keyed by a
//! 64-bit seed. ChaCha output is specified independently of platform and word
//! size, so identical seeds give bit-identical draws everywhere.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Column-major fill of an `nrows x ncols` matrix with `scale * N(0, 1)` draws.
pub fn normal_matrix(rng: &mut Rng, nrows: usize, ncols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Random factor initialisation shared by the rank-controlled and kernel
/// solvers: i.i.d. normal entries scaled by `1/sqrt(qbar)`.
pub fn random_scores(n: usize, qbar: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    normal_matrix(&mut rng, n, qbar, 1.0 / (qbar as f64).sqrt())
}
