//! Robust principal component analysis by controlling outlier sparsity.
//!
//! Batch, rank-regularised, streaming and kernel solvers share one model:
//! each datum is a low-rank factor term plus noise plus an optional outlier
//! vector, and a group-lasso (or lasso) penalty decides which data are
//! flagged.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod datagen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod online;
pub mod oracle;
pub mod path;
pub mod prox;
pub mod rank;
pub mod rng;

pub use error::{Error, Result};
pub use model::{DataMatrix, FactorModel, OutlierMatrix, RegularizerKind, SolverOptions};
