//! Separable quaternion matrix factorization for polarized signals.
//!
//! A polarized data set is a quaternion matrix `M` whose entries are Stokes
//! vectors. When every source appears unmixed in at least one column, `M`
//! factors as `M = M(:, K) H` with `H` real and nonnegative. This crate finds
//! `K` with quaternion successive projection ([`qspa`]), fits `H` with
//! projected or hierarchical nonnegative least squares ([`nnls`]), and
//! provides the baselines, synthetic data and metrics used to evaluate them.

mod conic;
pub mod bench;
pub mod error;
pub mod factorize;
pub mod fixtures;
pub mod io;
pub mod metrics;
pub mod nnls;
pub mod qspa;
pub mod quat;
pub mod stokes;
pub mod synth;

pub use error::{Result, SqmfError};
pub use quat::{Quaternion, QuaternionMatrix, QuaternionVector};
pub use nalgebra;
