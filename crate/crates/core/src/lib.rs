//! Bi-criteria approximation algorithms for PCA in the presence of
//! adversarial outlier columns.
//!
//! Given a d×n matrix, a target rank k, and an outlier budget m, the goal
//! is to discard at most m columns so that the remaining columns admit the
//! best possible rank-k approximation. Two solvers are provided: an
//! iterative SVD that trades extra subspace dimensions and extra outliers
//! for a (1+ε) objective guarantee, and a recursive uniform-sampling
//! column-selection scheme whose output space is spanned by actual columns
//! of the input. An exact brute-force oracle, instance generators, and an
//! experiment harness round out the crate.

pub mod error;
pub mod harness;
pub mod instances;
pub mod itersvd;
pub mod lp;
pub mod matrix;
pub mod oracle;
pub mod sampling;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, Subspace};
pub use oracle::{Partition, SolveParams};
