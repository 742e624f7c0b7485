//! Sparse subspace clustering with selective support extension.
//!
//! The pipeline codes each point as a sparse combination of the others
//! ([`solvers`]), optionally extends each code's support with further
//! same-subspace points ([`selective`]), turns the codes into a graph
//! ([`graph`]) and partitions it spectrally. [`synth`] generates the
//! benchmark geometries and [`oracle`] holds brute-force references used to
//! check the solvers.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod selective;
pub mod solvers;
pub mod synth;

pub use error::{Result, SscError};
pub use linalg::{PointCloud, SubspaceBasis};
pub use solvers::{CoefficientMatrix, Estimator, PenaltyForm, SolverSettings, SparseSolution};
