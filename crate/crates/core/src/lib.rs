//! Sparse concept erasure for linear projection matrices.
//!
//! Given a projection `W°` and erase/guide/preserve concept embeddings, the
//! crate computes the dense closed-form edit and the L1-penalized edit found by
//! FISTA, whose exact zeros make the result cheap to store in CSR form. The
//! numerical core is generic over [`Scalar`] (`f32` or `f64`); the solver is
//! normally run at `f64` and results are stored at `f32`.

pub mod error;
pub mod harness;
pub mod matrix;
pub mod objective;
pub mod scalar;
pub mod solver;
pub mod storage;

pub use error::{Result, SpaceError};
pub use matrix::{CsrMatrix, DenseMatrix};
pub use objective::{ConceptMatrices, ErasureObjective, LossWeights};
pub use scalar::Scalar;
pub use solver::{solve, Algorithm, SolveTrace, SolverConfig, SolverState};

/// Solver-precision matrix.
pub type Matrix = DenseMatrix<f64>;
/// Storage-precision matrix.
pub type StorageMatrix = DenseMatrix<f32>;
pub type SparseMatrix = CsrMatrix<f32>;
pub type Concepts = ConceptMatrices<f64>;
pub type Objective = ErasureObjective<f64>;
pub type Config = SolverConfig<f64>;
pub type Trace = SolveTrace<f64>;
