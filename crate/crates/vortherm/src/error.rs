//! Error type shared across the crate.

use thiserror::Error;

/// Failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user input (degenerate rectangle, zero cell counts, bad tags, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A polynomial order or quadrature degree beyond what is implemented.
    #[error("{what} {requested} not supported (maximum is {max})")]
    Unsupported {
        what: &'static str,
        requested: usize,
        max: usize,
    },

    /// Vector/matrix dimensions do not match the expected layout.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Spaces built over different meshes were combined.
    #[error("spaces do not share a common mesh")]
    MeshMismatch,

    /// The linear solver met a (numerically) singular matrix or produced a
    /// solution whose algebraic residual is above the acceptance threshold.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// A nonlinear iteration exhausted its iteration budget.
    #[error("{method} did not converge in {iterations} iterations (history: {history:?})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        history: Vec<f64>,
    },

    /// File output failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A failure annotated with where it happened (refinement level, config
    /// line, ...).
    #[error("{context}: {source}")]
    WithContext {
        context: String,
        source: Box<Error>,
    },
}
