use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid fractional order: {0}")]
    InvalidOrder(String),

    #[error("grid function has invalid node {node}")]
    InvalidNode { node: usize },

    #[error("grid function has {count} invalid nodes at the {side} endpoint; at most one can be patched")]
    UnpatchableEndpoint { side: &'static str, count: usize },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("evaluation failed at node {node}: {source}")]
    EvalAt { node: usize, source: EvalError },

    #[error("expression may only reference {allowed}, found `{found}`")]
    ForbiddenVariable { allowed: String, found: String },

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("singular jacobian (|det| = {det:.3e}); the nondegeneracy condition fails")]
    SingularJacobian { det: f64 },

    #[error("no convergence after {iterations} iterations (last norm {norm:.3e})")]
    NoConvergence { iterations: usize, norm: f64 },

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("coordinate {index} is not cyclic: dL/dq{index} = {derivative}")]
    NotCyclic { index: usize, derivative: String },

    #[error("malformed csv at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularJacobian { .. } | Error::NoConvergence { .. } | Error::LineSearch(_)
        )
    }
}
