use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants are grouped so that callers (the CLI in particular) can map them
/// onto stable exit codes: configuration problems, synthesis infeasibility,
/// runtime infeasibility and numerical failures are kept apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration field failed validation. `path` is a JSON-pointer-like
    /// location such as `system.B` or `D.vertices[2]`.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// An offline synthesis step (deadbeat vertex OCP, tightening, invariant
    /// set) has no solution for the given data.
    #[error("synthesis infeasible: {0}")]
    SynthesisInfeasible(String),

    /// The online problem became infeasible during a closed-loop run.
    #[error("runtime infeasibility at step {step}: {message}")]
    RuntimeInfeasible { step: usize, message: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
