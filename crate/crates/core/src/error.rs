use crate::geometry::GeometryError;
use crate::numeric::NumericError;
use crate::symbolic::{EvalError, ParseError, SymbolicError};

/// Errors raised by the flatness pipelines and the analysis front end.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
    #[error("Γᵃ_{level} is not involutive: witness [{witness}]")]
    NotInvolutive { level: usize, witness: String },
    #[error("{0}")]
    Unsupported(String),
    #[error("recovery failed at t = {t}: {reason}")]
    RecoveryFailed { t: f64, reason: NumericError },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
