//! Vector fields, Lie brackets, field matrices, distributions and
//! control-affine systems.

mod distribution;
mod field;
mod matrix;
mod system;

pub use distribution::{bracket_round, involutive_closure, involutive_closure_at, is_involutive, Distribution, Involutivity, RankMode};
pub use field::{ad_power, lie_bracket, lie_derivative, FieldDisplay, Frame, VectorField};
pub use matrix::{Evaluated, FieldMatrix, FLOAT_RANK_TOL};
pub use system::{system_field_g, wronskian_matrix, ControlAffineSystem};

use crate::symbolic::{EvalError, SymbolicError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("vector fields are over different frames")]
    FrameMismatch,
    #[error("expected {expected} entries, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("empty generator list")]
    Empty,
    #[error("evaluation failed at every sample point")]
    AllSamplesFailed,
    #[error("involutive closure did not stabilize within {0} steps")]
    ClosureBudget(usize),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}
