//! Numerical oracles: fixed-step RK4, flow-commutator brackets, flow-box
//! first integrals, damped Newton and finite differences of sampled signals.

mod flowbox;
mod newton;
mod ode;
mod signal;

pub use flowbox::{flow_box_integrals, FlowBox};
pub use newton::{newton, NewtonOptions, NewtonResult};
pub use ode::{bracket_fd_oracle, flow, integrate, rk4_step, CompiledField, CompiledSystem, Trajectory, DEFAULT_DT};
pub use signal::{fd_derivatives, fornberg_weights, FlatSignal};

use crate::symbolic::EvalError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("flow left the evaluation domain")]
    FlowEscaped,
    #[error("flow did not reach the transversal within the time budget")]
    NoTransversalHit,
    #[error("Newton iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
