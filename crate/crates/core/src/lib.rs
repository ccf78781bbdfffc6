pub mod accessibility;
pub mod atlas;
pub mod ansatz;
pub mod error;
pub mod flat_degenerate;
pub mod flat_generic;
pub mod geometry;
pub mod linalg;
pub mod numeric;
pub mod sampling;
pub mod symbolic;

pub use error::{Error, Result};
