//! Black-box Gaussian variational inference with exact natural gradients on the
//! manifold of symmetric positive-definite precision matrices.
//!
//! The optimizer ([`optimizer::run`]) updates the variational mean and precision
//! with score-function gradient estimates, a second-order retraction and vector
//! transport of the momentum. [`optimizer::OptimizerKind::Mgvb`] runs the
//! covariance-space baseline with the same loop.

// `!(x > 0.0)` guards reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod harness;
pub mod models;
pub mod optimizer;
pub mod spd;

pub use error::{Error, Result};
pub use gaussian::{PosteriorStructure, VariationalState};
pub use optimizer::{run, OptimizerKind, TrainerConfig};
