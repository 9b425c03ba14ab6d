//! Likelihoods, priors and parameter transforms.

pub mod conjugate;
pub mod density;
pub mod linreg;
pub mod logistic;
pub mod prior;
pub mod transforms;
pub mod volatility;

use nalgebra::DVector;

use crate::error::Result;

pub use conjugate::ConjugateGaussian;
pub use linreg::LinearRegression;
pub use logistic::LogisticRegression;
pub use prior::{prior_logpdf, PriorPrecision, PriorSpec};
pub use transforms::{CoordTransform, ParamTransform};
pub use volatility::{VolatilityFamily, VolatilityModel, VolatilitySpec};

/// A likelihood over unconstrained parameters.
///
/// `log_likelihood(psi)` evaluates `log p(y | T(psi))`; the transform absorbs
/// all parameter constraints. Implementations hold their data and must be
/// safe to evaluate from several threads at once.
pub trait Model: Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn transform(&self) -> ParamTransform;
    fn log_likelihood(&self, psi: &DVector<f64>) -> Result<f64>;

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("theta{i}")).collect()
    }
}
