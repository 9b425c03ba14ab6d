//! Maps between the unconstrained space where the Gaussian lives and the
//! constrained space of model parameters.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic map `e^x / (1 + e^x)`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`].
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// `log sigmoid'(x)`.
pub fn log_sigmoid_prime(x: f64) -> f64 {
    -softplus(x) - softplus(-x)
}

/// Scalar bijection applied to one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordTransform {
    Identity,
    /// `(0, inf)` through `exp`.
    Exp,
    /// `(0, 1)` through the logistic map.
    Sigmoid,
    /// `(lo, hi)` through an affine logistic map.
    Interval { lo: f64, hi: f64 },
}

impl CoordTransform {
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            CoordTransform::Identity => x,
            CoordTransform::Exp => x.exp(),
            CoordTransform::Sigmoid => sigmoid(x),
            CoordTransform::Interval { lo, hi } => lo + (hi - lo) * sigmoid(x),
        }
    }

    /// Inverse; `index` is reported when `y` is outside the support.
    pub fn inverse(&self, y: f64, index: usize) -> Result<f64> {
        let outside = || Error::OutsideSupport { index, value: y };
        match *self {
            CoordTransform::Identity => {
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(outside())
                }
            }
            CoordTransform::Exp => {
                if y > 0.0 && y.is_finite() {
                    Ok(y.ln())
                } else {
                    Err(outside())
                }
            }
            CoordTransform::Sigmoid => {
                if y > 0.0 && y < 1.0 {
                    Ok(logit(y))
                } else {
                    Err(outside())
                }
            }
            CoordTransform::Interval { lo, hi } => {
                if y > lo && y < hi {
                    Ok(logit((y - lo) / (hi - lo)))
                } else {
                    Err(outside())
                }
            }
        }
    }

    /// `log |dT/dx|`.
    pub fn log_derivative(&self, x: f64) -> f64 {
        match *self {
            CoordTransform::Identity => 0.0,
            CoordTransform::Exp => x,
            CoordTransform::Sigmoid => log_sigmoid_prime(x),
            CoordTransform::Interval { lo, hi } => (hi - lo).ln() + log_sigmoid_prime(x),
        }
    }
}

/// A bijection that mixes coordinates.
pub trait JointMap: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn forward(&self, psi: &DVector<f64>) -> DVector<f64>;
    fn inverse(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
    /// `log |det dT/dpsi|`.
    fn log_abs_det_forward(&self, psi: &DVector<f64>) -> f64;
}

/// Transform from unconstrained `psi` to model parameters `theta = T(psi)`.
#[derive(Debug, Clone)]
pub enum ParamTransform {
    Coordinatewise(Vec<CoordTransform>),
    Joint(Arc<dyn JointMap>),
}

impl ParamTransform {
    pub fn identity(dim: usize) -> Self {
        ParamTransform::Coordinatewise(vec![CoordTransform::Identity; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamTransform::Coordinatewise(c) => c.len(),
            ParamTransform::Joint(m) => m.dim(),
        }
    }

    pub fn is_coordinatewise(&self) -> bool {
        matches!(self, ParamTransform::Coordinatewise(_))
    }

    pub fn forward(&self, psi: &DVector<f64>) -> DVector<f64> {
        match self {
            ParamTransform::Coordinatewise(c) => {
                DVector::from_iterator(psi.len(), c.iter().zip(psi.iter()).map(|(t, &x)| t.forward(x)))
            }
            ParamTransform::Joint(m) => m.forward(psi),
        }
    }

    pub fn inverse(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        match self {
            ParamTransform::Coordinatewise(c) => c
                .iter()
                .zip(theta.iter())
                .enumerate()
                .map(|(i, (t, &y))| t.inverse(y, i))
                .collect::<Result<Vec<_>>>()
                .map(DVector::from_vec),
            ParamTransform::Joint(m) => m.inverse(theta),
        }
    }

    pub fn log_abs_det_forward(&self, psi: &DVector<f64>) -> f64 {
        match self {
            ParamTransform::Coordinatewise(c) => {
                c.iter().zip(psi.iter()).map(|(t, &x)| t.log_derivative(x)).sum()
            }
            ParamTransform::Joint(m) => m.log_abs_det_forward(psi),
        }
    }

    /// `log |det J_{T^{-1}}(theta)|`.
    pub fn log_abs_det_inverse(&self, theta: &DVector<f64>) -> Result<f64> {
        let psi = self.inverse(theta)?;
        Ok(-self.log_abs_det_forward(&psi))
    }
}

/// GARCH(1,1) stationarity map: `omega = T(a)`, `alpha = T(b)(1 - T(c))`, `beta = T(b) T(c)`.
pub fn garch_constraint_map(psi: [f64; 3]) -> [f64; 3] {
    let budget = sigmoid(psi[1]);
    let split = sigmoid(psi[2]);
    [sigmoid(psi[0]), budget * (1.0 - split), budget * split]
}
