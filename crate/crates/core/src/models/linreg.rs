use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{CoordTransform, Model, ParamTransform};
use crate::error::{Error, Result};

/// Gaussian linear regression with unknown noise scale.
///
/// Parameters are `(beta_1..beta_k, psi_sigma)` with `sigma = exp(psi_sigma)`.
#[derive(Debug, Clone)]
pub struct LinearRegression {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
}

impl LinearRegression {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        let mut names: Vec<String> = (0..x.ncols()).map(|i| format!("beta{i}")).collect();
        names.push("psi_sigma".into());
        Ok(LinearRegression { x, y, names })
    }

    pub fn with_names(mut self, mut names: Vec<String>) -> Self {
        if names.len() == self.x.ncols() {
            names.push("psi_sigma".into());
            self.names = names;
        }
        self
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn fitted(&self, psi: &DVector<f64>) -> DVector<f64> {
        &self.x * psi.rows(0, self.x.ncols())
    }
}

/// Gaussian log-likelihood of `y - X beta` with scale `exp(psi_sigma)`.
pub fn linreg_loglik(psi: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let k = x.ncols();
    if psi.len() != k + 1 {
        return Err(Error::Dimension {
            expected: k + 1,
            found: psi.len(),
        });
    }
    let log_sigma = psi[k];
    let resid = y - x * psi.rows(0, k);
    let n = y.len() as f64;
    Ok(-0.5 * n * (2.0 * PI).ln() - n * log_sigma - 0.5 * resid.norm_squared() * (-2.0 * log_sigma).exp())
}

/// Noise scale reported from a Gaussian posterior on `psi_sigma`: `exp(mean) + var / 2`.
pub fn reported_sigma(mean_psi_sigma: f64, var_psi_sigma: f64) -> f64 {
    mean_psi_sigma.exp() + var_psi_sigma / 2.0
}

/// HAR regressors from a realized-volatility series.
///
/// Row `t` (for `t >= 22`) holds `[1, rv[t-1], mean(rv[t-5..t]), mean(rv[t-22..t])]`
/// and the target is `rv[t]`.
pub fn har_design(rv: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    const MONTH: usize = 22;
    const WEEK: usize = 5;
    if rv.len() <= MONTH {
        return Err(Error::EmptyInput("HAR needs more than 22 observations"));
    }
    let rows = rv.len() - MONTH;
    let mut x = DMatrix::zeros(rows, 4);
    let mut y = DVector::zeros(rows);
    for (row, t) in (MONTH..rv.len()).enumerate() {
        x[(row, 0)] = 1.0;
        x[(row, 1)] = rv[t - 1];
        x[(row, 2)] = rv[t - WEEK..t].iter().sum::<f64>() / WEEK as f64;
        x[(row, 3)] = rv[t - MONTH..t].iter().sum::<f64>() / MONTH as f64;
        y[row] = rv[t];
    }
    Ok((x, y))
}

impl Model for LinearRegression {
    fn name(&self) -> String {
        "linreg".into()
    }

    fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    fn transform(&self) -> ParamTransform {
        let mut t = vec![CoordTransform::Identity; self.x.ncols()];
        t.push(CoordTransform::Exp);
        ParamTransform::Coordinatewise(t)
    }

    fn log_likelihood(&self, psi: &DVector<f64>) -> Result<f64> {
        linreg_loglik(psi, &self.x, &self.y)
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}
