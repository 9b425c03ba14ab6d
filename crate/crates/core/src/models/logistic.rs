use nalgebra::{DMatrix, DVector};

use super::transforms::{sigmoid, softplus};
use super::{Model, ParamTransform};
use crate::error::{Error, Result};

/// Bernoulli likelihood with a logit link.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
}

impl LogisticRegression {
    /// `x` is `n x k` (include an intercept column if wanted); labels must be 0 or 1.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if let Some((row, &value)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
            return Err(Error::InvalidLabel { row, value });
        }
        let names = (0..x.ncols()).map(|i| format!("beta{i}")).collect();
        Ok(LogisticRegression { x, y, names })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.x.ncols() {
            self.names = names;
        }
        self
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.y
    }

    /// `P(y = 1 | x_i)` at coefficients `beta`.
    pub fn probabilities(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.x * beta).map(sigmoid)
    }
}

/// `sum_i y_i eta_i - log(1 + e^{eta_i})` with `eta = X beta`.
pub fn logistic_loglik(beta: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    if beta.len() != x.ncols() {
        return Err(Error::Dimension {
            expected: x.ncols(),
            found: beta.len(),
        });
    }
    let eta = x * beta;
    let mut total = 0.0;
    for (row, (&e, &label)) in eta.iter().zip(y.iter()).enumerate() {
        if label != 0.0 && label != 1.0 {
            return Err(Error::InvalidLabel { row, value: label });
        }
        total += label * e - softplus(e);
    }
    Ok(total)
}

impl Model for LogisticRegression {
    fn name(&self) -> String {
        "logistic".into()
    }

    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn transform(&self) -> ParamTransform {
        ParamTransform::identity(self.dim())
    }

    fn log_likelihood(&self, psi: &DVector<f64>) -> Result<f64> {
        logistic_loglik(psi, &self.x, &self.y)
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn loglik_examples() {
        let v = logistic_loglik(&dvector![0.0], &dmatrix![1.0], &dvector![1.0]).unwrap();
        assert_relative_eq!(v, -std::f64::consts::LN_2, epsilon = 1e-15);

        let x = dmatrix![1.0, 2.0; 1.0, -1.0; 1.0, 0.5; 1.0, 3.0];
        let y = dvector![1.0, 0.0, 0.0, 1.0];
        let v = logistic_loglik(&dvector![0.0, 0.0], &x, &y).unwrap();
        assert_relative_eq!(v, -4.0 * 2.0f64.ln(), epsilon = 1e-12);

        let v = logistic_loglik(&dvector![30.0], &dmatrix![1.0], &dvector![1.0]).unwrap();
        assert!(v <= 0.0 && v > -1e-12);
    }

    #[test]
    fn matches_naive_bernoulli_form() {
        let x = dmatrix![1.0, 0.3; 1.0, -1.2; 1.0, 2.5];
        let y = dvector![1.0, 0.0, 1.0];
        let beta = dvector![-0.4, 0.9];
        let naive: f64 = (0..3)
            .map(|i| {
                let eta: f64 = (x.row(i) * &beta)[0];
                let p = 1.0 / (1.0 + (-eta).exp());
                y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln()
            })
            .sum();
        assert_relative_eq!(logistic_loglik(&beta, &x, &y).unwrap(), naive, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_labels() {
        let err = LogisticRegression::new(dmatrix![1.0; 1.0], dvector![1.0, 2.0]).unwrap_err();
        assert_eq!(err, Error::InvalidLabel { row: 1, value: 2.0 });
        let err = logistic_loglik(&dvector![0.0], &dmatrix![1.0], &dvector![0.5]).unwrap_err();
        assert!(matches!(err, Error::InvalidLabel { row: 0, .. }));
    }
}
