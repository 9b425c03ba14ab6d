use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{self, SpdMatrix};

/// Precision of the prior on the unconstrained parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorPrecision {
    /// `tau * I`.
    Isotropic(f64),
    Dense { prec: SpdMatrix, log_det: f64 },
    /// Improper flat prior, `log p = 0`. Only usable with the h-function estimator.
    Flat,
}

/// Prior `N(mu0, prec0^{-1})` (or flat).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    mu0: DVector<f64>,
    precision: PriorPrecision,
}

impl PriorSpec {
    pub fn isotropic(mu0: DVector<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("prior precision must be positive, got {tau}")));
        }
        Ok(PriorSpec {
            mu0,
            precision: PriorPrecision::Isotropic(tau),
        })
    }

    /// `N(mean * 1, variance * I)`.
    pub fn isotropic_covariance(dim: usize, mean: f64, variance: f64) -> Result<Self> {
        Self::isotropic(DVector::from_element(dim, mean), 1.0 / variance)
    }

    pub fn dense(mu0: DVector<f64>, prec: SpdMatrix) -> Result<Self> {
        if prec.dim() != mu0.len() {
            return Err(Error::Dimension {
                expected: mu0.len(),
                found: prec.dim(),
            });
        }
        let log_det = spd::cholesky(&prec)?.log_det_product();
        Ok(PriorSpec {
            mu0,
            precision: PriorPrecision::Dense { prec, log_det },
        })
    }

    pub fn flat(dim: usize) -> Self {
        PriorSpec {
            mu0: DVector::zeros(dim),
            precision: PriorPrecision::Flat,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn precision(&self) -> &PriorPrecision {
        &self.precision
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self.precision, PriorPrecision::Flat)
    }

    /// Scalar precision when isotropic.
    pub fn tau(&self) -> Option<f64> {
        match self.precision {
            PriorPrecision::Isotropic(t) => Some(t),
            _ => None,
        }
    }

    /// `prec0 v`; `None` for a flat prior.
    pub fn precision_times(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.precision {
            PriorPrecision::Isotropic(t) => Some(v * *t),
            PriorPrecision::Dense { prec, .. } => Some(prec.as_matrix() * v),
            PriorPrecision::Flat => None,
        }
    }

    /// Diagonal block `(prec0)_{rr}`; `None` for a flat prior.
    pub fn precision_block(&self, r: &Range<usize>) -> Option<DMatrix<f64>> {
        match &self.precision {
            PriorPrecision::Isotropic(t) => Some(DMatrix::identity(r.len(), r.len()) * *t),
            PriorPrecision::Dense { prec, .. } => Some(
                prec.as_matrix()
                    .view((r.start, r.start), (r.len(), r.len()))
                    .into_owned(),
            ),
            PriorPrecision::Flat => None,
        }
    }

    /// Dense precision matrix; `None` for a flat prior.
    pub fn dense_precision(&self) -> Option<DMatrix<f64>> {
        self.precision_block(&(0..self.dim()))
    }
}

/// `log p(psi)`.
pub fn prior_logpdf(prior: &PriorSpec, psi: &DVector<f64>) -> Result<f64> {
    if psi.len() != prior.dim() {
        return Err(Error::Dimension {
            expected: prior.dim(),
            found: psi.len(),
        });
    }
    let d = psi.len() as f64;
    let diff = psi - prior.mu0();
    let norm = -0.5 * d * (2.0 * PI).ln();
    Ok(match prior.precision() {
        PriorPrecision::Isotropic(t) => norm + 0.5 * d * t.ln() - 0.5 * t * diff.norm_squared(),
        PriorPrecision::Dense { prec, log_det } => {
            norm + 0.5 * log_det - 0.5 * diff.dot(&(prec.as_matrix() * &diff))
        }
        PriorPrecision::Flat => 0.0,
    })
}
