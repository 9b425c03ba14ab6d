//! Gaussian likelihood with known noise and a Gaussian prior: every quantity the
//! optimizer estimates by Monte Carlo is available here in closed form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Model, ParamTransform, PriorSpec};
use crate::error::{Error, Result};
use crate::gaussian::{NaturalGradientPair, PrecisionGradient, VariationalState};
use crate::spd::{self, SpdMatrix, TangentMatrix};

/// `y ~ N(X theta, sigma^2 I)`.
#[derive(Debug, Clone)]
pub struct ConjugateGaussian {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma: f64,
}

impl ConjugateGaussian {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("noise scale must be positive, got {sigma}")));
        }
        Ok(ConjugateGaussian { x, y, sigma })
    }

    /// Random design with standard-normal entries and data drawn at `theta`.
    pub fn simulate<R: Rng + ?Sized>(n: usize, theta: &DVector<f64>, sigma: f64, rng: &mut R) -> Result<Self> {
        let d = theta.len();
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let y = &x * theta + noise;
        Self::new(x, y, sigma)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn gram(&self) -> DMatrix<f64> {
        self.x.transpose() * &self.x / (self.sigma * self.sigma)
    }

    fn prior_parts(&self, prior: &PriorSpec) -> Result<DMatrix<f64>> {
        if prior.dim() != self.x.ncols() {
            return Err(Error::Dimension {
                expected: self.x.ncols(),
                found: prior.dim(),
            });
        }
        prior
            .dense_precision()
            .ok_or_else(|| Error::UnsupportedEstimator("conjugate model needs a Gaussian prior".into()))
    }

    /// Exact posterior as a full-covariance state.
    pub fn exact_posterior(&self, prior: &PriorSpec) -> Result<VariationalState> {
        let p0 = self.prior_parts(prior)?;
        let prec = spd::symmetrized(&(self.gram() + &p0));
        let prec = SpdMatrix::new(prec)?;
        let (cov, _) = spd::spd_inverse(&prec)?;
        let rhs = self.x.transpose() * &self.y / (self.sigma * self.sigma) + &p0 * prior.mu0();
        let mean = cov.as_matrix() * rhs;
        VariationalState::full(mean, prec)
    }

    /// `log p(y)` from the marginal `y ~ N(X mu0, sigma^2 I + X Sigma0 X^T)`.
    pub fn log_evidence(&self, prior: &PriorSpec) -> Result<f64> {
        let p0 = SpdMatrix::new(self.prior_parts(prior)?)?;
        let (sigma0, _) = spd::spd_inverse(&p0)?;
        let n = self.y.len();
        let marginal = &self.x * sigma0.as_matrix() * self.x.transpose()
            + DMatrix::identity(n, n) * (self.sigma * self.sigma);
        let marginal = SpdMatrix::new(spd::symmetrized(&marginal))?;
        let l = spd::cholesky(&marginal)?;
        let resid = &self.y - &self.x * prior.mu0();
        let z = l
            .as_matrix()
            .solve_lower_triangular(&resid)
            .ok_or(Error::Singular { index: 0 })?;
        Ok(-0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * l.log_det_product() - 0.5 * z.norm_squared())
    }

    /// Closed-form lower bound `E_q[log p(y|theta) + log p(theta) - log q(theta)]`.
    pub fn analytic_lb(&self, state: &VariationalState, prior: &PriorSpec) -> Result<f64> {
        let p0 = self.prior_parts(prior)?;
        let d = state.dim() as f64;
        let n = self.y.len() as f64;
        let s2 = self.sigma * self.sigma;
        let m = state.mu();
        let cov = state.dense_covariance();
        let resid = &self.y - &self.x * m;
        let e_loglik = -0.5 * n * (2.0 * PI * s2).ln()
            - 0.5 * (resid.norm_squared() + (self.x.transpose() * &self.x * &cov).trace()) / s2;
        let dm = m - prior.mu0();
        let log_det_p0 = spd::cholesky_of(&p0)?.log_det_product();
        let e_logprior = -0.5 * d * (2.0 * PI).ln() + 0.5 * log_det_p0
            - 0.5 * (dm.dot(&(&p0 * &dm)) + (&p0 * &cov).trace());
        let entropy = 0.5 * d * (1.0 + (2.0 * PI).ln()) + 0.5 * state.log_det_cov();
        Ok(e_loglik + e_logprior + entropy)
    }

    /// Exact natural gradients of [`analytic_lb`](Self::analytic_lb), laid out like `state`.
    pub fn analytic_natgrads(&self, state: &VariationalState, prior: &PriorSpec) -> Result<NaturalGradientPair> {
        let p0 = self.prior_parts(prior)?;
        let s2 = self.sigma * self.sigma;
        let m = state.mu();
        let grad_mu = self.x.transpose() * (&self.y - &self.x * m) / s2 - &p0 * (m - prior.mu0());
        let g_mu = state.covariance_times(&grad_mu);
        let post = self.gram() + &p0;
        let g_prec = match state.dense_blocks() {
            None => {
                let p = state.diagonal_precision().expect("diagonal layout");
                PrecisionGradient::Diagonal(DVector::from_fn(p.len(), |i, _| post[(i, i)] - p[i]))
            }
            Some(blocks) => PrecisionGradient::Blocks(
                blocks
                    .iter()
                    .zip(state.block_ranges())
                    .map(|(b, r)| {
                        let target = post.view((r.start, r.start), (r.len(), r.len()));
                        TangentMatrix::new_unchecked(spd::symmetrized(&(target - b.prec.as_matrix())))
                    })
                    .collect(),
            ),
        };
        Ok(NaturalGradientPair { g_mu, g_prec })
    }
}

impl Model for ConjugateGaussian {
    fn name(&self) -> String {
        "conjugate".into()
    }

    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn transform(&self) -> ParamTransform {
        ParamTransform::identity(self.dim())
    }

    fn log_likelihood(&self, psi: &DVector<f64>) -> Result<f64> {
        if psi.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: psi.len(),
            });
        }
        let n = self.y.len() as f64;
        let s2 = self.sigma * self.sigma;
        let resid = &self.y - &self.x * psi;
        Ok(-0.5 * n * (2.0 * PI * s2).ln() - 0.5 * resid.norm_squared() / s2)
    }
}
