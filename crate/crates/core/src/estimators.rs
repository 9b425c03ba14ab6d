//! Score-function Monte Carlo estimators of the lower bound and its natural gradients.
//!
//! With `delta_s = theta_s - mu`, the natural-gradient estimators average
//!
//! ```text
//! g_mu   ~ delta_s * f_s
//! g_prec ~ (P - P delta_s delta_s^T P) * f_s
//! ```
//!
//! over the draws, where `f_s` is either the h-function or, for a Gaussian
//! prior, the log-likelihood plus the closed-form prior/entropy terms.

use nalgebra::allocator::Allocator;
use nalgebra::{DMatrix, DVector, DefaultAllocator, Dim, OMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{log_pdf, Layout, NaturalGradientPair, PrecisionGradient, VariationalState};
use crate::models::{prior_logpdf, Model, PriorSpec};
use crate::spd::TangentMatrix;

/// Which per-draw payoff feeds the score estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradEstimatorKind {
    /// `f = log p(theta) + log p(y|theta) - log q(theta)`.
    HFunction,
    /// `f = log p(y|theta)`, prior and entropy terms in closed form.
    GaussianPriorLoglik,
}

impl GradEstimatorKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "h_function" | "h" => Ok(GradEstimatorKind::HFunction),
            "gaussian_prior_loglik" | "gaussprior" => Ok(GradEstimatorKind::GaussianPriorLoglik),
            other => Err(Error::UnsupportedEstimator(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GradEstimatorKind::HFunction => "h_function",
            GradEstimatorKind::GaussianPriorLoglik => "gaussian_prior_loglik",
        }
    }
}

/// Draws from `q` and the scalar payoff of each.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawBatch {
    pub thetas: Vec<DVector<f64>>,
    pub logf: Vec<f64>,
}

impl DrawBatch {
    pub fn new(thetas: Vec<DVector<f64>>, logf: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::EmptyInput("draw batch"));
        }
        if thetas.len() != logf.len() {
            return Err(Error::Dimension {
                expected: thetas.len(),
                found: logf.len(),
            });
        }
        Ok(DrawBatch { thetas, logf })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// `log p(theta) + log p(y|theta) - log q(theta)`.
pub fn h_function<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    state: &VariationalState,
    theta: &DVector<f64>,
) -> Result<f64> {
    Ok(prior_logpdf(prior, theta)? + model.log_likelihood(theta)? - log_pdf(state, theta)?)
}

/// Log-likelihoods and h-values of every draw.
///
/// Likelihoods are evaluated in parallel; results keep the draw order.
pub fn evaluate_draws<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    state: &VariationalState,
    thetas: &[DVector<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs = thetas
        .par_iter()
        .map(|theta| {
            let ll = model.log_likelihood(theta)?;
            let h = prior_logpdf(prior, theta)? + ll - log_pdf(state, theta)?;
            Ok((ll, h))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Mean of the h-values.
pub fn estimate_lb(batch: &DrawBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("draw batch"));
    }
    Ok(batch.logf.iter().sum::<f64>() / batch.len() as f64)
}

/// Per-coordinate `c* = Cov(u f, u) / Var(u)`; `c* = 0` where `Var(u) = 0`.
///
/// `grads` holds the score features `u` (one row per draw) and `weighted`
/// the products `u f`.
pub fn control_variate_coeff(grads: &DMatrix<f64>, weighted: &DMatrix<f64>) -> Result<DVector<f64>> {
    if grads.shape() != weighted.shape() {
        return Err(Error::Dimension {
            expected: grads.ncols(),
            found: weighted.ncols(),
        });
    }
    let s = grads.nrows();
    if s < 2 {
        return Err(Error::EmptyInput("control variates need at least two draws"));
    }
    Ok(DVector::from_fn(grads.ncols(), |j, _| {
        cv_coefficient(grads.column(j).iter().copied(), weighted.column(j).iter().copied(), s)
    }))
}

fn cv_coefficient(u: impl Iterator<Item = f64> + Clone, uf: impl Iterator<Item = f64> + Clone, s: usize) -> f64 {
    let n = s as f64;
    let mean_u = u.clone().sum::<f64>() / n;
    let mean_uf = uf.clone().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (a, b) in u.zip(uf) {
        cov += (b - mean_uf) * (a - mean_u);
        var += (a - mean_u) * (a - mean_u);
    }
    if var > 0.0 {
        cov / var
    } else {
        0.0
    }
}

/// Rescales `g` to norm `l_max` when its norm exceeds it.
pub fn clip_gradient<R: Dim, C: Dim>(g: &OMatrix<f64, R, C>, l_max: f64) -> OMatrix<f64, R, C>
where
    DefaultAllocator: Allocator<R, C>,
{
    g * clip_factor(g.norm(), l_max)
}

/// `min(1, l_max / norm)`.
pub fn clip_factor(norm: f64, l_max: f64) -> f64 {
    if norm > l_max {
        l_max / norm
    } else {
        1.0
    }
}

/// Clips the euclidean gradients behind a natural-gradient pair, the mean and
/// covariance parts separately, and returns the rescaled pair and whether
/// either part was clipped.
///
/// The euclidean mean gradient is `P g_mu` and the euclidean covariance gradient
/// is `-g_prec / 2`; both map linearly to their natural counterparts, so
/// rescaling the natural pair by the same factors is equivalent.
pub fn clip_natural_gradients(
    state: &VariationalState,
    grads: &NaturalGradientPair,
    l_max: f64,
) -> (NaturalGradientPair, bool) {
    let mu_norm = state.precision_times(&grads.g_mu).norm();
    let sigma_norm = 0.5
        * match &grads.g_prec {
            PrecisionGradient::Diagonal(v) => v.norm(),
            PrecisionGradient::Blocks(b) => b.iter().map(|m| m.as_matrix().norm_squared()).sum::<f64>().sqrt(),
        };
    let a = clip_factor(mu_norm, l_max);
    let b = clip_factor(sigma_norm, l_max);
    if a == 1.0 && b == 1.0 {
        return (grads.clone(), false);
    }
    let g_prec = match &grads.g_prec {
        PrecisionGradient::Diagonal(v) => PrecisionGradient::Diagonal(v * b),
        PrecisionGradient::Blocks(m) => PrecisionGradient::Blocks(m.iter().map(|x| x.scale(b)).collect()),
    };
    (
        NaturalGradientPair {
            g_mu: &grads.g_mu * a,
            g_prec,
        },
        true,
    )
}

/// Number of score features: `d` for the mean plus the free precision entries.
fn feature_count(state: &VariationalState) -> usize {
    let d = state.dim();
    match state.layout() {
        Layout::Diagonal(_) => 2 * d,
        Layout::Dense(blocks) => d + blocks.iter().map(|b| b.dim() * (b.dim() + 1) / 2).sum::<usize>(),
    }
}

/// Natural-form score features of one draw.
fn features(state: &VariationalState, theta: &DVector<f64>, out: &mut [f64]) {
    let d = state.dim();
    let delta = theta - state.mu();
    out[..d].copy_from_slice(delta.as_slice());
    let mut k = d;
    match state.layout() {
        Layout::Diagonal(diag) => {
            for i in 0..d {
                let z = diag.prec[i] * delta[i];
                out[k] = diag.prec[i] - z * z;
                k += 1;
            }
        }
        Layout::Dense(blocks) => {
            for (b, r) in blocks.iter().zip(state.block_ranges()) {
                let p = b.prec.as_matrix();
                let z = p * delta.rows(r.start, r.len());
                for j in 0..r.len() {
                    for i in 0..=j {
                        out[k] = p[(i, j)] - z[i] * z[j];
                        k += 1;
                    }
                }
            }
        }
    }
}

/// Averages of `u f`, optionally with per-coordinate control variates.
fn score_average(state: &VariationalState, batch: &DrawBatch, control_variates: bool) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("draw batch"));
    }
    let s = batch.len();
    let k = feature_count(state);
    let mut u = DMatrix::zeros(s, k);
    let mut row = vec![0.0; k];
    for (i, theta) in batch.thetas.iter().enumerate() {
        if theta.len() != state.dim() {
            return Err(Error::Dimension {
                expected: state.dim(),
                found: theta.len(),
            });
        }
        features(state, theta, &mut row);
        for j in 0..k {
            u[(i, j)] = row[j];
        }
    }
    let n = s as f64;
    let use_cv = control_variates && s >= 2;
    Ok((0..k)
        .map(|j| {
            let col = u.column(j);
            let uf = col.iter().zip(&batch.logf).map(|(a, f)| a * f);
            let mean_uf = uf.clone().sum::<f64>() / n;
            if use_cv {
                let c = cv_coefficient(col.iter().copied(), uf, s);
                mean_uf - c * (col.iter().sum::<f64>() / n)
            } else {
                mean_uf
            }
        })
        .collect())
}

/// Closed-form prior/entropy terms `(c_mu, C)` for a Gaussian prior.
fn prior_terms(state: &VariationalState, prior: &PriorSpec) -> Result<(DVector<f64>, PrecisionGradient)> {
    if prior.dim() != state.dim() {
        return Err(Error::Dimension {
            expected: state.dim(),
            found: prior.dim(),
        });
    }
    let v = prior
        .precision_times(&(state.mu() - prior.mu0()))
        .ok_or_else(|| Error::UnsupportedEstimator("gaussian_prior_loglik needs a Gaussian prior".into()))?;
    let c_mu = -state.covariance_times(&v);
    let c_prec = match state.layout() {
        Layout::Diagonal(diag) => PrecisionGradient::Diagonal(DVector::from_fn(state.dim(), |i, _| {
            let p0 = prior.precision_block(&(i..i + 1)).expect("gaussian prior")[(0, 0)];
            -diag.prec[i] + p0
        })),
        Layout::Dense(blocks) => PrecisionGradient::Blocks(
            blocks
                .iter()
                .zip(state.block_ranges())
                .map(|(b, r)| {
                    let p0 = prior.precision_block(r).expect("gaussian prior");
                    TangentMatrix::new_unchecked(-b.prec.as_matrix() + p0)
                })
                .collect(),
        ),
    };
    Ok((c_mu, c_prec))
}

fn assemble(state: &VariationalState, avg: &[f64]) -> NaturalGradientPair {
    let d = state.dim();
    let g_mu = DVector::from_column_slice(&avg[..d]);
    let g_prec = match state.layout() {
        Layout::Diagonal(_) => PrecisionGradient::Diagonal(DVector::from_column_slice(&avg[d..2 * d])),
        Layout::Dense(blocks) => {
            let mut k = d;
            PrecisionGradient::Blocks(
                blocks
                    .iter()
                    .map(|b| {
                        let n = b.dim();
                        let mut m = DMatrix::zeros(n, n);
                        for j in 0..n {
                            for i in 0..=j {
                                m[(i, j)] = avg[k];
                                m[(j, i)] = avg[k];
                                k += 1;
                            }
                        }
                        TangentMatrix::new_unchecked(m)
                    })
                    .collect(),
            )
        }
    };
    NaturalGradientPair { g_mu, g_prec }
}

/// Natural gradients from a batch, for any layout and either estimator kind.
pub fn estimate_natgrads(
    state: &VariationalState,
    prior: &PriorSpec,
    batch: &DrawBatch,
    kind: GradEstimatorKind,
    control_variates: bool,
) -> Result<NaturalGradientPair> {
    let terms = match kind {
        GradEstimatorKind::GaussianPriorLoglik => Some(prior_terms(state, prior)?),
        GradEstimatorKind::HFunction => None,
    };
    let avg = score_average(state, batch, control_variates)?;
    let pair = assemble(state, &avg);
    match terms {
        None => Ok(pair),
        Some((c_mu, c_prec)) => pair.combine(
            1.0,
            &NaturalGradientPair {
                g_mu: c_mu,
                g_prec: c_prec,
            },
            1.0,
        ),
    }
}

/// h-function estimator; `batch.logf` holds h-values.
pub fn estimate_natgrads_h(state: &VariationalState, batch: &DrawBatch) -> Result<NaturalGradientPair> {
    let avg = score_average(state, batch, false)?;
    Ok(assemble(state, &avg))
}

/// Gaussian-prior estimator; `batch.logf` holds log-likelihoods.
pub fn estimate_natgrads_gaussprior(
    state: &VariationalState,
    prior: &PriorSpec,
    batch: &DrawBatch,
) -> Result<NaturalGradientPair> {
    estimate_natgrads(state, prior, batch, GradEstimatorKind::GaussianPriorLoglik, false)
}

/// Gaussian-prior estimator for a diagonal posterior, computed elementwise.
pub fn estimate_natgrads_diag(
    state: &VariationalState,
    prior: &PriorSpec,
    batch: &DrawBatch,
) -> Result<NaturalGradientPair> {
    if state.diagonal_precision().is_none() {
        return Err(Error::InvalidStructure(
            "diagonal estimator needs a diagonal posterior".into(),
        ));
    }
    estimate_natgrads_gaussprior(state, prior, batch)
}
