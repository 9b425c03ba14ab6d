//! Random-walk Metropolis on the unconstrained parameters, used as a reference posterior.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::{prior_logpdf, Model, PriorSpec};

/// Fraction of iterations discarded as burn-in.
pub const BURN_IN: f64 = 0.2;

/// Post burn-in draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<DVector<f64>>,
    /// Accepted proposals over all iterations, burn-in included.
    pub acceptance_rate: f64,
    /// Per-coordinate proposal standard deviations.
    pub step_scale: DVector<f64>,
}

impl Chain {
    pub fn dim(&self) -> usize {
        self.step_scale.len()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for d in &self.draws {
            m += d;
        }
        m / self.draws.len().max(1) as f64
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim(), self.dim());
        for d in &self.draws {
            let r = d - &m;
            c += &r * r.transpose();
        }
        c / (self.draws.len().max(2) - 1) as f64
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[i]).collect()
    }

    pub fn ess(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| effective_sample_size(&self.coordinate(i)))
    }

    /// Monte Carlo standard error of each coordinate's mean.
    pub fn mcse(&self) -> DVector<f64> {
        let cov = self.covariance();
        let ess = self.ess();
        DVector::from_fn(self.dim(), |i, _| (cov[(i, i)] / ess[i]).sqrt())
    }
}

/// Effective sample size from Geyer's initial monotone sequence of autocorrelation pairs.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let var = c.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

fn log_target<M: Model + ?Sized>(model: &M, prior: &PriorSpec, psi: &DVector<f64>) -> f64 {
    match (prior_logpdf(prior, psi), model.log_likelihood(psi)) {
        (Ok(a), Ok(b)) if (a + b).is_finite() => a + b,
        _ => f64::NEG_INFINITY,
    }
}

/// Random-walk Metropolis with proposals `N(psi, diag(scales^2))`.
pub fn metropolis_with_scales<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    init: &DVector<f64>,
    n_samples: usize,
    scales: &DVector<f64>,
    seed: u64,
) -> Result<Chain> {
    if init.len() != model.dim() || scales.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: if init.len() != model.dim() { init.len() } else { scales.len() },
        });
    }
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Config("step scales must be positive".into()));
    }
    let mut current = init.clone();
    let mut lp = log_target(model, prior, &current);
    if !lp.is_finite() {
        return Err(Error::Config("initial point has zero posterior density".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn = (n_samples as f64 * BURN_IN).floor() as usize;
    let mut draws = Vec::with_capacity(n_samples - burn);
    let mut accepted = 0usize;
    for it in 0..n_samples {
        let proposal = DVector::from_fn(current.len(), |i, _| {
            current[i] + scales[i] * rng.sample::<f64, _>(StandardNormal)
        });
        let lp_new = log_target(model, prior, &proposal);
        let u: f64 = rng.random();
        if u.ln() < lp_new - lp {
            current = proposal;
            lp = lp_new;
            accepted += 1;
        }
        if it >= burn {
            draws.push(current.clone());
        }
    }
    Ok(Chain {
        draws,
        acceptance_rate: accepted as f64 / n_samples.max(1) as f64,
        step_scale: scales.clone(),
    })
}

/// Random-walk Metropolis with isotropic proposal standard deviation `step_scale`.
pub fn metropolis_sample<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    init: &DVector<f64>,
    n_samples: usize,
    step_scale: f64,
    seed: u64,
) -> Result<Chain> {
    let scales = DVector::from_element(model.dim(), step_scale);
    metropolis_with_scales(model, prior, init, n_samples, &scales, seed)
}

/// Metropolis with scales `2.38 / sqrt(k)` times pilot-run standard deviations.
///
/// Three pilot rounds of `pilot` iterations each refine the scales, starting
/// from `initial_scale` on every coordinate.
pub fn tuned_metropolis<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    init: &DVector<f64>,
    n_samples: usize,
    pilot: usize,
    initial_scale: f64,
    seed: u64,
) -> Result<Chain> {
    let k = model.dim() as f64;
    let mut scales = DVector::from_element(model.dim(), initial_scale);
    let mut start = init.clone();
    for round in 0..3u64 {
        let chain = metropolis_with_scales(model, prior, &start, pilot, &scales, seed.wrapping_add(1000 + round))?;
        let cov = chain.covariance();
        for i in 0..scales.len() {
            let sd = cov[(i, i)].sqrt();
            scales[i] = if sd > 0.0 && sd.is_finite() {
                2.38 / k.sqrt() * sd
            } else {
                scales[i] / 2.0
            };
        }
        if let Some(last) = chain.draws.last() {
            start = last.clone();
        }
    }
    metropolis_with_scales(model, prior, &start, n_samples, &scales, seed)
}
