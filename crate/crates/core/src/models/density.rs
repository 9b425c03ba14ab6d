//! Densities of the constrained parameters implied by a Gaussian on the
//! unconstrained ones: `N(T^{-1}(theta); mu, Sigma) |det J_{T^{-1}}(theta)|`.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;

use super::ParamTransform;
use crate::error::{Error, Result};
use crate::gaussian::{log_pdf, VariationalState};

/// Draws used for kernel estimates of joint-map marginals.
pub const KDE_DRAWS: usize = 20_000;

/// Log density of the constrained vector `theta`.
pub fn back_transform_log_density(
    state: &VariationalState,
    transform: &ParamTransform,
    theta: &DVector<f64>,
) -> Result<f64> {
    let psi = transform.inverse(theta)?;
    Ok(log_pdf(state, &psi)? - transform.log_abs_det_forward(&psi))
}

/// Density of the constrained vector `theta`.
pub fn back_transform_density(
    state: &VariationalState,
    transform: &ParamTransform,
    theta: &DVector<f64>,
) -> Result<f64> {
    back_transform_log_density(state, transform, theta).map(f64::exp)
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Marginal density of constrained coordinate `index` on `grid`.
///
/// Exact for coordinatewise transforms; for joint maps a Gaussian kernel
/// estimate from [`KDE_DRAWS`] draws of `q`.
pub fn marginal_density<R: Rng + ?Sized>(
    state: &VariationalState,
    transform: &ParamTransform,
    index: usize,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if index >= state.dim() {
        return Err(Error::Dimension {
            expected: state.dim(),
            found: index,
        });
    }
    match transform {
        ParamTransform::Coordinatewise(coords) => {
            let t = coords[index];
            let mean = state.mu()[index];
            let sd = state.variances()[index].sqrt();
            grid.iter()
                .map(|&y| {
                    let x = t.inverse(y, index)?;
                    Ok(normal_pdf(x, mean, sd) * (-t.log_derivative(x)).exp())
                })
                .collect()
        }
        ParamTransform::Joint(_) => {
            let draws = constrained_draws(state, transform, index, rng);
            Ok(kde(&draws, grid))
        }
    }
}

fn constrained_draws<R: Rng + ?Sized>(
    state: &VariationalState,
    transform: &ParamTransform,
    index: usize,
    rng: &mut R,
) -> Vec<f64> {
    state
        .sample(KDE_DRAWS, rng)
        .iter()
        .map(|psi| transform.forward(psi)[index])
        .collect()
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
pub fn kde(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bw = (1.06 * sd * n.powf(-0.2)).max(f64::MIN_POSITIVE);
    grid.iter()
        .map(|&g| samples.iter().map(|&s| normal_pdf(g, s, bw)).sum::<f64>() / n)
        .collect()
}

/// Evenly spaced grid covering the bulk of the constrained marginal.
pub fn marginal_grid<R: Rng + ?Sized>(
    state: &VariationalState,
    transform: &ParamTransform,
    index: usize,
    points: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if index >= state.dim() {
        return Err(Error::Dimension {
            expected: state.dim(),
            found: index,
        });
    }
    let (lo, hi) = match transform {
        ParamTransform::Coordinatewise(coords) => {
            let t = coords[index];
            let mean = state.mu()[index];
            let sd = state.variances()[index].sqrt();
            (t.forward(mean - 6.0 * sd), t.forward(mean + 6.0 * sd))
        }
        ParamTransform::Joint(_) => {
            let mut draws = constrained_draws(state, transform, index, rng);
            draws.sort_by(f64::total_cmp);
            let lo = draws[draws.len() / 1000];
            let hi = draws[draws.len() - 1 - draws.len() / 1000];
            let pad = 0.1 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let step = (hi - lo) / (points.max(2) - 1) as f64;
    Ok((0..points.max(2)).map(|i| lo + step * i as f64).collect())
}
