//! GARCH-family conditional-variance models with Gaussian innovations.
//!
//! Orders follow the `(p, o, q)` convention: `p` ARCH lags, `o` leverage lags,
//! `q` lagged variances. For FIGARCH `(p, d, q)` means `p` in {0, 1} for the
//! `phi` polynomial and `q = 1` for `beta`.
//!
//! Parameter vectors are ordered `[omega, alpha, gamma?, beta_1.., beta_q]` for
//! GARCH/GJR and EGARCH, and `[omega, phi?, d, beta]` for FIGARCH.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::transforms::{log_sigmoid_prime, logit, sigmoid, JointMap};
use super::{Model, ParamTransform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolatilityFamily {
    /// ARCH, GARCH and GJR (leverage when `o = 1`).
    Garch,
    Egarch,
    Figarch,
}

/// Model family, orders and FIGARCH truncation lag.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilitySpec {
    pub family: VolatilityFamily,
    pub p: usize,
    pub o: usize,
    pub q: usize,
    pub truncation: usize,
}

pub const DEFAULT_TRUNCATION: usize = 1000;

impl VolatilitySpec {
    pub fn new(family: VolatilityFamily, p: usize, o: usize, q: usize) -> Result<Self> {
        let ok = match family {
            VolatilityFamily::Garch => p == 1 && o <= 1 && q <= 2,
            VolatilityFamily::Egarch => p == 1 && o <= 1 && (1..=2).contains(&q),
            VolatilityFamily::Figarch => p <= 1 && o == 0 && q == 1,
        };
        if !ok {
            return Err(Error::Config(format!(
                "unsupported {family:?} order ({p},{o},{q})"
            )));
        }
        Ok(VolatilitySpec {
            family,
            p,
            o,
            q,
            truncation: DEFAULT_TRUNCATION,
        })
    }

    pub fn arch() -> Self {
        Self::new(VolatilityFamily::Garch, 1, 0, 0).expect("valid order")
    }

    pub fn garch() -> Self {
        Self::new(VolatilityFamily::Garch, 1, 0, 1).expect("valid order")
    }

    pub fn gjr(q: usize) -> Result<Self> {
        Self::new(VolatilityFamily::Garch, 1, 1, q)
    }

    pub fn egarch(o: usize, q: usize) -> Result<Self> {
        Self::new(VolatilityFamily::Egarch, 1, o, q)
    }

    pub fn figarch(p: usize) -> Result<Self> {
        Self::new(VolatilityFamily::Figarch, p, 0, 1)
    }

    pub fn with_truncation(mut self, lags: usize) -> Self {
        self.truncation = lags.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        match self.family {
            VolatilityFamily::Garch | VolatilityFamily::Egarch => 2 + self.o + self.q,
            VolatilityFamily::Figarch => 3 + self.p,
        }
    }

    pub fn label(&self) -> String {
        match self.family {
            VolatilityFamily::Garch if self.q == 0 => "ARCH(1)".into(),
            VolatilityFamily::Garch if self.o == 0 => format!("GARCH(1,0,{})", self.q),
            VolatilityFamily::Garch => format!("GJR(1,1,{})", self.q),
            VolatilityFamily::Egarch => format!("EGARCH(1,{},{})", self.o, self.q),
            VolatilityFamily::Figarch => format!("FIGARCH({},1,1)", self.p),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["omega".to_string()];
        match self.family {
            VolatilityFamily::Garch | VolatilityFamily::Egarch => {
                names.push("alpha".into());
                if self.o == 1 {
                    names.push("gamma".into());
                }
                if self.q == 1 {
                    names.push("beta".into());
                } else {
                    names.extend((1..=self.q).map(|j| format!("beta{j}")));
                }
            }
            VolatilityFamily::Figarch => {
                if self.p == 1 {
                    names.push("phi".into());
                }
                names.push("d".into());
                names.push("beta".into());
            }
        }
        names
    }

    /// Number of pieces sharing the GARCH stationarity budget.
    fn budget_parts(&self) -> usize {
        1 + self.o + self.q
    }

    /// `T(psi)`.
    pub fn to_constrained(&self, psi: &DVector<f64>) -> DVector<f64> {
        match self.family {
            VolatilityFamily::Garch => {
                let m = self.budget_parts();
                let mut theta = DVector::zeros(self.dim());
                theta[0] = sigmoid(psi[0]);
                let mut remaining = sigmoid(psi[1]);
                for j in 0..m {
                    let part = if j + 1 < m {
                        let keep = sigmoid(psi[2 + j]);
                        let part = remaining * (1.0 - keep);
                        remaining *= keep;
                        part
                    } else {
                        remaining
                    };
                    theta[1 + j] = part;
                }
                if self.o == 1 {
                    // The budget carries gamma / 2.
                    theta[2] *= 2.0;
                }
                theta
            }
            VolatilityFamily::Egarch => {
                let mut theta = psi.clone();
                let b = 2 + self.o;
                if self.q == 1 {
                    theta[b] = 2.0 * sigmoid(psi[b]) - 1.0;
                } else {
                    let r1 = 2.0 * sigmoid(psi[b]) - 1.0;
                    let r2 = 2.0 * sigmoid(psi[b + 1]) - 1.0;
                    theta[b] = r1 * (1.0 - r2);
                    theta[b + 1] = r2;
                }
                theta
            }
            VolatilityFamily::Figarch => {
                let (i_d, i_b) = (1 + self.p, 2 + self.p);
                let d = sigmoid(psi[i_d]);
                let phi = if self.p == 1 { sigmoid(psi[1]) * (1.0 - d) / 2.0 } else { 0.0 };
                let beta = sigmoid(psi[i_b]) * (phi + d);
                let mut theta = DVector::zeros(self.dim());
                theta[0] = sigmoid(psi[0]);
                if self.p == 1 {
                    theta[1] = phi;
                }
                theta[i_d] = d;
                theta[i_b] = beta;
                theta
            }
        }
    }

    /// `T^{-1}(theta)`; fails outside the stationarity region.
    pub fn to_unconstrained(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        let outside = |index: usize| Error::OutsideSupport {
            index,
            value: theta[index],
        };
        let mut psi = DVector::zeros(self.dim());
        match self.family {
            VolatilityFamily::Garch => {
                if !(theta[0] > 0.0 && theta[0] < 1.0) {
                    return Err(outside(0));
                }
                psi[0] = logit(theta[0]);
                let m = self.budget_parts();
                let mut parts: Vec<f64> = (0..m).map(|j| theta[1 + j]).collect();
                if self.o == 1 {
                    parts[1] /= 2.0;
                }
                for (j, &c) in parts.iter().enumerate() {
                    if !(c > 0.0) {
                        return Err(outside(1 + j));
                    }
                }
                let total: f64 = parts.iter().sum();
                if !(total < 1.0) {
                    return Err(outside(1));
                }
                psi[1] = logit(total);
                for j in 0..m.saturating_sub(1) {
                    let rest: f64 = parts[j + 1..].iter().sum();
                    psi[2 + j] = rest.ln() - parts[j].ln();
                }
            }
            VolatilityFamily::Egarch => {
                let b = 2 + self.o;
                for i in 0..b {
                    psi[i] = theta[i];
                }
                let to_psi = |r: f64, index: usize| {
                    if r > -1.0 && r < 1.0 {
                        Ok(logit((r + 1.0) / 2.0))
                    } else {
                        Err(Error::OutsideSupport { index, value: r })
                    }
                };
                if self.q == 1 {
                    psi[b] = to_psi(theta[b], b)?;
                } else {
                    let r2 = theta[b + 1];
                    psi[b + 1] = to_psi(r2, b + 1)?;
                    psi[b] = to_psi(theta[b] / (1.0 - r2), b)?;
                }
            }
            VolatilityFamily::Figarch => {
                let (i_d, i_b) = (1 + self.p, 2 + self.p);
                let (omega, d, beta) = (theta[0], theta[i_d], theta[i_b]);
                let phi = if self.p == 1 { theta[1] } else { 0.0 };
                if !(omega > 0.0 && omega < 1.0) {
                    return Err(outside(0));
                }
                if !(d > 0.0 && d < 1.0) {
                    return Err(outside(i_d));
                }
                psi[0] = logit(omega);
                psi[i_d] = logit(d);
                if self.p == 1 {
                    let u = phi / ((1.0 - d) / 2.0);
                    if !(u > 0.0 && u < 1.0) {
                        return Err(outside(1));
                    }
                    psi[1] = logit(u);
                }
                let u = beta / (phi + d);
                if !(u > 0.0 && u < 1.0) {
                    return Err(outside(i_b));
                }
                psi[i_b] = logit(u);
            }
        }
        Ok(psi)
    }

    /// `log |det dT/dpsi|`.
    pub fn log_abs_det(&self, psi: &DVector<f64>) -> f64 {
        match self.family {
            VolatilityFamily::Garch => {
                let m = self.budget_parts();
                let mut total = log_sigmoid_prime(psi[0]) + log_sigmoid_prime(psi[1]);
                let mut remaining = sigmoid(psi[1]);
                for j in 0..m.saturating_sub(1) {
                    total += remaining.ln() + log_sigmoid_prime(psi[2 + j]);
                    remaining *= sigmoid(psi[2 + j]);
                }
                if self.o == 1 {
                    total += 2.0f64.ln();
                }
                total
            }
            VolatilityFamily::Egarch => {
                let b = 2 + self.o;
                let mut total = 2.0f64.ln() + log_sigmoid_prime(psi[b]);
                if self.q == 2 {
                    let r2 = 2.0 * sigmoid(psi[b + 1]) - 1.0;
                    total += 2.0f64.ln() + log_sigmoid_prime(psi[b + 1]) + (1.0 - r2).ln();
                }
                total
            }
            VolatilityFamily::Figarch => {
                let (i_d, i_b) = (1 + self.p, 2 + self.p);
                let d = sigmoid(psi[i_d]);
                let mut total = log_sigmoid_prime(psi[0]) + log_sigmoid_prime(psi[i_d]);
                let phi = if self.p == 1 {
                    total += log_sigmoid_prime(psi[1]) + ((1.0 - d) / 2.0).ln();
                    sigmoid(psi[1]) * (1.0 - d) / 2.0
                } else {
                    0.0
                };
                total + log_sigmoid_prime(psi[i_b]) + (phi + d).ln()
            }
        }
    }

    /// Conditional variances `sigma^2_1..sigma^2_n` at constrained parameters.
    ///
    /// `init_var` seeds `sigma^2_1` and every pre-sample value (variances and,
    /// for FIGARCH, squared returns).
    pub fn variance_path(&self, theta: &DVector<f64>, returns: &[f64], init_var: f64) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        let n = returns.len();
        let mut out = vec![0.0; n];
        match self.family {
            VolatilityFamily::Garch => {
                let omega = theta[0];
                let alpha = theta[1];
                let gamma = if self.o == 1 { theta[2] } else { 0.0 };
                let betas = &theta.as_slice()[2 + self.o..];
                for t in 0..n {
                    out[t] = if t == 0 {
                        init_var
                    } else {
                        let r = returns[t - 1];
                        let lev = if r < 0.0 { gamma } else { 0.0 };
                        let mut s = omega + (alpha + lev) * r * r;
                        for (j, b) in betas.iter().enumerate() {
                            s += b * if t > j { out[t - 1 - j] } else { init_var };
                        }
                        s
                    };
                    check_variance(out[t], t)?;
                }
            }
            VolatilityFamily::Egarch => {
                let omega = theta[0];
                let alpha = theta[1];
                let gamma = if self.o == 1 { theta[2] } else { 0.0 };
                let betas = &theta.as_slice()[2 + self.o..];
                let init_log = init_var.ln();
                let mut logs = vec![0.0; n];
                let centre = (2.0 / PI).sqrt();
                for t in 0..n {
                    logs[t] = if t == 0 {
                        init_log
                    } else {
                        let z = returns[t - 1] / (logs[t - 1] / 2.0).exp();
                        let mut l = omega + alpha * (z.abs() - centre) + gamma * z;
                        for (j, b) in betas.iter().enumerate() {
                            l += b * if t > j { logs[t - 1 - j] } else { init_log };
                        }
                        l
                    };
                    out[t] = logs[t].exp();
                    check_variance(out[t], t)?;
                }
            }
            VolatilityFamily::Figarch => {
                let omega = theta[0];
                let phi = if self.p == 1 { theta[1] } else { 0.0 };
                let d = theta[1 + self.p];
                let beta = theta[2 + self.p];
                let lambda = figarch_weights(phi, d, beta, self.truncation);
                let k_max = lambda.len();
                // tail[k] = sum of lambda_j for j >= k (1-based lags).
                let mut tail = vec![0.0; k_max + 2];
                for k in (1..=k_max).rev() {
                    tail[k] = tail[k + 1] + lambda[k - 1];
                }
                let constant = omega / (1.0 - beta);
                let squares: Vec<f64> = returns.iter().map(|r| r * r).collect();
                for t in 0..n {
                    let in_sample = t.min(k_max);
                    let mut s = constant;
                    for k in 1..=in_sample {
                        s += lambda[k - 1] * squares[t - k];
                    }
                    if t < k_max {
                        s += init_var * tail[t + 1];
                    }
                    out[t] = s;
                    check_variance(s, t)?;
                }
            }
        }
        Ok(out)
    }

    /// Gaussian log-likelihood at constrained parameters.
    pub fn loglik_constrained(&self, theta: &DVector<f64>, returns: &[f64], init_var: f64) -> Result<f64> {
        let var = self.variance_path(theta, returns, init_var)?;
        let ln2pi = (2.0 * PI).ln();
        Ok(returns
            .iter()
            .zip(&var)
            .map(|(r, s)| -0.5 * (ln2pi + s.ln() + r * r / s))
            .sum())
    }
}

fn check_variance(v: f64, index: usize) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::VarianceNotFinite { index })
    }
}

impl JointMap for VolatilitySpec {
    fn dim(&self) -> usize {
        VolatilitySpec::dim(self)
    }

    fn forward(&self, psi: &DVector<f64>) -> DVector<f64> {
        self.to_constrained(psi)
    }

    fn inverse(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.to_unconstrained(theta)
    }

    fn log_abs_det_forward(&self, psi: &DVector<f64>) -> f64 {
        self.log_abs_det(psi)
    }
}

/// ARCH(inf) weights `lambda_1..lambda_K` of FIGARCH(p, d, 1).
///
/// From `1 - (1 - phi L)(1 - L)^d / (1 - beta L)`: with `pi_k` the coefficients
/// of `(1 - L)^d` and `c_k = pi_k - phi pi_{k-1}`, `lambda_1 = phi - beta + d` and
/// `lambda_k = beta lambda_{k-1} - c_k`.
pub fn figarch_weights(phi: f64, d: f64, beta: f64, lags: usize) -> Vec<f64> {
    let mut lambda = Vec::with_capacity(lags);
    let mut pi_prev = 1.0;
    for k in 1..=lags {
        let pi_k = pi_prev * (k as f64 - 1.0 - d) / k as f64;
        let c_k = pi_k - phi * pi_prev;
        let next = match lambda.last() {
            None => -c_k - beta,
            Some(&prev) => beta * prev - c_k,
        };
        lambda.push(next);
        pi_prev = pi_k;
    }
    lambda
}

/// Biased (`1/n`) sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Log-likelihood of `returns` at unconstrained `psi`, with `sigma^2_1` the sample variance.
pub fn garch_family_loglik(spec: &VolatilitySpec, psi: &DVector<f64>, returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptyInput("return series"));
    }
    spec.loglik_constrained(&spec.to_constrained(psi), returns, sample_variance(returns))
}

/// Simulates a GARCH(1,1) path started from the unconditional variance.
pub fn simulate_garch<R: Rng + ?Sized>(omega: f64, alpha: f64, beta: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let burn = 500;
    let mut var = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        let r = var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if t >= burn {
            out.push(r);
        }
        var = omega + alpha * r * r + beta * var;
    }
    out
}

/// A volatility model bound to a return series.
#[derive(Debug, Clone)]
pub struct VolatilityModel {
    spec: VolatilitySpec,
    returns: Vec<f64>,
    init_var: f64,
}

impl VolatilityModel {
    pub fn new(spec: VolatilitySpec, returns: Vec<f64>) -> Result<Self> {
        if returns.len() < 2 {
            return Err(Error::EmptyInput("return series"));
        }
        let init_var = sample_variance(&returns);
        Ok(VolatilityModel {
            spec,
            returns,
            init_var,
        })
    }

    pub fn spec(&self) -> &VolatilitySpec {
        &self.spec
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn init_var(&self) -> f64 {
        self.init_var
    }

    /// Variances over `series` (e.g. train followed by test) seeded with the training variance.
    pub fn fitted_variances(&self, psi: &DVector<f64>, series: &[f64]) -> Result<Vec<f64>> {
        self.spec
            .variance_path(&self.spec.to_constrained(psi), series, self.init_var)
    }
}

impl Model for VolatilityModel {
    fn name(&self) -> String {
        self.spec.label()
    }

    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn transform(&self) -> ParamTransform {
        ParamTransform::Joint(Arc::new(self.spec.clone()))
    }

    fn log_likelihood(&self, psi: &DVector<f64>) -> Result<f64> {
        self.spec
            .loglik_constrained(&self.spec.to_constrained(psi), &self.returns, self.init_var)
    }

    fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dvector, DMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::ln_gamma;

    fn all_specs() -> Vec<VolatilitySpec> {
        vec![
            VolatilitySpec::arch(),
            VolatilitySpec::garch(),
            VolatilitySpec::gjr(1).unwrap(),
            VolatilitySpec::gjr(2).unwrap(),
            VolatilitySpec::egarch(0, 1).unwrap(),
            VolatilitySpec::egarch(1, 1).unwrap(),
            VolatilitySpec::egarch(1, 2).unwrap(),
            VolatilitySpec::figarch(0).unwrap(),
            VolatilitySpec::figarch(1).unwrap(),
        ]
    }

    fn series(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        simulate_garch(0.1, 0.15, 0.75, n, &mut rng)
    }

    fn random_psi(spec: &VolatilitySpec, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(spec.dim(), |_, _| 0.7 * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn garch_one_step() {
        let spec = VolatilitySpec::garch();
        let path = spec
            .variance_path(&dvector![0.1, 0.2, 0.7], &[1.0, 0.0], 1.0)
            .unwrap();
        assert_relative_eq!(path[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn arch_without_alpha_is_iid_normal() {
        let spec = VolatilitySpec::arch();
        let r = series(30, 1);
        let omega = 0.8;
        let ll = spec.loglik_constrained(&dvector![omega, 0.0], &r, omega).unwrap();
        let iid: f64 = r
            .iter()
            .map(|x| -0.5 * (2.0 * PI * omega).ln() - x * x / (2.0 * omega))
            .sum();
        assert_relative_eq!(ll, iid, epsilon = 1e-10);
    }

    #[test]
    fn figarch_weights_match_gamma_function_oracle() {
        let (phi, d, beta) = (0.1, 0.45, 0.3);
        let lags = 200;
        let fast = figarch_weights(phi, d, beta, lags);
        let pi = |k: usize| -> f64 {
            if k == 0 {
                1.0
            } else {
                // pi_k = Gamma(k - d) / (Gamma(k + 1) Gamma(-d)), Gamma(-d) = -Gamma(1 - d) / d.
                -(d.ln() + ln_gamma(k as f64 - d) - ln_gamma(k as f64 + 1.0) - ln_gamma(1.0 - d)).exp()
            }
        };
        for k in 1..=lags {
            let delta: f64 = (0..=k)
                .map(|j| {
                    let c = if j == 0 { 1.0 } else { pi(j) - phi * pi(j - 1) };
                    beta.powi((k - j) as i32) * c
                })
                .sum();
            assert!((fast[k - 1] + delta).abs() < 1e-12, "lag {k}");
        }
    }

    /// Straightforward re-implementation used as an oracle.
    fn brute_force(spec: &VolatilitySpec, theta: &DVector<f64>, r: &[f64], v0: f64) -> f64 {
        let n = r.len();
        let mut var = vec![v0; n];
        match spec.family {
            VolatilityFamily::Garch => {
                let gamma = if spec.o == 1 { theta[2] } else { 0.0 };
                let b0 = 2 + spec.o;
                for t in 1..n {
                    let neg = if r[t - 1] < 0.0 { 1.0 } else { 0.0 };
                    var[t] = theta[0] + theta[1] * r[t - 1].powi(2) + gamma * neg * r[t - 1].powi(2);
                    for j in 0..spec.q {
                        let past = if t > j { var[t - j - 1] } else { v0 };
                        var[t] += theta[b0 + j] * past;
                    }
                }
            }
            VolatilityFamily::Egarch => {
                let gamma = if spec.o == 1 { theta[2] } else { 0.0 };
                let b0 = 2 + spec.o;
                for t in 1..n {
                    let z = r[t - 1] / var[t - 1].sqrt();
                    let mut l = theta[0] + theta[1] * (z.abs() - (2.0 / PI).sqrt()) + gamma * z;
                    for j in 0..spec.q {
                        let past = if t > j { var[t - j - 1] } else { v0 };
                        l += theta[b0 + j] * past.ln();
                    }
                    var[t] = l.exp();
                }
            }
            VolatilityFamily::Figarch => {
                let phi = if spec.p == 1 { theta[1] } else { 0.0 };
                let d = theta[1 + spec.p];
                let beta = theta[2 + spec.p];
                let lags = spec.truncation;
                let mut pis = vec![1.0];
                for k in 1..=lags {
                    pis.push(-(d.ln() + ln_gamma(k as f64 - d) - ln_gamma(k as f64 + 1.0) - ln_gamma(1.0 - d)).exp());
                }
                let lambda: Vec<f64> = (1..=lags)
                    .map(|k| {
                        -(0..=k)
                            .map(|j| {
                                let c = if j == 0 { 1.0 } else { pis[j] - phi * pis[j - 1] };
                                beta.powi((k - j) as i32) * c
                            })
                            .sum::<f64>()
                    })
                    .collect();
                for t in 0..n {
                    var[t] = theta[0] / (1.0 - beta);
                    for k in 1..=lags {
                        let e2 = if t >= k { r[t - k].powi(2) } else { v0 };
                        var[t] += lambda[k - 1] * e2;
                    }
                }
            }
        }
        (0..n)
            .map(|t| -0.5 * (2.0 * PI).ln() - 0.5 * var[t].ln() - 0.5 * r[t].powi(2) / var[t])
            .sum()
    }

    #[test]
    fn logliks_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for spec in all_specs() {
            let spec = spec.with_truncation(300);
            for rep in 0..5 {
                let r = series(50, 100 + rep);
                let psi = random_psi(&spec, &mut rng);
                let theta = spec.to_constrained(&psi);
                let v0 = sample_variance(&r);
                let slow = brute_force(&spec, &theta, &r, v0);
                let fast = match spec.loglik_constrained(&theta, &r, v0) {
                    Ok(v) => v,
                    Err(Error::VarianceNotFinite { .. }) => {
                        // Explosive EGARCH draws: the oracle must break down too.
                        assert!(!slow.is_finite(), "{}", spec.label());
                        continue;
                    }
                    Err(e) => panic!("{e}"),
                };
                assert!(
                    (fast - slow).abs() < 1e-9 * slow.abs().max(1.0),
                    "{} fast={fast} slow={slow}",
                    spec.label()
                );
            }
        }
    }

    #[test]
    fn round_trip_and_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for spec in all_specs() {
            for _ in 0..10 {
                let psi = random_psi(&spec, &mut rng);
                let theta = spec.to_constrained(&psi);
                let back = spec.to_unconstrained(&theta).unwrap();
                assert!((&back - &psi).amax() < 1e-8, "{} {psi} {back}", spec.label());

                let k = spec.dim();
                let mut jac = DMatrix::zeros(k, k);
                for j in 0..k {
                    let mut up = psi.clone();
                    up[j] += h;
                    let mut dn = psi.clone();
                    dn[j] -= h;
                    let col = (spec.to_constrained(&up) - spec.to_constrained(&dn)) / (2.0 * h);
                    jac.set_column(j, &col);
                }
                let numeric = jac.determinant().abs().ln();
                assert!((numeric - spec.log_abs_det(&psi)).abs() < 1e-5, "{}", spec.label());
            }
        }
    }

    #[test]
    fn outside_support_is_reported() {
        let spec = VolatilitySpec::garch();
        let err = spec.to_unconstrained(&dvector![0.1, 0.5, 0.6]).unwrap_err();
        assert!(matches!(err, Error::OutsideSupport { .. }));
    }

    #[test]
    fn labels_and_dims() {
        let dims: Vec<usize> = all_specs().iter().map(|s| s.dim()).collect();
        assert_eq!(dims, vec![2, 3, 4, 5, 3, 4, 5, 3, 4]);
        assert_eq!(VolatilitySpec::figarch(1).unwrap().label(), "FIGARCH(1,1,1)");
        assert!(VolatilitySpec::new(VolatilityFamily::Figarch, 2, 0, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn maps_satisfy_stationarity(raw in proptest::collection::vec(-25.0f64..25.0, 5)) {
            let gjr = VolatilitySpec::gjr(2).unwrap();
            let t = gjr.to_constrained(&DVector::from_column_slice(&raw[..5]));
            prop_assert!(t[1] >= 0.0 && t[2] >= 0.0 && t[3] >= 0.0 && t[4] >= 0.0);
            prop_assert!(t[1] + t[2] / 2.0 + t[3] + t[4] < 1.0);

            let fig = VolatilitySpec::figarch(1).unwrap();
            let t = fig.to_constrained(&DVector::from_column_slice(&raw[..4]));
            prop_assert!(t[2] > 0.0 && t[2] < 1.0);
            prop_assert!(t[1] >= 0.0 && t[1] <= (1.0 - t[2]) / 2.0);
            prop_assert!(t[3] >= 0.0 && t[3] <= t[1] + t[2]);
            let w = figarch_weights(t[1], t[2], t[3], 200);
            prop_assert!(w.iter().all(|&l| l >= -1e-15));

            let eg = VolatilitySpec::egarch(1, 2).unwrap();
            let clamped: Vec<f64> = raw.iter().map(|x| x.clamp(-15.0, 15.0)).collect();
            let t = eg.to_constrained(&DVector::from_vec(clamped));
            // AR(2) stationarity triangle.
            prop_assert!(t[3] + t[4] < 1.0 && t[4] - t[3] < 1.0 && t[4].abs() < 1.0);
        }

        #[test]
        fn loglik_is_finite_on_sample_series(raw in proptest::collection::vec(-6.0f64..6.0, 4)) {
            let r = series(300, 9);
            let spec = VolatilitySpec::figarch(1).unwrap().with_truncation(200);
            let ll = garch_family_loglik(&spec, &DVector::from_vec(raw), &r).unwrap();
            prop_assert!(ll.is_finite());
        }
    }
}
