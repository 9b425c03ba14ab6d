//! The EMGVB training loop and the MGVB baseline.
//!
//! Each iteration moves the mean along the momentum, retracts the precision
//! (EMGVB) or the covariance (MGVB) back onto the SPD manifold, draws from the
//! new posterior, estimates natural gradients and the lower bound, and folds
//! the new gradient into the transported momentum.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{
    clip_natural_gradients, estimate_natgrads, evaluate_draws, DrawBatch, GradEstimatorKind,
};
use crate::gaussian::{Layout, NaturalGradientPair, PosteriorStructure, PrecisionGradient, VariationalState};
use crate::models::{Model, PriorSpec};
use crate::spd::{self, TangentMatrix};

/// Update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Retraction on the precision with exact natural gradients.
    Emgvb,
    /// Retraction on the covariance with the approximate natural gradient `Sigma grad Sigma`.
    Mgvb,
}

impl OptimizerKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "emgvb" => Ok(OptimizerKind::Emgvb),
            "mgvb" => Ok(OptimizerKind::Mgvb),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Emgvb => "emgvb",
            OptimizerKind::Mgvb => "mgvb",
        }
    }
}

/// Hyperparameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub beta: f64,
    pub omega: f64,
    pub samples: usize,
    pub window: usize,
    pub patience: usize,
    pub t_max: usize,
    pub t_prime: usize,
    pub l_max: Option<f64>,
    /// Clip threshold for the first `window` iterations.
    pub l_max_init: Option<f64>,
    pub estimator: GradEstimatorKind,
    pub control_variates: bool,
    pub seed: u64,
    /// Keep every n-th `(mu, P)` in the trace; 0 keeps none.
    pub snapshot_every: usize,
    pub max_halvings: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            beta: 0.01,
            omega: 0.4,
            samples: 75,
            window: 30,
            patience: 500,
            t_max: 1200,
            t_prime: 1000,
            l_max: None,
            l_max_init: None,
            estimator: GradEstimatorKind::GaussianPriorLoglik,
            control_variates: true,
            seed: 0,
            snapshot_every: 0,
            max_halvings: 5,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0,1), got {}", self.beta));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return bad(format!("omega must lie in (0,1), got {}", self.omega));
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.t_max > 0 && (self.window > self.t_max || self.t_prime > self.t_max) {
            return bad(format!(
                "window ({}) and t_prime ({}) must not exceed t_max ({})",
                self.window, self.t_prime, self.t_max
            ));
        }
        for l in [self.l_max, self.l_max_init].into_iter().flatten() {
            if !(l > 0.0) {
                return bad(format!("clip thresholds must be positive, got {l}"));
            }
        }
        Ok(())
    }

    fn clip_at(&self, t: usize) -> Option<f64> {
        if t <= self.window {
            self.l_max_init.or(self.l_max)
        } else {
            self.l_max
        }
    }
}

/// One iteration of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub lb_raw: f64,
    pub lb_smooth: f64,
    pub lb_best: f64,
    /// Step size applied when leaving this iterate (after any halving).
    pub beta_t: f64,
    pub clipped: bool,
    /// Step-size halvings needed to leave this iterate.
    pub halvings: usize,
}

/// Thinned parameter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub mu: DVector<f64>,
    pub prec: nalgebra::DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    NotRun,
    MaxIterations,
    Patience,
}

/// Per-iteration history of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub window: usize,
    pub records: Vec<TraceRecord>,
    pub snapshots: Vec<Snapshot>,
    pub best_iter: usize,
    pub stop: StopReason,
}

impl RunTrace {
    pub fn new(window: usize) -> Self {
        RunTrace {
            window: window.max(1),
            records: Vec::new(),
            snapshots: Vec::new(),
            best_iter: 0,
            stop: StopReason::NotRun,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a raw LB value; returns true when it sets a new best smoothed LB.
    pub fn push(&mut self, lb_raw: f64, beta_t: f64, clipped: bool) -> bool {
        let t = self.records.len() + 1;
        let start = t.saturating_sub(self.window);
        let tail = self.records[start..].iter().map(|r| r.lb_raw);
        let count = (t - start) as f64;
        let lb_smooth = (tail.sum::<f64>() + lb_raw) / count;
        let improved = match self.records.last() {
            None => true,
            Some(last) => lb_smooth > last.lb_best,
        };
        let lb_best = if improved { lb_smooth } else { self.records.last().map_or(lb_smooth, |r| r.lb_best) };
        if improved {
            self.best_iter = t;
        }
        self.records.push(TraceRecord {
            iter: t,
            lb_raw,
            lb_smooth,
            lb_best,
            beta_t,
            clipped,
            halvings: 0,
        });
        improved
    }

    pub fn best_smoothed(&self) -> Option<f64> {
        self.records.last().map(|r| r.lb_best)
    }

    /// CSV with columns `iter,lb_raw,lb_smooth,beta_t,clipped`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,lb_raw,lb_smooth,beta_t,clipped\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.iter,
                r.lb_raw,
                r.lb_smooth,
                r.beta_t,
                u8::from(r.clipped)
            );
        }
        out
    }
}

/// `min(beta, beta t' / t)`.
pub fn lr_schedule(beta: f64, t: usize, t_prime: usize) -> f64 {
    if t <= t_prime {
        beta
    } else {
        beta * t_prime as f64 / t as f64
    }
}

/// True once `t_max` iterations are recorded or the best smoothed LB is `patience` iterations old.
pub fn should_stop(trace: &RunTrace, patience: usize, t_max: usize) -> bool {
    let t = trace.len();
    t >= t_max || (t > 0 && t - trace.best_iter >= patience)
}

fn retraction_failed(e: &Error) -> bool {
    matches!(
        e,
        Error::RetractionFailed { .. } | Error::ComplexRoot { .. } | Error::NotPositiveDefinite { .. }
    )
}

fn layout_mismatch() -> Error {
    Error::InvalidStructure("momentum layout does not match the state".into())
}

/// EMGVB move: `mu + beta m_mu`, `R_P(beta m_prec)`; returns the new state and
/// the momentum transported to its tangent space.
pub fn emgvb_update(
    state: &VariationalState,
    mom: &NaturalGradientPair,
    beta_t: f64,
) -> Result<(VariationalState, NaturalGradientPair)> {
    let mu = state.mu() + &mom.g_mu * beta_t;
    match (state.layout(), &mom.g_prec) {
        (Layout::Diagonal(diag), PrecisionGradient::Diagonal(m)) => {
            let mut prec = DVector::zeros(state.dim());
            let mut moved = DVector::zeros(state.dim());
            for i in 0..state.dim() {
                let x = beta_t * m[i];
                let p = diag.prec[i] + x + (x * diag.var[i] * x) * 0.5;
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::RetractionFailed { pivot: i });
                }
                prec[i] = p;
                moved[i] = m[i] * (p * diag.var[i]);
            }
            let next = VariationalState::diagonal(mu, prec)?;
            Ok((
                next,
                NaturalGradientPair {
                    g_mu: mom.g_mu.clone(),
                    g_prec: PrecisionGradient::Diagonal(moved),
                },
            ))
        }
        (Layout::Dense(blocks), PrecisionGradient::Blocks(m)) if blocks.len() == m.len() => {
            let mut precs = Vec::with_capacity(blocks.len());
            let mut moved = Vec::with_capacity(blocks.len());
            for (b, mi) in blocks.iter().zip(m) {
                let p_new = spd::retract(&b.prec, &b.cov, &mi.scale(beta_t), false)?;
                moved.push(spd::transport(&b.prec, &b.cov, &p_new, mi)?);
                precs.push(p_new);
            }
            let next = VariationalState::from_blocks(mu, state.structure().clone(), precs)?;
            Ok((
                next,
                NaturalGradientPair {
                    g_mu: mom.g_mu.clone(),
                    g_prec: PrecisionGradient::Blocks(moved),
                },
            ))
        }
        _ => Err(layout_mismatch()),
    }
}

/// `omega * transported + (1 - omega) * grads`.
pub fn update_momentum(
    transported: &NaturalGradientPair,
    grads: &NaturalGradientPair,
    omega: f64,
) -> Result<NaturalGradientPair> {
    transported.combine(omega, grads, 1.0 - omega)
}

/// Full EMGVB step: move with `mom`, then blend the transported momentum with `grads`.
pub fn emgvb_step(
    state: &VariationalState,
    mom: &NaturalGradientPair,
    grads: &NaturalGradientPair,
    beta_t: f64,
    omega: f64,
) -> Result<(VariationalState, NaturalGradientPair)> {
    let (next, transported) = emgvb_update(state, mom, beta_t)?;
    Ok((next, update_momentum(&transported, grads, omega)?))
}

/// MGVB search direction from EMGVB-form gradients: the precision part
/// `g_prec = -2 grad_Sigma` becomes `Sigma grad_Sigma Sigma`.
pub fn mgvb_direction(state: &VariationalState, grads: &NaturalGradientPair) -> Result<NaturalGradientPair> {
    let g_prec = match (state.layout(), &grads.g_prec) {
        (Layout::Diagonal(diag), PrecisionGradient::Diagonal(g)) => {
            PrecisionGradient::Diagonal(DVector::from_fn(state.dim(), |i, _| {
                diag.var[i] * (-0.5 * g[i]) * diag.var[i]
            }))
        }
        (Layout::Dense(blocks), PrecisionGradient::Blocks(g)) if blocks.len() == g.len() => {
            PrecisionGradient::Blocks(
                blocks
                    .iter()
                    .zip(g)
                    .map(|(b, gi)| {
                        let c = b.cov.as_matrix();
                        TangentMatrix::new_unchecked(spd::symmetrized(&(c * (gi.as_matrix() * -0.5) * c)))
                    })
                    .collect(),
            )
        }
        _ => return Err(layout_mismatch()),
    };
    Ok(NaturalGradientPair {
        g_mu: grads.g_mu.clone(),
        g_prec,
    })
}

/// MGVB move: `mu + beta m_mu`, `R_Sigma(beta m_Sigma)`; the momentum's
/// precision slot carries the covariance direction.
pub fn mgvb_update(
    state: &VariationalState,
    mom: &NaturalGradientPair,
    beta_t: f64,
) -> Result<(VariationalState, NaturalGradientPair)> {
    let mu = state.mu() + &mom.g_mu * beta_t;
    match (state.layout(), &mom.g_prec) {
        (Layout::Diagonal(diag), PrecisionGradient::Diagonal(m)) => {
            let mut prec = DVector::zeros(state.dim());
            let mut moved = DVector::zeros(state.dim());
            for i in 0..state.dim() {
                let x = beta_t * m[i];
                let v = diag.var[i] + x + (x * diag.prec[i] * x) * 0.5;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::RetractionFailed { pivot: i });
                }
                prec[i] = 1.0 / v;
                moved[i] = m[i] * (v * diag.prec[i]);
            }
            let next = VariationalState::diagonal(mu, prec)?;
            Ok((
                next,
                NaturalGradientPair {
                    g_mu: mom.g_mu.clone(),
                    g_prec: PrecisionGradient::Diagonal(moved),
                },
            ))
        }
        (Layout::Dense(blocks), PrecisionGradient::Blocks(m)) if blocks.len() == m.len() => {
            let mut precs = Vec::with_capacity(blocks.len());
            let mut moved = Vec::with_capacity(blocks.len());
            for (b, mi) in blocks.iter().zip(m) {
                let cov_new = spd::retract(&b.cov, &b.prec, &mi.scale(beta_t), false)?;
                moved.push(spd::transport(&b.cov, &b.prec, &cov_new, mi)?);
                let (p_new, _) = spd::spd_inverse(&cov_new)?;
                precs.push(p_new);
            }
            let next = VariationalState::from_blocks(mu, state.structure().clone(), precs)?;
            Ok((
                next,
                NaturalGradientPair {
                    g_mu: mom.g_mu.clone(),
                    g_prec: PrecisionGradient::Blocks(moved),
                },
            ))
        }
        _ => Err(layout_mismatch()),
    }
}

/// Full MGVB step; `grads` are EMGVB-form natural gradients at the new state.
pub fn mgvb_step(
    state: &VariationalState,
    mom: &NaturalGradientPair,
    grads: &NaturalGradientPair,
    beta_t: f64,
    omega: f64,
) -> Result<(VariationalState, NaturalGradientPair)> {
    let (next, transported) = mgvb_update(state, mom, beta_t)?;
    let direction = mgvb_direction(&next, grads)?;
    Ok((next, update_momentum(&transported, &direction, omega)?))
}

/// Result of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Iterate with the best smoothed lower bound.
    pub state: VariationalState,
    pub final_state: VariationalState,
    pub trace: RunTrace,
}

struct Estimate {
    grads: NaturalGradientPair,
    lb: f64,
    clipped: bool,
}

fn estimate<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    cfg: &TrainerConfig,
    state: &VariationalState,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Estimate> {
    let thetas = state.sample(cfg.samples, rng);
    let (ll, h) = evaluate_draws(model, prior, state, &thetas)?;
    let lb = h.iter().sum::<f64>() / h.len() as f64;
    if !lb.is_finite() {
        return Err(Error::NonFiniteLowerBound { iteration: t });
    }
    let logf = match cfg.estimator {
        GradEstimatorKind::HFunction => h,
        GradEstimatorKind::GaussianPriorLoglik => ll,
    };
    let batch = DrawBatch::new(thetas, logf)?;
    let grads = estimate_natgrads(state, prior, &batch, cfg.estimator, cfg.control_variates)?;
    if !grads.is_finite() {
        return Err(Error::NonFiniteLowerBound { iteration: t });
    }
    let (grads, clipped) = match cfg.clip_at(t) {
        Some(l) => clip_natural_gradients(state, &grads, l),
        None => (grads, false),
    };
    Ok(Estimate { grads, lb, clipped })
}

fn check_dims<M: Model + ?Sized>(model: &M, prior: &PriorSpec, init: &VariationalState) -> Result<()> {
    for found in [prior.dim(), init.dim()] {
        if found != model.dim() {
            return Err(Error::Dimension {
                expected: model.dim(),
                found,
            });
        }
    }
    Ok(())
}

/// Runs the optimizer from `init` until patience or `t_max` stops it.
pub fn run<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    cfg: &TrainerConfig,
    kind: OptimizerKind,
    init: &VariationalState,
) -> Result<RunOutput> {
    cfg.validate()?;
    check_dims(model, prior, init)?;
    if cfg.estimator == GradEstimatorKind::GaussianPriorLoglik && !prior.is_gaussian() {
        return Err(Error::UnsupportedEstimator(
            "gaussian_prior_loglik needs a Gaussian prior".into(),
        ));
    }
    let mut trace = RunTrace::new(cfg.window);
    if cfg.t_max == 0 {
        return Ok(RunOutput {
            state: init.clone(),
            final_state: init.clone(),
            trace,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = init.clone();
    let first = estimate(model, prior, cfg, &state, 1, &mut rng)?;
    let mut mom = match kind {
        OptimizerKind::Emgvb => first.grads,
        OptimizerKind::Mgvb => mgvb_direction(&state, &first.grads)?,
    };
    trace.push(first.lb, lr_schedule(cfg.beta, 1, cfg.t_prime), first.clipped);
    snapshot(cfg, &mut trace, &state);
    let mut best = state.clone();

    loop {
        if should_stop(&trace, cfg.patience, cfg.t_max) {
            trace.stop = if trace.len() >= cfg.t_max {
                StopReason::MaxIterations
            } else {
                StopReason::Patience
            };
            break;
        }
        let t = trace.len();
        let scheduled = lr_schedule(cfg.beta, t, cfg.t_prime);
        let mut beta_t = scheduled;
        let mut halvings = 0;
        let (next, transported) = loop {
            let attempt = match kind {
                OptimizerKind::Emgvb => emgvb_update(&state, &mom, beta_t),
                OptimizerKind::Mgvb => mgvb_update(&state, &mom, beta_t),
            };
            match attempt {
                Ok(v) => break v,
                Err(e) if retraction_failed(&e) && halvings < cfg.max_halvings => {
                    halvings += 1;
                    beta_t /= 2.0;
                }
                Err(e) if retraction_failed(&e) => {
                    return Err(Error::StepAborted {
                        iteration: t,
                        attempts: halvings,
                        source: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        };
        if let Some(last) = trace.records.last_mut() {
            last.beta_t = beta_t;
            last.halvings = halvings;
        }
        state = next;
        let est = estimate(model, prior, cfg, &state, t + 1, &mut rng)?;
        let direction = match kind {
            OptimizerKind::Emgvb => est.grads,
            OptimizerKind::Mgvb => mgvb_direction(&state, &est.grads)?,
        };
        mom = update_momentum(&transported, &direction, cfg.omega)?;
        let improved = trace.push(est.lb, lr_schedule(cfg.beta, t + 1, cfg.t_prime), est.clipped);
        snapshot(cfg, &mut trace, &state);
        if improved {
            best = state.clone();
        }
    }
    Ok(RunOutput {
        state: best,
        final_state: state,
        trace,
    })
}

fn snapshot(cfg: &TrainerConfig, trace: &mut RunTrace, state: &VariationalState) {
    let t = trace.len();
    if cfg.snapshot_every > 0 && (t == 1 || t.is_multiple_of(cfg.snapshot_every)) {
        trace.snapshots.push(Snapshot {
            iter: t,
            mu: state.mu().clone(),
            prec: state.dense_precision(),
        });
    }
}

/// EMGVB with a block-diagonal posterior and an isotropic prior.
///
/// Each block keeps its own mean, precision and momentum; one likelihood value
/// per concatenated draw feeds every block's estimator.
pub fn run_block_diagonal<M: Model + ?Sized>(
    model: &M,
    prior: &PriorSpec,
    cfg: &TrainerConfig,
    init: &VariationalState,
) -> Result<RunOutput> {
    match init.structure() {
        PosteriorStructure::Block(_) | PosteriorStructure::Diagonal => {}
        PosteriorStructure::Full => {
            return Err(Error::InvalidStructure(
                "block-diagonal run needs a block or diagonal structure".into(),
            ))
        }
    }
    if prior.tau().is_none() {
        return Err(Error::UnsupportedEstimator(
            "block-diagonal run needs an isotropic Gaussian prior".into(),
        ));
    }
    run(model, prior, cfg, OptimizerKind::Emgvb, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ConjugateGaussian;
    use crate::spd::SpdMatrix;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn scalar_precision(p: f64) -> Result<SpdMatrix> {
        SpdMatrix::new(DMatrix::from_element(1, 1, p))
    }

    fn conjugate() -> (ConjugateGaussian, PriorSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ConjugateGaussian::simulate(50, &dvector![1.0, -0.5, 0.25], 1.0, &mut rng).unwrap();
        (model, PriorSpec::isotropic(DVector::zeros(3), 0.2).unwrap())
    }

    fn cfg() -> TrainerConfig {
        TrainerConfig {
            beta: 0.1,
            omega: 0.4,
            samples: 100,
            window: 10,
            patience: 1000,
            t_max: 200,
            t_prime: 100,
            estimator: GradEstimatorKind::HFunction,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn lr_schedule_examples() {
        assert_eq!(lr_schedule(0.1, 5, 10), 0.1);
        assert_eq!(lr_schedule(0.1, 10, 10), 0.1);
        assert_relative_eq!(lr_schedule(0.1, 20, 10), 0.05);
        let mut prev = lr_schedule(0.1, 11, 10);
        for t in 12..1000 {
            let next = lr_schedule(0.1, t, 10);
            assert!(next < prev);
            prev = next;
        }
    }

    #[test]
    fn should_stop_examples() {
        let mut trace = RunTrace::new(1);
        for i in 0..20 {
            trace.push(i as f64, 0.1, false);
            assert!(!should_stop(&trace, 5, 100));
        }
        for _ in 0..4 {
            trace.push(-1.0, 0.1, false);
            assert!(!should_stop(&trace, 5, 100));
        }
        trace.push(-1.0, 0.1, false);
        assert!(should_stop(&trace, 5, 100));
        let mut short = RunTrace::new(3);
        short.push(1.0, 0.1, false);
        short.push(2.0, 0.1, false);
        assert!(should_stop(&short, 100, 2));
    }

    #[test]
    fn smoothed_lb_is_window_mean() {
        let mut trace = RunTrace::new(3);
        for v in [1.0, 2.0, 6.0, 10.0] {
            trace.push(v, 0.1, false);
        }
        let s: Vec<f64> = trace.records.iter().map(|r| r.lb_smooth).collect();
        assert_eq!(s, vec![1.0, 1.5, 3.0, 6.0]);
        assert_eq!(trace.best_iter, 4);
        assert!(trace.to_csv().starts_with("iter,lb_raw,lb_smooth,beta_t,clipped\n1,1,1,0.1,0\n"));
    }

    #[test]
    fn zero_step_keeps_state() {
        let q = VariationalState::full(dvector![0.1, 0.2], SpdMatrix::new(dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap())
            .unwrap();
        let zero = NaturalGradientPair::zeros_like(&q);
        let (next, mom) = emgvb_step(&q, &zero, &zero, 0.5, 0.4).unwrap();
        assert_eq!(next.mu(), q.mu());
        assert!((next.dense_precision() - q.dense_precision()).amax() < 1e-15);
        assert_eq!(mom, zero);
        let (next, _) = mgvb_step(&q, &zero, &zero, 0.5, 0.4).unwrap();
        assert!((next.dense_precision() - q.dense_precision()).amax() < 1e-12);
    }

    #[test]
    fn scalar_emgvb_step_matches_retraction() {
        let q = VariationalState::full(dvector![0.0], scalar_precision(2.0).unwrap()).unwrap();
        let mom = NaturalGradientPair {
            g_mu: dvector![0.0],
            g_prec: PrecisionGradient::Blocks(vec![TangentMatrix::new(dmatrix![0.4]).unwrap()]),
        };
        let (next, _) = emgvb_update(&q, &mom, 1.0).unwrap();
        assert_relative_eq!(next.dense_precision()[(0, 0)], 2.44, epsilon = 1e-14);

        let d = VariationalState::diagonal(dvector![0.0], dvector![2.0]).unwrap();
        let mom_d = NaturalGradientPair {
            g_mu: dvector![0.0],
            g_prec: PrecisionGradient::Diagonal(dvector![0.4]),
        };
        let (next, _) = emgvb_update(&d, &mom_d, 1.0).unwrap();
        assert_relative_eq!(next.diagonal_precision().unwrap()[0], 2.44, epsilon = 1e-14);
    }

    #[test]
    fn momentum_with_omega_near_one_is_transport() {
        let q = VariationalState::full(dvector![0.0, 0.0], SpdMatrix::new(dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap())
            .unwrap();
        let mom = NaturalGradientPair {
            g_mu: dvector![0.3, -0.1],
            g_prec: PrecisionGradient::Blocks(vec![TangentMatrix::new(dmatrix![0.2, 0.05; 0.05, -0.1]).unwrap()]),
        };
        let grads = NaturalGradientPair {
            g_mu: dvector![5.0, 5.0],
            g_prec: PrecisionGradient::Blocks(vec![TangentMatrix::new(DMatrix::identity(2, 2)).unwrap()]),
        };
        let (_, transported) = emgvb_update(&q, &mom, 0.3).unwrap();
        let blended = update_momentum(&transported, &grads, 1.0).unwrap();
        assert_eq!(blended, transported);
    }

    #[test]
    fn mgvb_scalar_retraction_swaps_roles() {
        // Covariance 0.5, direction 0.4: 0.5 + 0.4 + 0.5 * 0.4 * 2 * 0.4 = 1.06.
        let q = VariationalState::full(dvector![0.0], scalar_precision(2.0).unwrap()).unwrap();
        let mom = NaturalGradientPair {
            g_mu: dvector![0.0],
            g_prec: PrecisionGradient::Blocks(vec![TangentMatrix::new(dmatrix![0.4]).unwrap()]),
        };
        let (next, _) = mgvb_update(&q, &mom, 1.0).unwrap();
        assert_relative_eq!(next.dense_covariance()[(0, 0)], 1.06, epsilon = 1e-12);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let (model, prior) = conjugate();
        let init = VariationalState::isotropic(DVector::zeros(3), 0.1, PosteriorStructure::Full).unwrap();
        let out = run(&model, &prior, &TrainerConfig { t_max: 0, ..cfg() }, OptimizerKind::Emgvb, &init).unwrap();
        assert_eq!(out.state, init);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn conjugate_run_approaches_posterior() {
        let (model, prior) = conjugate();
        let init = VariationalState::isotropic(DVector::zeros(3), 0.1, PosteriorStructure::Full).unwrap();
        let out = run(&model, &prior, &cfg(), OptimizerKind::Emgvb, &init).unwrap();
        let exact = model.exact_posterior(&prior).unwrap();
        let kl = crate::gaussian::kl_gaussian(&out.state, &exact).unwrap();
        assert!(kl < 0.05, "kl={kl}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig { beta: 1.5, ..cfg() }.validate().is_err());
        assert!(TrainerConfig { window: 500, ..cfg() }.validate().is_err());
        assert!(OptimizerKind::parse("adam").is_err());
    }

    #[test]
    fn block_run_rejects_dense_prior_and_full_structure() {
        let (model, _) = conjugate();
        let dense = PriorSpec::dense(DVector::zeros(3), SpdMatrix::identity(3)).unwrap();
        let init = VariationalState::isotropic(DVector::zeros(3), 0.1, PosteriorStructure::Block(vec![2, 1])).unwrap();
        assert!(run_block_diagonal(&model, &dense, &cfg(), &init).is_err());
        let iso = PriorSpec::isotropic(DVector::zeros(3), 1.0).unwrap();
        let full = VariationalState::isotropic(DVector::zeros(3), 0.1, PosteriorStructure::Full).unwrap();
        assert!(run_block_diagonal(&model, &iso, &cfg(), &full).is_err());
    }
}
