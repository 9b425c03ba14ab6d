//! Monte Carlo variance of the two natural-gradient estimators at a fixed
//! state of a conjugate model, with and without control variates.

use emgvb::estimators::{estimate_natgrads, evaluate_draws, DrawBatch, GradEstimatorKind};
use emgvb::models::{ConjugateGaussian, PriorSpec};
use emgvb::{PosteriorStructure, VariationalState};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emgvb::Result<()> {
    let samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let reps = 200;
    let truth = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = ConjugateGaussian::simulate(100, &truth, 1.0, &mut rng)?;
    let prior = PriorSpec::isotropic_covariance(5, 0.0, 5.0)?;
    let state = VariationalState::isotropic(DVector::from_element(5, 0.3), 0.05, PosteriorStructure::Full)?;
    let exact = model.analytic_natgrads(&state, &prior)?;

    println!("S = {samples}, {reps} replications, variance of g_mu");
    println!("{:<24} {:>4} {:>12} {:>12}", "estimator", "cv", "mean var", "max bias/se");
    for kind in [GradEstimatorKind::HFunction, GradEstimatorKind::GaussianPriorLoglik] {
        for cv in [false, true] {
            let mut draws = Vec::with_capacity(reps);
            for _ in 0..reps {
                let thetas = state.sample(samples, &mut rng);
                let (ll, h) = evaluate_draws(&model, &prior, &state, &thetas)?;
                let logf = match kind {
                    GradEstimatorKind::HFunction => h,
                    GradEstimatorKind::GaussianPriorLoglik => ll,
                };
                let batch = DrawBatch::new(thetas, logf)?;
                draws.push(estimate_natgrads(&state, &prior, &batch, kind, cv)?.g_mu);
            }
            let n = reps as f64;
            let mean = draws.iter().fold(DVector::zeros(5), |acc, g| acc + g) / n;
            let var = draws.iter().fold(DVector::zeros(5), |acc, g| acc + (g - &mean).map(|x| x * x)) / (n - 1.0);
            let bias = (0..5)
                .map(|i| (mean[i] - exact.g_mu[i]).abs() / (var[i] / n).sqrt())
                .fold(0.0, f64::max);
            println!("{:<24} {:>4} {:>12.4e} {:>12.2}", kind.name(), cv, var.mean(), bias);
        }
    }
    Ok(())
}
