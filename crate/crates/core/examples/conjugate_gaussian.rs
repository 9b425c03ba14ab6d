//! Fits a linear-Gaussian model with known noise and compares the variational
//! posterior with the exact one.

use emgvb::estimators::GradEstimatorKind;
use emgvb::gaussian::kl_gaussian;
use emgvb::models::{ConjugateGaussian, PriorSpec};
use emgvb::{run, OptimizerKind, PosteriorStructure, TrainerConfig, VariationalState};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emgvb::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let estimator = args.get(1).map_or("h_function", String::as_str);
    let t_prime: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let truth = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = ConjugateGaussian::simulate(100, &truth, 1.0, &mut rng)?;
    let prior = PriorSpec::isotropic_covariance(5, 0.0, 5.0)?;
    let exact = model.exact_posterior(&prior)?;

    let cfg = TrainerConfig {
        beta: 0.05,
        omega: 0.4,
        samples: 200,
        window: 30,
        patience: 2000,
        t_max: 2000,
        t_prime,
        estimator: GradEstimatorKind::parse(estimator)?,
        seed: 3,
        ..TrainerConfig::default()
    };
    let init = VariationalState::isotropic(DVector::zeros(5), 0.05, PosteriorStructure::Full)?;
    let start = std::time::Instant::now();
    let out = run(&model, &prior, &cfg, OptimizerKind::Emgvb, &init)?;
    let kl = kl_gaussian(&out.state, &exact)?;
    let err = (out.state.mu() - exact.mu()).amax();
    println!("estimator      {}", cfg.estimator.name());
    println!("iterations     {} (best {})", out.trace.len(), out.trace.best_iter);
    println!("elapsed        {:.2?}", start.elapsed());
    println!("KL(q||exact)   {kl:.3e}");
    println!("max |mu error| {err:.3e}");
    println!("best LB        {:.4}", out.trace.best_smoothed().unwrap_or(f64::NAN));
    println!("log evidence   {:.4}", model.log_evidence(&prior)?);
    Ok(())
}
