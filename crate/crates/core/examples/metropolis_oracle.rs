//! Tuned random-walk Metropolis as a reference for the variational posterior
//! of a small logistic regression.

use emgvb::harness::data::synthetic_logistic;
use emgvb::harness::metropolis::tuned_metropolis;
use emgvb::models::{LogisticRegression, PriorSpec};
use emgvb::{run, OptimizerKind, PosteriorStructure, TrainerConfig, VariationalState};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emgvb::Result<()> {
    let n_samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = synthetic_logistic(300, &DVector::from_vec(vec![-0.5, 1.0, 0.7]), true, 1.0, &mut rng)?;
    let (x, y) = data.train();
    let model = LogisticRegression::new(x, y)?;
    let prior = PriorSpec::isotropic_covariance(3, 0.0, 5.0)?;

    let cfg = TrainerConfig {
        beta: 0.05,
        samples: 100,
        t_max: 600,
        t_prime: 300,
        seed: 9,
        ..TrainerConfig::default()
    };
    let init = VariationalState::isotropic(DVector::zeros(3), 0.05, PosteriorStructure::Full)?;
    let vb = run(&model, &prior, &cfg, OptimizerKind::Emgvb, &init)?.state;
    let chain = tuned_metropolis(&model, &prior, &DVector::zeros(3), n_samples, 2_000, 0.05, 13)?;

    println!("acceptance rate {:.3}, {} kept draws", chain.acceptance_rate, chain.len());
    let (mean, cov, ess, mcse) = (chain.mean(), chain.covariance(), chain.ess(), chain.mcse());
    let vb_var = vb.variances();
    println!("{:>5} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}", "coef", "vb mean", "mh mean", "vb sd", "mh sd", "ess", "mcse");
    for i in 0..3 {
        println!(
            "{i:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8.0} {:>8.4}",
            vb.mu()[i],
            mean[i],
            vb_var[i].sqrt(),
            cov[(i, i)].sqrt(),
            ess[i],
            mcse[i]
        );
    }
    Ok(())
}
