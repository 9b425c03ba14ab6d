//! Linear regression with the coefficients and the log noise scale in
//! separate posterior blocks, compared with a full-covariance fit.

use emgvb::gaussian::PosteriorStructure;
use emgvb::harness::data::synthetic_linear;
use emgvb::models::{LinearRegression, PriorSpec};
use emgvb::optimizer::run_block_diagonal;
use emgvb::{run, OptimizerKind, TrainerConfig, VariationalState};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emgvb::Result<()> {
    let truth = DVector::from_vec(vec![0.5, 0.3, -0.2, 0.15, 0.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = synthetic_linear(500, &truth, 0.5, true, 1.0, &mut rng)?;
    let (x, y) = data.train();
    let model = LinearRegression::new(x, y)?;
    let d = truth.len() + 1;
    let prior = PriorSpec::isotropic_covariance(d, 0.0, 5.0)?;
    let cfg = TrainerConfig {
        beta: 0.05,
        samples: 100,
        t_max: 1000,
        t_prime: 500,
        patience: 300,
        l_max: Some(5e4),
        l_max_init: Some(500.0),
        seed: 1,
        ..TrainerConfig::default()
    };

    let block = VariationalState::isotropic(DVector::zeros(d), 0.01, PosteriorStructure::Block(vec![d - 1, 1]))?;
    let blocked = run_block_diagonal(&model, &prior, &cfg, &block)?;
    let full_init = VariationalState::isotropic(DVector::zeros(d), 0.01, PosteriorStructure::Full)?;
    let full = run(&model, &prior, &cfg, OptimizerKind::Emgvb, &full_init)?;

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "param", "block mu", "full mu", "block sd", "full sd");
    let (vb, vf) = (blocked.state.variances(), full.state.variances());
    for i in 0..d {
        println!(
            "{i:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            blocked.state.mu()[i],
            full.state.mu()[i],
            vb[i].sqrt(),
            vf[i].sqrt()
        );
    }
    println!(
        "best LB: block {:.3}, full {:.3}",
        blocked.trace.best_smoothed().unwrap_or(f64::NAN),
        full.trace.best_smoothed().unwrap_or(f64::NAN)
    );
    Ok(())
}
