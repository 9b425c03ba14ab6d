//! Runs EMGVB and MGVB from the same start with the same seed on a conjugate
//! model and prints how fast each approaches the exact posterior.

use emgvb::gaussian::kl_gaussian;
use emgvb::models::{ConjugateGaussian, PriorSpec};
use emgvb::{run, OptimizerKind, PosteriorStructure, TrainerConfig, VariationalState};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emgvb::Result<()> {
    let init_variance: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let truth = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = ConjugateGaussian::simulate(100, &truth, 1.0, &mut rng)?;
    let prior = PriorSpec::isotropic_covariance(5, 0.0, 5.0)?;
    let exact = model.exact_posterior(&prior)?;
    let evidence = model.log_evidence(&prior)?;
    let cfg = TrainerConfig {
        beta: 0.05,
        samples: 200,
        window: 30,
        patience: 2000,
        t_max: 400,
        t_prime: 400,
        seed: 3,
        snapshot_every: 1,
        ..TrainerConfig::default()
    };
    let init = VariationalState::isotropic(DVector::zeros(5), init_variance, PosteriorStructure::Full)?;
    println!("initial variance {init_variance}, log evidence {evidence:.3}");
    println!("{:>5} {:>8} {:>10} {:>10} {:>10} {:>10}", "iter", "method", "lb_smooth", "mu_err", "var_ratio", "KL");
    for kind in [OptimizerKind::Emgvb, OptimizerKind::Mgvb] {
        let out = run(&model, &prior, &cfg, kind, &init)?;
        let hit = out.trace.records.iter().find(|r| r.lb_smooth >= evidence - 0.1).map(|r| r.iter);
        for snap in &out.trace.snapshots {
            if ![1, 10, 25, 50, 75, 100, 150, 200, 400].contains(&snap.iter) {
                continue;
            }
            let q = VariationalState::from_dense_precision(snap.mu.clone(), &snap.prec, PosteriorStructure::Full)?;
            let ratio = q.variances().component_div(&exact.variances()).mean();
            println!(
                "{:>5} {:>8} {:>10.3} {:>10.2e} {:>10.3} {:>10.2e}",
                snap.iter,
                kind.name(),
                out.trace.records[snap.iter - 1].lb_smooth,
                (q.mu() - exact.mu()).amax(),
                ratio,
                kl_gaussian(&q, &exact)?
            );
        }
        println!("{} reaches log evidence - 0.1 at iteration {hit:?}", kind.name());
    }
    Ok(())
}
