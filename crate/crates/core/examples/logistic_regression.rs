//! Logistic regression on simulated data with full and diagonal posteriors,
//! reporting held-out classification metrics.

use emgvb::harness::data::synthetic_logistic;
use emgvb::harness::metrics::classification_metrics;
use emgvb::models::{LogisticRegression, PriorSpec};
use emgvb::{run, OptimizerKind, PosteriorStructure, TrainerConfig, VariationalState};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn row(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:>7.3}")).collect::<Vec<_>>().join(" ")
}

fn main() -> emgvb::Result<()> {
    let truth = DVector::from_vec(vec![-0.3, 1.2, -0.8, 0.5, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = synthetic_logistic(1000, &truth, true, 0.75, &mut rng)?;
    let (x, y) = data.train();
    let (x_test, y_test) = data.test();
    let model = LogisticRegression::new(x, y)?;
    let test_model = LogisticRegression::new(x_test, y_test.clone())?;
    let prior = PriorSpec::isotropic_covariance(truth.len(), 0.0, 5.0)?;
    let cfg = TrainerConfig {
        beta: 0.05,
        samples: 100,
        t_max: 800,
        t_prime: 400,
        patience: 200,
        seed: 2,
        ..TrainerConfig::default()
    };

    for structure in [PosteriorStructure::Full, PosteriorStructure::Diagonal] {
        let init = VariationalState::isotropic(DVector::zeros(truth.len()), 0.05, structure.clone())?;
        let out = run(&model, &prior, &cfg, OptimizerKind::Emgvb, &init)?;
        let probs = test_model.probabilities(out.state.mu());
        let m = classification_metrics(y_test.as_slice(), probs.as_slice(), 0.5)?;
        println!("{} posterior, {} iterations", structure.name(), out.trace.len());
        println!("  mean  {}", row(out.state.mu()));
        println!("  sd    {}", row(&out.state.variances().map(f64::sqrt)));
        println!(
            "  test accuracy {:.3} precision {:.3} recall {:.3} f1 {:.3}",
            m.accuracy, m.precision, m.recall, m.f1
        );
    }
    Ok(())
}
