//! GARCH(1,1) on simulated returns, driven by a TOML config.
//!
//! Pass another config path to fit a different volatility model.

use std::path::PathBuf;

use emgvb::harness::runner::{execute, Experiment};
use emgvb::harness::ExperimentConfig;

fn main() -> emgvb::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/garch_synthetic.toml"));
    let cfg = ExperimentConfig::load(&path)?;
    let exp = Experiment::build(&cfg)?;
    let (out, result) = execute(&exp)?;
    println!("{} with {}, {} iterations ({:?})", result.model, result.algorithm, result.iterations, result.stop_reason);
    println!("best smoothed LB {:.3}", result.metrics.lb);
    let var = out.state.variances();
    for (i, name) in result.param_names.iter().enumerate() {
        println!(
            "{name:>8}  psi {:>8.4} +- {:.4}   theta {:.4}",
            out.state.mu()[i],
            var[i].sqrt(),
            result.posterior.constrained_mean[i]
        );
    }
    println!("train MSE of fitted variance {:.4}", result.metrics.train.mse.unwrap_or(f64::NAN));
    if let Some(test) = &result.metrics.test {
        println!("test loglik {:.2}, MSE {:.4}", test.loglik, test.mse.unwrap_or(f64::NAN));
    }
    Ok(())
}
