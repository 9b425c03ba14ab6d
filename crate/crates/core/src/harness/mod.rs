//! Data loading, configuration, metrics, the Metropolis reference sampler and
//! the experiment runner behind the command-line tool.

pub mod config;
pub mod data;
pub mod metrics;
pub mod metropolis;
pub mod runner;

pub use config::ExperimentConfig;
pub use data::{load_csv, Dataset, Schema};
pub use metrics::{classification_metrics, regression_metrics, MetricsReport};
pub use metropolis::{metropolis_sample, tuned_metropolis, Chain};
pub use runner::{run_experiment, Experiment, ExperimentResult};
