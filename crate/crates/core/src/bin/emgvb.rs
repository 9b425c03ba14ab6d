use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emgvb::harness::runner::{self, ChainSummary, Experiment, ExperimentResult};
use emgvb::harness::ExperimentConfig;
use emgvb::Error;

#[derive(Parser)]
#[command(name = "emgvb", version, about = "Gaussian variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a config and write trace.csv, result.json and density files.
    Run { config: PathBuf },
    /// Recompute and print the metrics of a result file.
    Metrics { result: PathBuf },
    /// Random-walk Metropolis reference posterior for a config.
    Mcmc { config: PathBuf },
    /// Marginal density of one parameter from a result file, as CSV.
    Density {
        result: PathBuf,
        #[arg(long)]
        param: usize,
        #[arg(long, default_value_t = 512)]
        points: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnsupportedEstimator(_) => 2,
        _ => 1,
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run { config } => {
            let art = runner::run_experiment(&config)?;
            println!("trace: {}", art.trace.display());
            println!("result: {}", art.result.display());
            for d in art.densities {
                println!("density: {}", d.display());
            }
        }
        Command::Metrics { result } => {
            let res = ExperimentResult::load(&result)?;
            let exp = Experiment::build(&res.config)?;
            let report = exp.metrics(&res.posterior.to_state()?, res.metrics.lb)?;
            println!("{}", json(&report)?);
        }
        Command::Mcmc { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let exp = Experiment::build(&cfg)?;
            let chain = runner::run_mcmc(&exp)?;
            let summary = ChainSummary::new(&chain, exp.model.as_model().param_names());
            let text = json(&summary)?;
            std::fs::create_dir_all(&cfg.output.dir)?;
            runner::write_atomic(&cfg.output.dir.join("mcmc.json"), text.as_bytes())?;
            println!("{text}");
        }
        Command::Density {
            result,
            param,
            points,
            out,
        } => {
            let res = ExperimentResult::load(&result)?;
            let state = res.posterior.to_state()?;
            if param >= state.dim() {
                return Err(Error::Config(format!("--param {param} out of range 0..{}", state.dim())));
            }
            let transform = runner::config_transform(&res.config, state.dim())?;
            let csv = runner::density_csv(&state, &transform, param, points, res.seed)?;
            match out {
                Some(path) => runner::write_atomic(&path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
