use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kingman_cli::{run, write_outputs, ConfigOverrides, Experiment, ExperimentConfig, Format};

/// Simulation experiments for Kingman's coalescent with erosion and with
/// immigration.
#[derive(Debug, Parser)]
#[command(name = "kingman", version)]
struct Args {
    experiment: Experiment,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Diffusion horizon, or the chain path length for immigration-stationary.
    #[arg(long)]
    horizon: Option<f64>,
    /// Depth of the diffusion hierarchy.
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "out")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let overrides = ConfigOverrides {
        n: args.n,
        d: args.d,
        replicates: args.replicates,
        seed: args.seed,
        dt: args.dt,
        horizon: args.horizon,
        k: args.k,
        output_path: args.out,
        format: args.format,
    };
    let result = ExperimentConfig::resolve(args.experiment, overrides)
        .map_err(anyhow::Error::from)
        .and_then(|c| run(&c))
        .and_then(|r| write_outputs(&r).map(|_| r).map_err(Into::into));
    match result {
        Ok(report) if report.passed() => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
