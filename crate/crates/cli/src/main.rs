use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use coopsync::config::{Algorithm, ScenarioConfig};
use coopsync::experiment::{simulate, write_outputs};
use log::info;

/// Runs a cooperative localization and synchronization experiment and
/// writes rmse.csv, cdf.csv, comm.json, trace.csv and slots.csv.
#[derive(Debug, Parser)]
#[command(name = "coopsync", version)]
struct Args {
    /// Scenario file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the algorithm: std-bp, bcast-bp or vmp.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Overrides the number of Monte-Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Increases log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn run(args: &Args) -> coopsync::Result<()> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(algorithm) = args.algorithm {
        cfg.algorithm = algorithm;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    info!(
        "scenario {} with {}, {} trials, seed {}",
        cfg.name, cfg.algorithm, cfg.trials, cfg.seed
    );
    let result = simulate(&cfg)?;
    write_outputs(&result, &args.out)?;
    info!("outputs written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coopsync: {e}");
            ExitCode::FAILURE
        }
    }
}
