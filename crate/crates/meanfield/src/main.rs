use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meanfield::experiments::{cmd_contraction, cmd_moments, cmd_poc_scaling, cmd_rates, cmd_validate};
use meanfield::{AppError, ExperimentConfig, Outcome, RunOptions};

#[derive(Parser)]
#[command(name = "meanfield", version, about = "Coupled particle simulations for mean-field SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate R0, R1, c and f, check the f-inequality.
    Rates(Common),
    /// Sample the structural assumptions and the mixing functions.
    Validate(Common),
    /// Plateau of the coupled distance against N.
    PocScaling(Common),
    /// Decay of the coupled distance against the theorem envelope.
    Contraction(Common),
    /// Second moment of the nonlinear process against its bound.
    Moments(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<Outcome, AppError> {
    let (common, command) = match &cli.command {
        Command::Rates(c) => (c, "rates"),
        Command::Validate(c) => (c, "validate"),
        Command::PocScaling(c) => (c, "poc-scaling"),
        Command::Contraction(c) => (c, "contraction"),
        Command::Moments(c) => (c, "moments"),
    };
    let config = ExperimentConfig::load(&common.config)?;
    let opts = RunOptions {
        out_dir: common.out.clone(),
        seed: common.seed,
        threads: common.threads,
    };
    let outcome = match command {
        "rates" => cmd_rates(&config, &opts)?,
        "validate" => cmd_validate(&config, &opts)?,
        "poc-scaling" => cmd_poc_scaling(&config, &opts)?.0,
        "contraction" => cmd_contraction(&config, &opts)?.0,
        _ => cmd_moments(&config, &opts)?.0,
    };
    Ok(outcome)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("outputs in {}", outcome.out_dir.display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
