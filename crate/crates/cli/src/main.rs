use std::io;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod output;
mod scenario;

use scenario::ScenarioArgs;

/// Effective capacity of two-hop block-fading links under per-node QoS exponents.
#[derive(Parser, Debug)]
#[command(name = "twohop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Effective capacity, case and auxiliary exponents for one QoS pair
    Compute(ScenarioArgs),
    /// Virtual effective capacity and bandwidth over a theta grid
    Curves(ScenarioArgs),
    /// Effective capacity over theta2, or the flat-region edge over SNR2
    Sweep(ScenarioArgs),
    /// Monte Carlo overflow curves and fitted decay rates
    Simulate(ScenarioArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (args, cmd): (ScenarioArgs, fn(&scenario::Scenario) -> anyhow::Result<output::Table>) = match cli.command {
        Command::Compute(a) => (a, commands::compute),
        Command::Curves(a) => (a, commands::curves),
        Command::Sweep(a) => (a, commands::sweep),
        Command::Simulate(a) => (a, commands::simulate),
    };
    let scenario = args.resolve()?;
    let table = cmd(&scenario)?;
    table.write(scenario.format, io::stdout().lock())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
