//! `slipns` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slipns::config::RunConfig;
use slipns::harness::{check_command, run_command, sweep_command, to_pretty, Outcome, EXIT_HARD};

#[derive(Parser)]
#[command(name = "slipns", version, about = "Stochastic compressible channel flow with friction-type slip walls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of paths and write ledgers plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        paths: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one path per value of a single parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-evaluate a check suite from the artifacts of a run.
    Check {
        #[arg(long)]
        record: PathBuf,
        #[arg(long, value_parser = ["energy", "mass", "friction", "weakforms", "ops"])]
        suite: String,
    },
}

fn report(outcome: slipns::Result<Outcome>) -> ExitCode {
    match outcome {
        Ok(o) => {
            println!("{}", to_pretty(&o.report));
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    // exit status 2 is reserved for soft check failures, so usage errors map to 1
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            paths,
            out,
        } => RunConfig::load(&config).and_then(|c| run_command(&c, seed, paths, &out)),
        Command::Sweep {
            config,
            param,
            values,
            seed,
            out,
        } => RunConfig::load(&config).and_then(|c| sweep_command(&c, &param, &values, seed, &out)),
        Command::Check { record, suite } => check_command(&record, &suite),
    };
    if let Ok(o) = &outcome {
        if o.exit_code == EXIT_HARD {
            eprintln!("hard invariant failure; see the summary for the failing path and step");
        }
    }
    report(outcome)
}
