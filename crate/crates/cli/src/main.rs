use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use courier_chain_cli::{cmd_inspect, cmd_run, cmd_tamper, cmd_validate, InspectTarget};

#[derive(Parser)]
#[command(name = "courier-chain", version, about = "Simulate, validate and inspect delivery-marketplace ledgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write ledger.jsonl, metrics.csv, events.log and directory.json
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "./out")]
        out: PathBuf,
    },
    /// Check hashes, links, sealer rotation and auth tags of a ledger
    Validate {
        ledger: PathBuf,
        /// Directory file with account secrets; defaults to directory.json next to the ledger
        #[arg(long)]
        directory: Option<PathBuf>,
    },
    /// Write a copy of the ledger with one field changed and hashes left as they were
    Tamper {
        ledger: PathBuf,
        #[arg(long)]
        block: u64,
        /// Dotted path to a scalar, e.g. `timestamp` or `txs.0.created_at`
        #[arg(long)]
        field: String,
        #[arg(long)]
        value: String,
    },
    /// Print one block, or the transaction history of one suborder
    Inspect {
        ledger: PathBuf,
        #[command(flatten)]
        target: Target,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Target {
    #[arg(long)]
    block: Option<u64>,
    #[arg(long)]
    order: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, seed, out } => cmd_run(&scenario, seed, &out),
        Command::Validate { ledger, directory } => cmd_validate(&ledger, directory.as_deref()),
        Command::Tamper { ledger, block, field, value } => cmd_tamper(&ledger, block, &field, &value),
        Command::Inspect { ledger, target } => {
            let target = match (target.block, target.order) {
                (Some(n), _) => InspectTarget::Block(n),
                (None, Some(id)) => InspectTarget::Order(id),
                (None, None) => unreachable!("clap requires one of --block or --order"),
            };
            cmd_inspect(&ledger, &target)
        }
    };
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    if !outcome.stderr.is_empty() && !outcome.stderr.ends_with('\n') {
        eprintln!();
    }
    ExitCode::from(outcome.exit_code as u8)
}
