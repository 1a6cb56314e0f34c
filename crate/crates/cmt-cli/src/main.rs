//! `cmt` — train, evaluate, sweep, and inspect rotation-robust model-tree
//! forests from the command line.

mod cmds;
mod data;
mod runcfg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmt_core::CmtError;

#[derive(Parser)]
#[command(name = "cmt", version, about = "Convolutional model tree forests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write it to disk.
    Train(cmds::TrainArgs),
    /// Evaluate a saved model across a ladder of input rotations.
    Eval(cmds::EvalArgs),
    /// Train and evaluate a set of models, emitting the full report.
    Sweep(cmds::SweepArgs),
    /// Print a saved forest's structure, sparsity, and split audits.
    Inspect(cmds::InspectArgs),
}

/// Exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numerical failure.
fn exit_code(err: &CmtError) -> u8 {
    match err {
        CmtError::InvalidArgument(_) => 2,
        CmtError::Format(_) | CmtError::Consistency(_) | CmtError::Io(_) => 3,
        CmtError::Corruption(_) => 3,
        CmtError::Numerical(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmds::train(args),
        Command::Eval(args) => cmds::eval(args),
        Command::Sweep(args) => cmds::sweep(args),
        Command::Inspect(args) => cmds::inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
