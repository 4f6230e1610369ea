//! `robsub`: generators, batch/path fits, rank-regularized fits, streaming
//! tracking and robust kernel PCA from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure (including
//! non-convergence, after the report is written), 4 I/O error.

// Negated comparisons double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use report::CliResult;

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(g) => commands::gen::run(g),
        Command::Fit(a) => commands::fit::run(a),
        Command::Rank(a) => commands::rank::run(a),
        Command::Track(a) => commands::track::run(a),
        Command::Kpca(a) => commands::kpca::run(a),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("robsub: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
