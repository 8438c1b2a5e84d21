//! `wsp`: command-line front end for the seminorm, mollifier, Haar,
//! pipeline and counterexample machinery in `wsp-core`.
//!
//! Exit status is 0 on success, 1 on a domain error and 2 on a usage error.
//! Every run writes `manifest.json` to its output directory.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
