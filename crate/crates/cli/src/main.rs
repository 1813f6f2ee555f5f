use std::process::ExitCode;

use clap::Parser;
use csiq::Cli;

fn main() -> ExitCode {
    match csiq::run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
