use std::process::ExitCode;

use clap::Parser;
use intentgrid::args::Cli;
use intentgrid::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => commands::report(&e),
    }
}
