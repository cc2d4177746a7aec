use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match dscope_cli::run(dscope_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
