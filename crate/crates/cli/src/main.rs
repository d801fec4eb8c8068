use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = qsa_cli::Cli::parse();
    match qsa_cli::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
