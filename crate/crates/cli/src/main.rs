use std::process::ExitCode;

use clap::Parser;
use gtot_cli::commands::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gtot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
