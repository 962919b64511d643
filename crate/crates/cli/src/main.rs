use std::process::ExitCode;

use clap::Parser;

mod commands;

use commands::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = commands::dispatch(cli);
    ExitCode::from(code as u8)
}
