//! `longbracket`: estimate and bound long-term treatment effects from a
//! short-term experiment combined with an observational panel.
//!
//! Exit codes: 0 success, 1 usage, 2 data or validation problem, 3 numerical
//! failure. Every failure prints a single JSON line on stderr so wrappers
//! can parse the reason without scraping human text.

mod commands;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use longbracket::ErrorKind;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match commands::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(1, &e.to_string()),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => fail(1, &msg),
        Err(commands::CliError::Lib(e)) => {
            let code = match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            };
            fail(code, &e.to_string())
        }
    }
}

fn fail(code: u8, message: &str) -> ExitCode {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!(
        "{}",
        serde_json::json!({ "error": flat, "exit": code })
    );
    ExitCode::from(code)
}
