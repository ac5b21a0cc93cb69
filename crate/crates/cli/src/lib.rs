//! Batch front end for `gradtest`: run a test on data files or a simulation study from a
//! JSON config, and write the report as JSON or CSV.

pub mod config;
pub mod data;
pub mod run;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::Parser;

pub use config::{parse_config, Cli, Command, Format, RunConfig};
pub use run::execute;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Parses arguments, runs, and reports. Exit status 0 on success, 1 for a rejected
/// configuration, 2 when the run itself fails.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = parse_config(&cli).and_then(|cfg| {
        let to_stdout = cfg.out.is_none();
        execute(&cfg).map(|summary| (summary, to_stdout))
    });
    match outcome {
        Ok((summary, to_stdout)) => {
            if to_stdout {
                eprintln!("{summary}");
            } else {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
