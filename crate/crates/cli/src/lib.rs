//! `panza` command-line driver. Each subcommand reads its inputs, calls one
//! pipeline operation from `panza_core` and writes outputs plus a run
//! manifest (`<output>.manifest.json`).
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime error.

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::future::Future;
use std::pin::Pin;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;
pub use config::PanzaConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Resolves when a running `serve` should stop.
pub type Shutdown = Pin<Box<dyn Future<Output = ()> + Send>>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_shutdown(argv, None)
}

/// Like [`run`]; `serve` additionally stops when `shutdown` resolves
/// (otherwise on Ctrl-C).
pub fn run_with_shutdown<I, T>(argv: I, shutdown: Option<Shutdown>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    init_logging();
    match commands::dispatch(cli, shutdown) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging() {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_from_env("PANZA_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}
