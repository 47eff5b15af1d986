//! `omnilingo`: operator tooling over a local data directory.
//!
//! Stdout carries one result per line (a Cid, a name, an address) so commands
//! compose in scripts; progress and diagnostics go to stderr.

mod args;
mod commands;
mod config;
mod play;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    let settings = match config::resolve(
        cli.config.as_deref(),
        std::env::var_os(config::CONFIG_ENV),
        cli.data_dir.as_deref(),
        cli.gateway.as_deref(),
    ) {
        Ok(settings) => settings,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command, &settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
