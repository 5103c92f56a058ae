//! `ou-diffuse`: command-line front end for the diffusion engine.
//!
//! Exit status is 0 on success, 1 when a run fails and 2 on a usage error.

mod args;
mod commands;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

const THREADS_VAR: &str = "OU_DIFFUSE_THREADS";

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::try_parse_from(std::iter::once("ou-diffuse".to_string()).chain(argv.iter().cloned()))
        .unwrap_or_else(|e| e.exit());

    let level = if cli.global.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match commands::run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
