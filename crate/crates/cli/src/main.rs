//! `seginf`: train CRF taggers, query influence, and hunt for label noise.
//!
//! Every command writes a line-delimited JSON report (to `--report` or
//! stdout) and a short summary to stderr. Exit codes: 0 success, 1 usage
//! error, 2 data error, 3 numerical failure.

mod args;
mod commands;
mod config;

use std::fmt;
use std::io::Write as _;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Globals};

/// Bad flags, config keys or missing required options.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<seginf::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn run() -> anyhow::Result<()> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    Ok(())
                }
                _ => Err(UsageError("invalid command line".into()).into()),
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| UsageError(e.to_string()))?;
    let file = cli
        .globals
        .config
        .as_deref()
        .map(config::load)
        .transpose()?;
    let globals: Globals = config::merge(cli.globals, &matches, file.as_ref())?;
    if let Some(n) = globals.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }

    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let section = config::section(file.as_ref(), name)?;
    let started = Instant::now();
    let report = commands::dispatch(cli.command, sub, section, globals.seed)?;

    match &globals.report {
        Some(path) => report
            .write(path)
            .with_context(|| format!("writing report {}", path.display()))?,
        None => std::io::stdout().write_all(report.to_jsonl().as_bytes())?,
    }
    if !globals.quiet {
        eprint!("{}", report.summary());
        eprintln!("  wall-clock: {:.2}s", started.elapsed().as_secs_f64());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
