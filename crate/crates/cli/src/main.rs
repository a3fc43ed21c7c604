//! Command-line front end: chain parameters, exact bias, bounds, simulations
//! and the table/figure reproductions, written as CSV or JSON.

mod commands;
mod config;
mod output;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::Status;
use config::{Format, Knobs};
use output::Output;

#[derive(Parser, Debug)]
#[command(
    name = "missing-mass",
    version,
    about = "Good-Turing missing-mass bias on rank-2 Markov chains"
)]
struct Cli {
    /// JSON file with default knob values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Spectral gap, TV gap and weighted norm of a chain.
    Params,
    /// Exact bias of the Good-Turing estimator at sample size n.
    ExactBias,
    /// Corollary bounds (and the general bound with --delta) next to the exact bias.
    Bounds,
    /// Monte Carlo mean error and mean squared error.
    Simulate,
    /// Exponents of the parameters and bounds for P1-P3.
    ReproduceTable1,
    /// Error decay curves for P1-P3 with fitted slopes.
    ReproduceFig1,
    /// Periodic-chain formula against the exact and simulated bias.
    PeriodicCheck,
    /// Runs the built-in invariant suite.
    Validate,
}

#[derive(Serialize)]
struct CheckRow<'a> {
    name: &'a str,
    passed: bool,
    cases: usize,
    worst: f64,
    detail: &'a str,
}

fn validate_cmd(knobs: &Knobs, out: &Output) -> Result<bool> {
    let report = validate::run(&knobs.constants()?)?;
    let rows: Vec<CheckRow> = report
        .checks
        .iter()
        .map(|c| CheckRow {
            name: c.name,
            passed: c.passed,
            cases: c.cases,
            worst: c.worst,
            detail: &c.detail,
        })
        .collect();
    out.emit(&rows, &report)?;
    Ok(report.passed)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let knobs = match &cli.config {
        Some(path) => cli.knobs.merge(Knobs::from_file(path)?),
        None => cli.knobs,
    };
    let out = Output {
        format: knobs.format.unwrap_or(Format::Csv),
        path: knobs.output.clone(),
    };
    let status = match cli.command {
        Command::Params => commands::params(&knobs, &out)?,
        Command::ExactBias => commands::exact_bias_cmd(&knobs, &out)?,
        Command::Bounds => commands::bounds(&knobs, &out)?,
        Command::Simulate => commands::simulate(&knobs, &out)?,
        Command::ReproduceTable1 => commands::reproduce_table1(&knobs, &out)?,
        Command::ReproduceFig1 => commands::reproduce_fig1(&knobs, &out)?,
        Command::PeriodicCheck => commands::periodic_check(&knobs, &out)?,
        Command::Validate => {
            return Ok(if validate_cmd(&knobs, &out)? {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            });
        }
    };
    Ok(match status {
        Status::Done => ExitCode::SUCCESS,
        Status::Inapplicable => ExitCode::from(2),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
