//! `fracgraph`: fractional kernels, operators and ground states on weighted graphs.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::{Options, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "fracgraph", version, about, color = clap::ColorChoice::Never)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Assemble W_s; writes kernel.csv and rowsums.csv.
    Kernel,
    /// Apply the fractional gradient and p-Laplacian to --function; writes the
    /// integration-by-parts residual.
    Operators,
    /// Report λ_p = inf (‖u‖_{W^{s,p}}^p with potential) / ‖u‖_p^p.
    Lambda,
    /// Ground state (Nehari descent) and/or mountain-pass solution.
    Solve,
    /// Re-check a stored solution.json.
    Verify,
    /// Repeat kernel, lambda or solve over a list of s, p or ball radii.
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    let text = e.to_string();
                    let first = text.lines().next().unwrap_or_default();
                    eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
                    ExitCode::from(2)
                }
            };
        }
    };
    let res = RunConfig::resolve(&cli.opts).and_then(|cfg| {
        let (name, f): (&str, _) = match cli.command {
            Command::Kernel => ("kernel", commands::kernel as _),
            Command::Operators => ("operators", commands::operators as _),
            Command::Lambda => ("lambda", commands::lambda as _),
            Command::Solve => ("solve", commands::solve as _),
            Command::Verify => ("verify", commands::verify as _),
            Command::Sweep => ("sweep", commands::sweep as _),
        };
        commands::run(name, f, &cfg)
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
