//! `ramified`: solve, plan, sweep, and dimension commands over JSON problem
//! specs, with CSV sweeps and SVG network rendering.
//!
//! Exit codes: 0 success, 1 parse failure (files, flags, RT_THREADS), 2
//! domain validation failure, 3 size limits.

mod commands;
mod output;
mod spec;
mod svg;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Validation(String),
    Limit(String),
}

impl From<ramified::Error> for CliError {
    fn from(e: ramified::Error) -> Self {
        match e {
            ramified::Error::SizeLimit { .. } => CliError::Limit(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "ramified", version, about = "Ramified transport toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct SolveArgs {
    /// Problem spec (JSON).
    #[arg(long)]
    pub spec: String,
    /// Result file; stdout when omitted.
    #[arg(long)]
    pub out: Option<String>,
    /// Also render the solved network.
    #[arg(long)]
    pub svg: Option<String>,
    /// Override the spec file's cost exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override the spec file's curvature.
    #[arg(long)]
    pub curvature: Option<f64>,
    /// Override the spec file's restart seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the spec file's terminal-count limit.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct PlanArgs {
    /// Problem spec (JSON).
    #[arg(long)]
    pub spec: String,
    /// Result file; stdout when omitted.
    #[arg(long)]
    pub out: Option<String>,
    /// Override the spec file's cost exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Atom-count limit for exact plan enumeration.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    /// Axis to sweep: alpha | curvature.
    pub axis: String,
    /// Problem spec (JSON).
    #[arg(long)]
    pub spec: String,
    /// lo:hi:steps, where steps counts grid points; 0 emits only the header.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<String>,
    /// Override the spec file's restart seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the spec file's terminal-count limit.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
pub struct DimensionArgs {
    /// Collection: cantor | dyadic | sierpinski | chain.
    pub collection: String,
    /// Generations to build.
    #[arg(long)]
    pub depth: usize,
    /// Alpha grid lo:hi:steps; defaults to -1:0:21.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the cheapest transport path and audit it.
    Solve(SolveArgs),
    /// Exact optimal plan and its cost.
    Plan(PlanArgs),
    /// Solve across a parameter grid, one CSV row per point.
    Sweep(SweepArgs),
    /// Dimension report for a built-in nested collection.
    Dimension(DimensionArgs),
}

/// steps counts points: lo, lo+h, ..., hi with h = (hi-lo)/(steps-1).
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::Parse(format!("grid '{text}' is not lo:hi:steps"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

fn configure_threads() -> CliResult<()> {
    match std::env::var("RT_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| {
                    CliError::Parse(format!("RT_THREADS must be a positive integer, got '{raw}'"))
                })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Parse(format!("thread pool: {e}")))
        }
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Solve(args) => commands::cmd_solve(&args),
        Command::Plan(args) => commands::cmd_plan(&args),
        Command::Sweep(args) => commands::cmd_sweep(&args),
        Command::Dimension(args) => commands::cmd_dimension(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Parse(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Limit(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_grid;

    #[test]
    fn grids_include_both_endpoints() {
        let g = parse_grid("-1:0:21").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -1.0);
        assert_eq!(g[20], 0.0);
        assert!((g[1] + 0.95).abs() < 1e-15);
    }

    #[test]
    fn degenerate_grids_parse_or_fail_loudly() {
        assert_eq!(parse_grid("0.5:0.9:1").unwrap(), vec![0.5]);
        assert!(parse_grid("0:1:0").unwrap().is_empty());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a:b:3").is_err());
        assert!(parse_grid("inf:1:3").is_err());
    }
}
