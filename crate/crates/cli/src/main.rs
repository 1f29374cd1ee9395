//! `zidlab`: seeded experiments on grid-world reward structure.

mod commands;
mod output;
mod svg;

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "zidlab",
    version,
    about = "Reward-structure analysis and seeded experiments for laser grid worlds"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// Base seed for single-seed commands.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Artifact formats to write.
    #[arg(
        long,
        global = true,
        value_enum,
        value_delimiter = ',',
        default_value = "csv,json,svg"
    )]
    pub format: Vec<Format>,
    /// Maximum number of states to enumerate.
    #[arg(long, global = true, default_value_t = 2_000_000)]
    pub state_cap: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Density, minimum cut and ZID report for a map.
    Analyze(commands::analyze::AnalyzeArgs),
    /// Dump the induced graph as JSON.
    Enumerate(commands::analyze::EnumerateArgs),
    /// Random-exploration exit rates on the density variants, with the exact oracle.
    DensityExperiment(commands::density::DensityArgs),
    /// Tabular learning curves with delayed shaping.
    DelayExperiment(commands::delay::DelayArgs),
    /// Spectral bottleneck discovery and its runtime against agent count.
    Discover(commands::discover::DiscoverArgs),
    /// Random exploration of one map.
    Explore(commands::density::ExploreArgs),
}

/// Parses `3`, `1,4,9` or the inclusive range `1..30`.
pub fn parse_list(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad range start in `{text}`"))?;
        let b: u64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| format!("bad range end in `{text}`"))?;
        if a > b {
            return Err(format!("empty range `{text}`"));
        }
        return Ok(RangeInclusive::new(a, b).collect());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| format!("`{t}` is not a non-negative integer"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct List(pub Vec<u64>);

impl std::str::FromStr for List {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = parse_list(s)?;
        if v.is_empty() {
            return Err("list is empty".into());
        }
        Ok(List(v))
    }
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ZIDLAB_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Validation(format!(
                "ZIDLAB_THREADS must be a positive integer, got `{v}`"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let g = &cli.global;
    match cli.command {
        Command::Analyze(a) => commands::analyze::analyze(g, &a),
        Command::Enumerate(a) => commands::analyze::enumerate(g, &a),
        Command::DensityExperiment(a) => commands::density::density_experiment(g, &a),
        Command::DelayExperiment(a) => commands::delay::delay_experiment(g, &a),
        Command::Discover(a) => commands::discover::discover(g, &a),
        Command::Explore(a) => commands::density::explore(g, &a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
