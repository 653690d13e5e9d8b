#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{ConfigError, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "indiff",
    version,
    about = "Large-investor trading at market indifference prices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// experiment config (TOML)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// overrides the configured seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// overrides the configured path count
    #[arg(long)]
    pub paths: Option<usize>,
    /// overrides the configured number of tree steps
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// run the configured engine and write paths CSV plus metadata
    Simulate(Common),
    /// run verification suites and report pass/fail per suite
    Verify {
        #[command(flatten)]
        common: Common,
        /// conjugacy, round-trip, martingale, preservation, bounds,
        /// gradient, no-arbitrage, bachelier, convergence or all
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// compare the engines with the Bachelier closed forms
    Bachelier(Common),
    /// one-shot evaluation of r, the Pareto split and G
    Pareto {
        #[command(flatten)]
        common: Common,
        /// Pareto weights, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        weights: Option<Vec<f64>>,
        /// total wealth to split
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        wealth: f64,
        /// indirect utilities for G, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        utilities: Option<Vec<f64>>,
        /// claim positions for G, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        /// node id for G
        #[arg(long, default_value_t = 0)]
        node: usize,
    },
    /// write the scenario tree, one row per edge
    DumpTree(Common),
}

pub enum Failure {
    Config(String),
    Suite(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<indiff::Error> for Failure {
    fn from(e: indiff::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(format!("json: {e}"))
    }
}

pub fn load(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::Verify { common, suite } => commands::verify(&common, &suite),
        Command::Bachelier(c) => commands::bachelier(&c),
        Command::Pareto {
            common,
            weights,
            wealth,
            utilities,
            q,
            node,
        } => commands::pareto(&common, weights, wealth, utilities, q, node),
        Command::DumpTree(c) => commands::dump_tree(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Suite(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
