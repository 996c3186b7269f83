//! Experiment driver behind the `banditlab` binary.
//!
//! Each subcommand is a plain function so tests can call it directly.

pub mod artifacts;
pub mod config;
mod eval;
mod report;
mod simulate;
mod tune;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::ExperimentConfig;
pub use eval::{cmd_eval_offline, parse_policy_spec, EvalArgs, PolicySpec};
pub use report::{cmd_report, ReportSummary};
pub use simulate::{cmd_simulate, simulate};
pub use tune::{cmd_tune_gamma, tune_gamma, GammaRow};

/// Failure classes; each maps to a distinct exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Schema(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<banditlab_core::simulation::SimError> for CliError {
    fn from(e: banditlab_core::simulation::SimError) -> Self {
        use banditlab_core::simulation::SimError;
        match e {
            SimError::Config(_) | SimError::Env(_) | SimError::Policy(_) => CliError::Config(e.to_string()),
            SimError::SchemaMismatch { .. } | SimError::Schema(_) => CliError::Schema(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "banditlab", version, about = "Contextual-bandit experiment driver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Ips,
    Snips,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every arm of an experiment and write the artifact tree.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Arms run in parallel on this many threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Sweep SquareCB gamma over one generation and record exploration.
    TuneGamma {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated gamma values.
        #[arg(long)]
        gammas: String,
    },
    /// Off-policy estimate of a target policy from a log file.
    EvalOffline {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        /// greedy | epsilon_greedy:EPS | squarecb:GAMMA | logging
        #[arg(long)]
        policy: String,
        #[arg(long, value_enum, default_value = "ips")]
        estimator: EstimatorArg,
        /// Weight cap, or "none" for unclipped.
        #[arg(long, default_value = "10")]
        clip: String,
        /// Where to write the estimate JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished experiment directory, checking it against its logs.
    Report { dir: PathBuf },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, workers } => {
            let dir = cmd_simulate(&config, workers)?;
            println!("wrote {}", dir.display());
        }
        Command::TuneGamma { config, gammas } => {
            let gammas = parse_gammas(&gammas)?;
            let (rows, dir) = cmd_tune_gamma(&config, &gammas)?;
            println!("gamma,exploration_pct");
            for r in rows {
                println!("{},{}", r.gamma, r.exploration_pct);
            }
            println!("wrote {}", dir.display());
        }
        Command::EvalOffline {
            logs,
            oracle,
            policy,
            estimator,
            clip,
            out,
        } => {
            let clip = parse_clip(&clip)?;
            let estimate = cmd_eval_offline(&EvalArgs {
                logs,
                oracle,
                policy: parse_policy_spec(&policy)?,
                estimator: match estimator {
                    EstimatorArg::Ips => banditlab_core::offline_eval::Estimator::Ips,
                    EstimatorArg::Snips => banditlab_core::offline_eval::Estimator::Snips,
                },
                clip,
                out,
            })?;
            println!("{}", serde_json::to_string(&estimate).expect("estimate serializes"));
        }
        Command::Report { dir } => {
            let summary = cmd_report(&dir)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", summary.text);
        }
    }
    Ok(())
}

pub fn parse_gammas(text: &str) -> Result<Vec<f64>, CliError> {
    let gammas = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("gammas: cannot parse {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if gammas.is_empty() {
        return Err(CliError::Config("gammas: list is empty".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(CliError::Config(format!("gammas: {g} is not a positive number")));
    }
    Ok(gammas)
}

pub fn parse_clip(text: &str) -> Result<Option<f64>, CliError> {
    if text.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(m) if m > 0.0 => Ok(Some(m)),
        _ => Err(CliError::Config(format!("clip: expected a positive number or none, got {text:?}"))),
    }
}
