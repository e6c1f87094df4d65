//! `multiplicity` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use multiplicity::solver::Budget;

#[derive(Parser, Debug)]
#[command(name = "multiplicity", version, about = "Top-k predictive multiplicity audits")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for hash splits, synthetic data and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Branch-and-bound node budget per solve.
    #[arg(long, global = true, default_value_t = multiplicity::solver::DEFAULT_NODE_BUDGET)]
    pub node_budget: u64,
    /// Wall-clock budget per solve, in seconds.
    #[arg(long, global = true, default_value_t = multiplicity::solver::DEFAULT_TIME_BUDGET.as_secs_f64())]
    pub time_budget: f64,
    /// Cross-check results against the exact oracles when the input is small.
    #[arg(long, global = true, hide = true)]
    pub certify: bool,
    /// Drop feature columns matching this pattern (repeatable).
    #[arg(long, global = true)]
    pub drop_regex: Vec<String>,
    /// Explicit feature columns (default: every column without another role).
    #[arg(long, global = true, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, global = true, default_value = "group")]
    pub group_col: String,
    /// Input layout: `csv`, `healthcare` or `healthcare-subset`.
    #[arg(long, global = true, default_value = "csv")]
    pub format: String,
    /// Keep only the first rows of the input.
    #[arg(long, global = true)]
    pub max_rows: Option<usize>,
    /// Worker threads for per-row solves (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

impl Global {
    pub fn budget(&self) -> Budget {
        Budget {
            max_nodes: self.node_budget,
            max_time: Duration::from_secs_f64(self.time_budget.max(0.0)),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit one OLS model per target.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Single-target ambiguity curve over the Rashomon ball.
    AmbiguitySingle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Count or percentage such as `3%`.
        #[arg(long)]
        kappa: String,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        #[arg(long, default_value = "relative")]
        epsilon_mode: String,
        /// Ambiguity reported on stdout; the CSV carries both.
        #[arg(long, default_value = "all")]
        mode: String,
        /// Also write per-row reports (JSON lines) for the largest tolerance.
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-target ambiguity over index-model weights.
    AmbiguityMulti {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long)]
        kappa: String,
        #[arg(long, default_value = "zscore")]
        standardize: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Range of a group's top-k count over index-model weights.
    FairnessRange {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        #[arg(long)]
        group: String,
        #[arg(long)]
        kappa: String,
        #[arg(long, default_value = "both")]
        direction: String,
        #[arg(long, default_value = "zscore")]
        standardize: String,
        /// Run the train / tune / holdout workflow instead of an in-sample range.
        #[arg(long)]
        workflow: bool,
        /// Workflow table (CSV).
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stable-point fractions across a sweep of k.
    StablePoints {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        family: String,
        /// Target for the rashomon family.
        #[arg(long)]
        target: Option<String>,
        /// Targets for the index family.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value = "relative")]
        epsilon_mode: String,
        #[arg(long, default_value = "zscore")]
        standardize: String,
        #[arg(long, value_delimiter = ',', required = true)]
        kappa_sweep: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Semi-synthetic dataset with a mid-age protected group.
    Synth {
        #[arg(long, default_value_t = 600)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        #[arg(long, default_value_t = 0.5)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0.5)]
        curvature: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            output::report_error("usage", &e.to_string());
            return ExitCode::from(output::EXIT_USAGE);
        }
    };
    if let Some(w) = cli.global.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            output::report_error("usage", &e.to_string());
            return ExitCode::from(output::EXIT_USAGE);
        }
    }
    match commands::run(&cli) {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial) => ExitCode::from(output::EXIT_BUDGET),
        Err(e) => {
            let (kind, code) = output::classify(&e);
            output::report_error(kind, &format!("{e:#}"));
            ExitCode::from(code)
        }
    }
}
