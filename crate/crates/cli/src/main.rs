//! `bcnn`: generate state datasets, train branching convolutional networks
//! on them, evaluate, and export analysis tables.
//!
//! Exit codes: 0 success, 2 config or usage error, 3 missing file or shape
//! error, 4 model and dataset of different state families.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcnn_core::analysis::ErrorAxis;
use bcnn_core::states::{Split, StateFamily};
use clap::{Parser, Subcommand};

use commands::{GenerateArgs, ReportArgs, ReportKind};
use config::Config;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "bcnn",
    version,
    about = "Entanglement detection with branching convolutional networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Config file (key = value lines under [section] headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset applied before the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write it as CSV.
    Generate {
        /// Werner, G1Werner, G2Werner or General (defaults to `data.family`).
        family: Option<String>,
        /// Number of records (defaults to `data.train_size`).
        size: Option<usize>,
        /// Keep entangled and separable general states at 1:1.
        #[arg(long)]
        balance: bool,
        /// Mark the file as a test split.
        #[arg(long)]
        test: bool,
        #[command(flatten)]
        common: Common,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes model.txt, history.csv, timing.csv and manifest.txt.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Accuracy of a model on a dataset; with --out also writes errors.csv.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analysis tables: curve-point, errors, operators or round-retest.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        kind: ReportKind,
        /// Histogram axis for `errors`: p, theta-p or lambda.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
        /// Decimal places for `operators` and `round-retest`.
        #[arg(long)]
        decimals: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<Config, CliError> {
    let mut cfg = match &common.preset {
        Some(name) => Config::preset(name)?,
        None => Config::default(),
    };
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Missing {
            path: path.clone(),
            source,
        })?;
        cfg.merge(Config::parse(&text)?);
    }
    if let Some(seed) = common.seed {
        cfg.set("run.seed", seed.to_string());
    }
    Ok(cfg)
}

fn parse_family(s: &str) -> Result<StateFamily, CliError> {
    s.parse()
        .map_err(|e: bcnn_core::Error| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            family,
            size,
            balance,
            test,
            common,
            out,
        } => {
            let cfg = load_config(&common)?;
            let family = match family {
                Some(f) => parse_family(&f)?,
                None => cfg.require("data.family")?,
            };
            let size = match size {
                Some(s) => s,
                None => cfg.require("data.train_size")?,
            };
            let balance = balance || cfg.get_bool("data.balance")?.unwrap_or(false);
            let seed = cfg.require("run.seed")?;
            let split = if test { Split::Test } else { Split::Train };
            let ds = commands::generate(
                &GenerateArgs {
                    family,
                    size,
                    seed,
                    balance,
                    split,
                },
                &out,
            )?;
            let ent = ds.entangled_count();
            println!(
                "{} {family} states: {ent} entangled / {} separable -> {}",
                ds.len(),
                ds.len() - ent,
                out.display()
            );
        }
        Command::Train { common, out, quiet } => {
            let cfg = load_config(&common)?;
            let outcome = commands::train(&cfg, &out, !quiet)?;
            println!(
                "train accuracy {:.4}  test accuracy {:.4} ({} errors)  -> {}",
                outcome.train_accuracy,
                outcome.test.accuracy,
                outcome.test.errors.len(),
                out.display()
            );
        }
        Command::Eval { model, data, out } => {
            let ev = commands::eval(&model, &data, out.as_deref())?;
            println!("accuracy {:.4} ({} errors)", ev.accuracy, ev.errors.len());
        }
        Command::Report {
            model,
            data,
            kind,
            axis,
            bins,
            decimals,
            out,
        } => {
            let axis = axis
                .map(|a| a.parse::<ErrorAxis>())
                .transpose()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let summary = commands::report(
                &model,
                &data,
                &ReportArgs {
                    kind,
                    axis,
                    bins,
                    decimals,
                },
                Path::new(&out),
            )?;
            println!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bcnn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
