mod artifacts;
mod config;
mod inputs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Error};
use clap::{Parser, Subcommand};

use amod_core::fleet::Strategy;

use crate::artifacts::{CellStatus, Mismatch};
use crate::config::RunConfig;
use crate::inputs::{Inputs, Validation};

#[derive(Parser)]
#[command(name = "amod", version, about = "Fleet dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load every input and report integrity problems.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run the configured strategy once.
    Run(ConfigArgs),
    /// Improvement of the first run over the second.
    Compare {
        with: PathBuf,
        without: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run each strategy with and without expansion over the same inputs.
    Matrix {
        #[command(flatten)]
        args: ConfigArgs,
        /// Comma-separated subset of NSS,SSS,OSS.
        #[arg(long, value_delimiter = ',', default_values_t = Strategy::ALL)]
        strategies: Vec<Strategy>,
    },
}

/// Failure classes, each with its own exit status.
enum Failure {
    Validation(Error),
    Runtime(Error),
    Mismatch(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Mismatch(_) => 3,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) | Failure::Mismatch(e) => e,
        }
    }
}

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(Failure::Validation)?;
    if let Some(seed) = seed_override {
        cfg.override_seeds(seed);
    }
    Ok(cfg)
}

fn load_inputs(cfg: &RunConfig) -> Result<(Inputs, Validation), Failure> {
    let (inputs, report) = inputs::load(cfg);
    match inputs {
        Some(i) => Ok((i, report)),
        None => Err(Failure::Validation(anyhow!("{report}"))),
    }
}

fn prepare(args: &ConfigArgs) -> Result<(RunConfig, Inputs, PathBuf), Failure> {
    let cfg = load_config(&args.config, args.seed_override)?;
    let (inputs, report) = load_inputs(&cfg)?;
    for issue in &report.issues {
        log::warn!("{}", issue.message);
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, inputs, out))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { config, seed_override } => {
            let cfg = load_config(&config, seed_override)?;
            let (_, report) = inputs::load(&cfg);
            if report.has_errors() {
                return Err(Failure::Validation(anyhow!("{report}")));
            }
            println!("{report}");
            Ok(())
        }
        Command::Run(args) => {
            let (cfg, inputs, out) = prepare(&args)?;
            let meta = artifacts::execute(&cfg, &inputs, &out).map_err(Failure::Runtime)?;
            println!("{} -> {}", meta.label, out.display());
            Ok(())
        }
        Command::Compare { with, without, out } => {
            let report = artifacts::compare(&with, &without).map_err(|e| {
                if e.is::<Mismatch>() {
                    Failure::Mismatch(e)
                } else {
                    Failure::Runtime(e)
                }
            })?;
            if let Some(path) = out {
                std::fs::write(&path, &report)
                    .map_err(|e| Failure::Runtime(anyhow!("cannot write {}: {e}", path.display())))?;
            }
            print!("{report}");
            Ok(())
        }
        Command::Matrix { args, strategies } => {
            let (cfg, inputs, out) = prepare(&args)?;
            let outcome = artifacts::matrix(&cfg, &inputs, &strategies, &out).map_err(Failure::Runtime)?;
            let mut failed = Vec::new();
            for (label, status) in &outcome.cells {
                match status {
                    CellStatus::Ran => println!("{label}: ran"),
                    CellStatus::UpToDate => println!("{label}: up to date"),
                    CellStatus::Failed(e) => {
                        println!("{label}: failed: {e}");
                        failed.push(label.as_str());
                    }
                }
            }
            if let Some(report) = outcome.report {
                println!("report -> {}", report.display());
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Runtime(anyhow!("{} of {} cells failed: {}", failed.len(), outcome.cells.len(), failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
