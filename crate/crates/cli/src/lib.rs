//! Command-line experiments for the MAUNet toolkit: synthetic data, training,
//! prediction, baselines, evaluation, extremes and robustness probes.

pub mod commands;
pub mod config;
pub mod data;
pub mod fsio;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use maunet_core::Variant;

pub use config::{ExperimentConfig, Task, Upsample};

#[derive(Debug, Parser)]
#[command(name = "maunet", version, about = "MAUNet precipitation bias correction and downscaling experiments")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `data_seed` for gen-data and robustness, `train_seed` otherwise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to MAUNET_THREADS, then all cores.
    #[arg(long, global = true, env = "MAUNET_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic truth/biased/lowres series.
    GenData,
    /// Train teacher, GT, MP and KR models.
    Train,
    /// Predict the test input with trained checkpoints.
    Predict {
        /// A single checkpoint instead of all trained variants.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate the raw input and every saved prediction against the test target.
    Evaluate {
        /// An extra prediction file to include.
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    /// Fit and apply QM/QDM (and interpolation for coarse inputs).
    Baseline,
    /// Extreme indices and 20 mm detection scores.
    Extremes,
    /// Compare a trained model on real versus skew-normal random inputs.
    Robustness {
        /// teacher, gt, mp or kr.
        #[arg(long, default_value = "kr")]
        variant: String,
    },
    /// Parameter and FLOP counts of both architectures.
    CountParams,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Baseline => "baseline",
            Command::Extremes => "extremes",
            Command::Robustness { .. } => "robustness",
            Command::CountParams => "count-params",
        }
    }

    fn seeds_data(&self) -> bool {
        matches!(self, Command::GenData | Command::Robustness { .. })
    }
}

pub fn parse_variant(s: &str) -> Result<Variant> {
    Variant::ALL
        .into_iter()
        .find(|v| v.tag() == s)
        .with_context(|| format!("unknown variant {s:?} (teacher, gt, mp, kr)"))
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        if cli.command.seeds_data() {
            cfg.data_seed = seed;
        } else {
            cfg.train_seed = seed;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    Ok(())
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    init_threads(cli.threads)?;
    let cfg = resolve_config(cli)?;
    let written = match &cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Predict { checkpoint } => commands::predict(&cfg, checkpoint.as_deref()),
        Command::Evaluate { pred } => commands::evaluate(&cfg, pred.as_deref()),
        Command::Baseline => commands::baseline(&cfg),
        Command::Extremes => commands::extremes(&cfg),
        Command::Robustness { variant } => commands::robustness(&cfg, parse_variant(variant)?),
        Command::CountParams => commands::count_params(&cfg).map(|(csv, files)| {
            print!("{csv}");
            files
        }),
    };
    written.with_context(|| format!("{} failed", cli.command.name()))
}
