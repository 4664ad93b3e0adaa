mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// A bad flag, config key or value. Exits with status 1.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "gran", version, about = "Train and sample block-wise graph generators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config; unset keys fall back to the profile
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the command's random choices
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory
    GenData {
        #[command(flatten)]
        common: Common,
        /// grid, lobster or er
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train on a dataset directory, writing checkpoints and a log
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Comma-separated ordering kinds, e.g. dfs,bfs
        #[arg(long)]
        orderings: Option<String>,
        /// Continue from the checkpoints already in --out
        #[arg(long)]
        resume: bool,
    },
    /// Sample graphs from a checkpoint
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset whose size distribution the sample sizes follow
        #[arg(long)]
        sizes_from: Option<PathBuf>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        /// Fixed node count for every sample
        #[arg(long)]
        nodes: Option<usize>,
        /// Keep an edge when its mixture probability exceeds one half
        #[arg(long)]
        threshold: bool,
        /// Keep only the largest connected component of each sample
        #[arg(long)]
        largest_component: bool,
    },
    /// Compare a generated dataset against a reference dataset
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Also report the fraction of generated graphs that are lobsters
        #[arg(long)]
        lobster: bool,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Fit an Erdős–Rényi model to a dataset and sample from it
    BaselineEr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
}

fn resolve(common: &Common, edit: impl FnOnce(&mut RunConfig) -> anyhow::Result<()>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    edit(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { common, kind, count } => {
            let cfg = resolve(&common, |c| {
                if let Some(k) = kind {
                    c.dataset_kind = k;
                }
                if let Some(n) = count {
                    c.dataset_count = n;
                }
                if let Some(s) = common.seed {
                    c.dataset_seed = s;
                }
                Ok(())
            })?;
            commands::gen_data(&cfg, &common.out)
        }
        Command::Train {
            common,
            data,
            steps,
            lr,
            batch_size,
            orderings,
            resume,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(v) = steps {
                    c.steps = v;
                }
                if let Some(v) = lr {
                    c.lr = v;
                }
                if let Some(v) = batch_size {
                    c.batch_size = v;
                }
                if let Some(v) = orderings {
                    c.orderings = v.split(',').map(|s| s.trim().to_string()).collect();
                }
                if let Some(s) = common.seed {
                    c.train_seed = s;
                }
                Ok(())
            })?;
            commands::train(&cfg, &data, &common.out, resume)
        }
        Command::Sample {
            common,
            checkpoint,
            sizes_from,
            stride,
            count,
            nodes,
            threshold,
            largest_component,
        } => {
            let mut model = None;
            let cfg = resolve(&common, |c| {
                if let Some(v) = stride {
                    c.stride = v;
                }
                if let Some(v) = count {
                    c.sample_count = v;
                }
                if let Some(v) = nodes {
                    c.sample_nodes = v;
                }
                c.threshold_decoding |= threshold;
                c.largest_component |= largest_component;
                if let Some(s) = common.seed {
                    c.sample_seed = s;
                }
                model = Some(commands::load_checkpoint(c, &checkpoint)?);
                Ok(())
            })?;
            let params = model.expect("checkpoint loaded during resolve");
            commands::sample(&cfg, &params, sizes_from.as_deref(), &common.out)
        }
        Command::Evaluate {
            common,
            generated,
            reference,
            lobster,
            sigma,
        } => {
            let cfg = resolve(&common, |c| {
                c.lobster |= lobster;
                if let Some(v) = sigma {
                    c.sigma = v;
                }
                Ok(())
            })?;
            commands::evaluate(&cfg, &generated, &reference, &common.out)
        }
        Command::BaselineEr { common, train, count } => {
            let cfg = resolve(&common, |c| {
                if let Some(v) = count {
                    c.sample_count = v;
                }
                if let Some(s) = common.seed {
                    c.sample_seed = s;
                }
                Ok(())
            })?;
            commands::baseline_er(&cfg, &train, &common.out)
        }
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some()
            || matches!(e.downcast_ref::<gran_core::Error>(), Some(gran_core::Error::Config(_)))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 1 } else { 2 })
        }
    }
}
