use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cddm::experiment::{ExperimentConfig, Mode, Profile};
use cddm::parallel::Execution;

mod commands;

#[derive(Parser)]
#[command(name = "cddm", version, about = "Continual prune-and-select GRUs for elastoplastic tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample shared strain paths and write one CSV per task.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Override the number of paths.
        #[arg(long)]
        n_paths: Option<usize>,
    },
    /// Train every (budget, seed) run of the configured mode.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Score checkpoints on a dataset split.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restrict to these task ids.
        #[arg(long, value_delimiter = ',')]
        task: Vec<String>,
        /// `test` or `train`.
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write per-step predictions.
        #[arg(long)]
        predictions: bool,
        #[arg(long)]
        sequential: bool,
    },
    /// Collect run results into error grids and occupancy tables.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// `result.json` files or directories searched for them.
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Path seed for `generate`, run seed for `train`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ordering: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    prune_iters: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn execution(&self) -> Execution {
        execution(self.sequential)
    }

    fn resolve(&self, seed_is_path_seed: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::profile(self.profile.parse::<Profile>()?),
        };
        if let Some(s) = self.seed {
            if seed_is_path_seed {
                cfg.data.path_seed = s;
            } else {
                cfg.seeds = vec![s];
            }
        }
        if let Some(o) = self.ordering {
            cfg.ordering = o;
        }
        if let Some(b) = &self.budgets {
            cfg.budgets = b.clone();
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse::<Mode>()?;
        }
        if let Some(a) = self.alpha {
            cfg.training.alpha = a;
        }
        if let Some(n) = self.prune_iters {
            cfg.training.prune_iterations = n;
        }
        if let Some(h) = self.hidden {
            cfg.architecture.hidden_size = h;
        }
        if let Some(l) = self.layers {
            cfg.architecture.num_layers = l;
        }
        Ok(cfg)
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn split_arg(s: &str) -> Result<bool> {
    match s {
        "test" => Ok(true),
        "train" => Ok(false),
        _ => bail!("--split must be test or train, got `{s}`"),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { common, n_paths } => {
            let mut cfg = common.resolve(true)?;
            if let Some(n) = n_paths {
                cfg.data.n_paths = n;
            }
            commands::generate(&cfg, &common.out, common.execution())
        }
        Command::Train { common, data } => {
            let cfg = common.resolve(false)?;
            commands::train(&cfg, &data, &common.out, common.execution())
        }
        Command::Evaluate {
            checkpoint,
            data,
            out,
            task,
            split,
            predictions,
            sequential,
        } => commands::evaluate(
            &checkpoint,
            &data,
            &out,
            &task,
            split_arg(&split)?,
            predictions,
            execution(sequential),
        ),
        Command::Report { out, results } => commands::report(&results, &out),
    }
}
