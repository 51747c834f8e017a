use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mei::commands::{self, EfficiencyArgs};
use mei::{RunArgs, RunConfig};
use mei_core::Split;

/// Knowledge graph embedding with multi-partition interaction.
#[derive(Parser)]
#[command(name = "mei", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints and logs to a run directory.
    Train {
        /// Config file of `key = value` lines; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: <output-dir>/<unix-time>-seed<seed>).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        args: Box<RunArgs>,
    },
    /// Filtered link prediction metrics of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Top-scoring tails for a (head, relation) query.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        head: String,
        #[arg(long)]
        relation: String,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// Marks candidates that are known triples of this dataset.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Parameter counts and efficiency for a model size.
    Efficiency {
        #[arg(long = "E", visible_alias = "entities")]
        entities: Option<u64>,
        #[arg(long = "R", visible_alias = "relations")]
        relations: Option<u64>,
        #[arg(long = "D")]
        d: Option<u64>,
        #[arg(long = "K")]
        k: Option<u64>,
        #[arg(long = "C")]
        c: Option<u64>,
        /// Count one shared core instead of K.
        #[arg(long)]
        shared: bool,
        /// Take entity and relation counts from a dataset.
        #[arg(long)]
        dataset: Option<String>,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::ALL
        .into_iter()
        .find(|split| split.name() == s)
        .ok_or_else(|| format!("expected train, valid or test, got `{s}`"))
}

fn run(cli: Cli) -> Result<()> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Train { config, run_dir, args } => {
            let mut cfg = RunConfig::default();
            if let Some(path) = config {
                cfg.merge_file(&path)?;
            }
            args.apply(&mut cfg);
            let run_dir = run_dir.unwrap_or_else(|| commands::default_run_dir(&cfg));
            commands::train(&cfg, &run_dir, &mut out)?;
        }
        Command::Evaluate { checkpoint, dataset, split } => {
            commands::evaluate(&checkpoint, &dataset, split, &mut out)?;
        }
        Command::Predict { checkpoint, head, relation, top_n, dataset } => {
            commands::predict(&checkpoint, &head, &relation, top_n, dataset.as_deref(), &mut out)?;
        }
        Command::Efficiency { entities, relations, d, k, c, shared, dataset } => {
            let args = EfficiencyArgs { entities, relations, d, k, c, shared, dataset };
            commands::efficiency(&args, &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
