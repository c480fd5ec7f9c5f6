use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use navrl::commands::{self, TrainStage};
use navrl::config::RunConfig;

/// Reasoning-then-execution navigation RL pipeline.
#[derive(Parser)]
#[command(name = "navrl", version, about)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override individual keys, e.g. --set grpo.learning_rate=0.01.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Sft,
    Grpo,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, verify, and write the CoT dataset manifest.
    GenData,
    /// Re-verify an existing manifest; optionally export a review subset.
    VerifyData {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Export this many random samples for human review.
        #[arg(long)]
        export_review: Option<usize>,
        #[arg(long)]
        review_out: Option<PathBuf>,
    },
    /// Run a training stage (grpo requires the sft checkpoint).
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Roll out a checkpoint over the evaluation suite and emit metrics.
    Eval {
        /// Checkpoint path; defaults to the run's checkpoint for --stage.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "grpo")]
        stage: Stage,
    },
    /// Reward-decomposition sweep over the eight component masks.
    Ablate,
    /// ASCII replay of one recorded evaluation trace.
    Replay {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Print aligned tables from evaluation summary files.
    Report {
        summaries: Vec<PathBuf>,
    },
}

impl From<Stage> for TrainStage {
    fn from(s: Stage) -> TrainStage {
        match s {
            Stage::Sft => TrainStage::Sft,
            Stage::Grpo => TrainStage::Grpo,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenData => {
            let outcome = commands::cmd_gen_data(&config)?;
            println!("manifest written to {}", outcome.manifest_path.display());
            print!("{}", outcome.stats);
        }
        Command::VerifyData { manifest, export_review, review_out } => {
            let export = match (export_review, review_out) {
                (Some(n), Some(path)) => Some((n, path)),
                (Some(n), None) => {
                    Some((n, config.report_path("review_subset.jsonl")))
                }
                _ => None,
            };
            let stats = commands::cmd_verify_data(&config, manifest.as_deref(), export)?;
            print!("{stats}");
        }
        Command::Train { stage } => {
            let outcome = commands::cmd_train(&config, stage.into())?;
            println!("checkpoint written to {}", outcome.checkpoint_path.display());
            println!("log written to {}", outcome.log_path.display());
        }
        Command::Eval { checkpoint, stage } => {
            let stage: TrainStage = stage.into();
            let path =
                checkpoint.unwrap_or_else(|| config.checkpoint_path(stage.as_str()));
            let outcome = commands::cmd_eval(&config, &path, stage.as_str())?;
            print!("{}", navrl::metrics::format_table(&outcome.summary));
            println!("summary written to {}", outcome.summary_path.display());
        }
        Command::Ablate => {
            let outcome = commands::cmd_ablate(&config)?;
            print!("{}", commands::format_ablation_table(&outcome.report));
            println!("report written to {}", outcome.json_path.display());
        }
        Command::Replay { traces, index } => {
            print!("{}", commands::cmd_replay(&traces, index)?);
        }
        Command::Report { summaries } => {
            print!("{}", commands::cmd_report(&summaries)?);
        }
    }
    Ok(())
}
