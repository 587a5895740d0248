use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dtl_harness::commands::{self, DatasetPick, Overrides, SplitPick};
use dtl_harness::config::StrategyChoice;
use dtl_harness::report::ReportFormat;

/// Distributed transfer learning experiment runner.
#[derive(Parser)]
#[command(name = "dtl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config file (flat `key = value`).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's report format (text | csv).
    #[arg(long)]
    format: Option<ReportFormat>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the primary network and save its checkpoint.
    TrainPrimary {
        #[command(flatten)]
        common: Common,
    },
    /// Transfer a primary checkpoint to the target dataset.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// standard | distributed | both (defaults to the config value).
        #[arg(long)]
        strategy: Option<StrategyChoice>,
        /// Primary checkpoint path (defaults to `<out_dir>/primary.ckpt`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a configured dataset split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// primary | target.
        #[arg(long, default_value = "target")]
        dataset: DatasetPick,
        /// train | validation | test.
        #[arg(long, default_value = "test")]
        split: SplitPick,
    },
    /// Decompose a checkpoint and dump per-filter evidence.
    BpaInspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Train each single-filter head this many epochs before inspecting.
        #[arg(long, default_value_t = 0)]
        head_epochs: usize,
    },
    /// Write the configured synthetic datasets as IDX files.
    SynthGen {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> dtl_harness::Result<()> {
    match cli.command {
        Command::TrainPrimary { common } => {
            let cfg = commands::load_config(&common.config, &common.overrides())?;
            commands::cmd_train_primary(&cfg)
        }
        Command::Transfer {
            common,
            strategy,
            checkpoint,
        } => {
            let cfg = commands::load_config(&common.config, &common.overrides())?;
            commands::cmd_transfer(&cfg, strategy, &checkpoint)
        }
        Command::Evaluate {
            common,
            checkpoint,
            dataset,
            split,
        } => {
            let cfg = commands::load_config(&common.config, &common.overrides())?;
            commands::cmd_evaluate(&cfg, &checkpoint, dataset, split)
        }
        Command::BpaInspect {
            common,
            checkpoint,
            head_epochs,
        } => {
            let cfg = commands::load_config(&common.config, &common.overrides())?;
            commands::cmd_bpa_inspect(&cfg, &checkpoint, head_epochs)
        }
        Command::SynthGen { common } => {
            let cfg = commands::load_config(&common.config, &common.overrides())?;
            commands::cmd_synth_gen(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}: {err}", err.category());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
