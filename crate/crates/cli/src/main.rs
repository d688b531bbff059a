//! `eusseg`: preprocess, split, train, evaluate and analyze.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or input, 2 when
//! the computation itself fails (divergence, non-finite values, failed folds).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eusseg_core::model::ModelError;
use eusseg_core::trainer::TrainError;

use commands::RuntimeFailure;
use config::{resolve, Overrides};

#[derive(Parser)]
#[command(name = "eusseg", version, about = "EUS pancreatic tumor segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sets the training, split and bootstrap seeds at once.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Small model preset for smoke runs.
    #[arg(long, global = true)]
    toy: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Crop, resample and cache a manifest's images at the model input size.
    Preprocess {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write case-grouped cross-validation folds.
    Split {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-validated training; resumes completed folds in --out.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Saved fold file from `split`.
        #[arg(long)]
        folds: Option<PathBuf>,
        /// Train only this fold.
        #[arg(long)]
        fold: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a manifest.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Failure buckets, component counts and overlays for evaluate output.
    Analyze {
        /// Output directory of `evaluate`.
        #[arg(long)]
        results: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        toy: common.toy,
        seed: common.seed,
        out: common.out.clone(),
        ..Overrides::default()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Preprocess { manifest, common } => {
            let flags = Overrides {
                manifest,
                ..overrides(&common)
            };
            commands::preprocess(&resolve(common.config.as_deref(), &flags)?.config)
        }
        Command::Split { manifest, common } => {
            let flags = Overrides {
                manifest,
                ..overrides(&common)
            };
            commands::split(&resolve(common.config.as_deref(), &flags)?.config)
        }
        Command::Train {
            manifest,
            folds,
            fold,
            common,
        } => {
            let flags = Overrides {
                manifest,
                folds,
                ..overrides(&common)
            };
            commands::train(&resolve(common.config.as_deref(), &flags)?.config, fold)
        }
        Command::Evaluate {
            manifest,
            checkpoint,
            common,
        } => {
            let flags = Overrides {
                manifest,
                ..overrides(&common)
            };
            let r = resolve(common.config.as_deref(), &flags)?;
            commands::evaluate(&r.config, &checkpoint, r.model_explicit)
        }
        Command::Analyze { results, common } => {
            let flags = Overrides {
                results,
                ..overrides(&common)
            };
            commands::analyze(&resolve(common.config.as_deref(), &flags)?.config)
        }
    }
}

fn is_runtime(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<RuntimeFailure>()
            || matches!(e.downcast_ref::<ModelError>(), Some(ModelError::NonFinite(_)))
            || matches!(
                e.downcast_ref::<TrainError>(),
                Some(TrainError::Divergence { .. } | TrainError::NonFiniteGradient | TrainError::NonFiniteUpdate)
            )
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_runtime(&e) { 2 } else { 1 })
        }
    }
}
