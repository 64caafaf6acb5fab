//! The `cgm` command line: evaluation, trimap generation, refinement, toy
//! training, threshold ablation and synthetic data.
//!
//! Every command resolves its settings from flags over an optional config
//! file, echoes the resolved settings into its Markdown report and a
//! `<command>.config.txt` file, and writes deterministic outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod inputs;
pub mod report;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, CliResult, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "cgm", version, about = "Confidence-guided matting toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score prediction PNGs against ground-truth masks.
    Eval(commands::eval::EvalArgs),
    /// Turn predictions into {0,128,255} confidence trimaps.
    Trimap(commands::trimap::TrimapArgs),
    /// Run trimap generation, refinement and compositing per image.
    Refine(commands::refine::RefineArgs),
    /// Train the toy base and refiner on synthetic scenes.
    TrainToy(commands::train::TrainArgs),
    /// Sweep the refinement thresholds under both composite policies.
    Ablate(commands::ablate::AblateArgs),
    /// Write a synthetic image/mask set.
    Synth(commands::synth::SynthArgs),
}

/// Runs one parsed command; the one-line summary goes to stdout.
pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Eval(a) => {
            let o = commands::eval::run(a)?;
            println!(
                "evaluated {} pairs; MAE {:.4}; wrote {}",
                o.dataset.pairs,
                o.dataset.report.mae,
                o.csv.display()
            );
        }
        Command::Trimap(a) => {
            let o = commands::trimap::run(a)?;
            println!("wrote {} trimaps to {}", o.ids.len(), o.dir.display());
        }
        Command::Refine(a) => {
            let o = commands::refine::run(a)?;
            println!("refined {} images into {}", o.ids.len(), o.dir.display());
        }
        Command::TrainToy(a) => {
            let o = commands::train::run(a)?;
            println!(
                "base loss {:.4} -> {:.4}; refiner loss {:.4} -> {:.4}; checkpoint {}",
                o.summary.base.initial,
                o.summary.base.last,
                o.summary.refiner.initial,
                o.summary.refiner.last,
                o.checkpoint.display()
            );
        }
        Command::Ablate(a) => {
            let o = commands::ablate::run(a)?;
            println!("ablated {} threshold settings over {} images", o.rows.len(), o.images);
        }
        Command::Synth(a) => {
            let o = commands::synth::run(a)?;
            println!("wrote {} scenes to {}", o.ids.len(), o.dir.display());
        }
    }
    Ok(())
}
