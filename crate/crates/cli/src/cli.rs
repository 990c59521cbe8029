//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Stage;

#[derive(Debug, Parser)]
#[command(name = "qsta", version, about = "Short-term voltage stability assessment pipeline: data generation, labeling, augmentation, training, attacks, defense, sweeps and reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate post-fault trajectories over the scenario grid
    Datagen(RunArgs),
    /// Label trajectories (heuristic + SFCM) and cut model input windows
    Label(RunArgs),
    /// Train per-class LSGANs, write generated windows and validate them
    Augment(RunArgs),
    /// Train the configured model and save a checkpoint
    Train(RunArgs),
    /// Attack the trained model over the configured grid
    Attack(RunArgs),
    /// Adversarially fine-tune the trained model and re-evaluate it
    Defend(RunArgs),
    /// Model comparison, quantum circuit or sampling-window sweep
    Sweep(RunArgs),
    /// Four-pipeline ablation with robustness evaluation
    Ablate(RunArgs),
    /// Index every run summary in the output directory
    Report(RunArgs),
}

impl Command {
    pub fn parts(&self) -> (Stage, &RunArgs) {
        match self {
            Command::Datagen(a) => (Stage::Datagen, a),
            Command::Label(a) => (Stage::Label, a),
            Command::Augment(a) => (Stage::Augment, a),
            Command::Train(a) => (Stage::Train, a),
            Command::Attack(a) => (Stage::Attack, a),
            Command::Defend(a) => (Stage::Defend, a),
            Command::Sweep(a) => (Stage::Sweep, a),
            Command::Ablate(a) => (Stage::Ablate, a),
            Command::Report(a) => (Stage::Report, a),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file
    #[arg(short, long, value_name = "FILE")]
    pub config: PathBuf,
    /// Master seed; replaces the file's `seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one configuration key, e.g. `--set training.epochs=5` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; takes precedence over QSTA_OUTPUT_DIR and `output_dir`
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// More log output (repeat for more)
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only warnings and errors
    #[arg(short, long, conflicts_with = "verbose")]
    pub quiet: bool,
}
