//! Command-line front end: config parsing, the experiment matrix and the
//! `generate`/`pretrain`/`train`/`calibrate`/`analyze`/`fewshot` commands.

mod commands;
mod config;
mod experiment;
mod manifest;
mod variants;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_analyze, cmd_calibrate, cmd_fewshot, cmd_generate, cmd_pretrain, cmd_train, execute, read_train_results, Run,
};
pub use config::{parse_seeds, BackboneSection, DataSection, ExperimentConfig, KEYS};
pub use experiment::{cell_label, par_map, run_cell, thread_count, CellOutcome, Splits, Task, TokenData};
pub use manifest::{check_output_dir, manifest_name, write_manifest, Status, TOOL_VERSION};
pub use variants::{Variant, ALL as ALL_VARIANTS};

use crate::error::{GleeError, Result};

#[derive(Debug, Parser)]
#[command(name = "glee", version, about = "Classifier-head vs prompt finetuning on long-tailed data, at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat `key = value` experiment config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated seeds (overrides `seeds` in the config).
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic long-tailed corpus, vocabulary and prompt files.
    Generate(CommonArgs),
    /// Pretrain the toy backbone with masked-token prediction.
    Pretrain(CommonArgs),
    /// Train and evaluate every (variant, seed) cell.
    Train(CommonArgs),
    /// Re-evaluate trained cells under η-norm over the τ grid.
    Calibrate(CommonArgs),
    /// Norm profiles, slopes and feature distributions of trained cells.
    Analyze(CommonArgs),
    /// Few-shot sampling followed by training and evaluation.
    Fewshot(CommonArgs),
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.output {
            config.output = Some(out.clone());
        }
        if let Some(seeds) = &self.seeds {
            config.seeds = parse_seeds(seeds)?;
        }
        config.validate()?;
        Ok(config)
    }
}

pub fn run(cli: &Cli) -> Result<PathBuf> {
    let (args, f): (&CommonArgs, fn(&ExperimentConfig) -> Result<PathBuf>) = match &cli.command {
        Command::Generate(a) => (a, cmd_generate),
        Command::Pretrain(a) => (a, cmd_pretrain),
        Command::Train(a) => (a, cmd_train),
        Command::Calibrate(a) => (a, cmd_calibrate),
        Command::Analyze(a) => (a, cmd_analyze),
        Command::Fewshot(a) => (a, cmd_fewshot),
    };
    f(&args.resolve()?)
}

/// Parses `args`, runs the command and maps errors to exit codes
/// (2 for configuration errors, 1 otherwise).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                GleeError::Config { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
