//! Command-line surface. Every command takes an optional TOML configuration
//! plus `--set key=value` overrides, writes the resolved configuration into
//! its output directory before computing, and exits with 0 on success, 2 on
//! configuration errors (including missing inputs) and 3 on runtime
//! failures.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{report_cmd, AblationTable, RESOLVED_CONFIG};
pub use config::{
    apply_override, AblateSection, DataSection, DatasetSection, DumpSection, FewshotSection, FinetuneSection,
    PretrainSection, RunConfig, SyntheticSection,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "relcp", version, about = "Contrastive pre-training for relation extraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set pretrain.steps=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory, overriding `output_dir`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label a corpus from a triple store (or generate one), filter leakage, split and index it.
    BuildDataset(Common),
    /// Pre-train an encoder with the contrastive or MTB objective.
    Pretrain(Common),
    /// Fine-tune a classifier over several seeds and report the median.
    Finetune(Common),
    /// Evaluate an encoder on N-way K-shot episodes.
    Fewshot(Common),
    /// Fine-tune every input setting for every encoder initialization.
    Ablate(Common),
    /// Compare the reports of several run directories.
    Report {
        runs: Vec<PathBuf>,
        /// Run directory deltas are measured against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Also write report.md and report.json here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write sampled contrastive batches as tokens for inspection.
    DumpBatches(Common),
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let with = |c: &Common, f: fn(&RunConfig) -> Result<(), Error>| f(&load(c)?);
    match &cli.command {
        Command::BuildDataset(c) => with(c, commands::build_dataset),
        Command::Pretrain(c) => with(c, commands::pretrain_cmd),
        Command::Finetune(c) => with(c, commands::finetune_cmd),
        Command::Fewshot(c) => with(c, commands::fewshot_cmd),
        Command::Ablate(c) => with(c, commands::ablate_cmd),
        Command::DumpBatches(c) => with(c, commands::dump_batches_cmd),
        Command::Report { runs, baseline, out } => {
            print!("{}", report_cmd(runs, baseline.as_deref(), out.as_deref())?);
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
