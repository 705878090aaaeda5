//! The `pacrnn` command line: `generate`, `train`, `adapt`, `lid`, `eval`
//! and `plot`.
//!
//! Experiments are described by a TOML file (see [`RunConfig`]); flags only
//! pick the file and override the seed and output directory. Every command
//! writes its resolved configuration as `<command>.resolved.toml` into the
//! output directory, and never writes to one of its input files.

mod commands;
mod config;
mod metrics;
mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_adapt, cmd_eval, cmd_generate, cmd_lid, cmd_plot, cmd_train, FamilyManifest, ManifestEntry};
pub use config::{
    AdaptCommand, AdaptConfig, CorpusKind, DataPaths, EvalConfig, GenerateConfig, LidSection, Overrides, PlotConfig, RunConfig,
    OUTPUT_ROOT_ENV,
};
pub use metrics::{read_label, read_metrics, sidecar, write_metrics, EpochTiming, MetricsWriter, RunLabel};
pub use plot::{epoch_rows, learning_curves_svg, summary_markdown, Series};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "pacrnn", version, about = "Train and compare PAC-RNN acoustic models on synthetic corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write toy corpora.
    Generate(RunArgs),
    /// Train a model and write it with its metrics log.
    Train(RunArgs),
    /// Adapt a model to a target language, or run closest-language transfer.
    Adapt(RunArgs),
    /// Train a language identifier and report the closest source language.
    Lid(RunArgs),
    /// Mean objective and frame error rate of a model on a corpus.
    Eval(RunArgs),
    /// Learning curves and a summary table from metrics logs.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment file; defaults apply when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (relative paths resolve against $PACRNN_OUTPUT_ROOT).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Metrics logs; defaults to `plot.metrics` of the config, then to the
    /// output directory's `metrics.jsonl`.
    pub metrics: Vec<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let overrides = Overrides { seed: self.seed, output_dir: self.output.clone() };
        match &self.config {
            Some(path) => RunConfig::load(path, &overrides),
            None => RunConfig::parse("", &overrides),
        }
    }
}

/// Runs one parsed command and returns the text to print.
pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::Generate(a) => cmd_generate(&a.load()?),
        Command::Train(a) => cmd_train(&a.load()?),
        Command::Adapt(a) => cmd_adapt(&a.load()?),
        Command::Lid(a) => cmd_lid(&a.load()?),
        Command::Eval(a) => cmd_eval(&a.load()?),
        Command::Plot(a) => {
            let mut config = a.run.load()?;
            if !a.metrics.is_empty() {
                config.plot.metrics = a.metrics.clone();
            }
            cmd_plot(&config)
        }
    }
}

/// Entry point of the binary. Failures print `error[<class>]: <message>` on
/// a single line to stderr and return a nonzero exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
                eprintln!("error[usage]: {}", first);
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            print!("{}", report);
            0
        }
        Err(e) => {
            let message = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error[{}]: {}", e.class(), message);
            1
        }
    }
}
