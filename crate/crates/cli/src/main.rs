//! `refex`: group, tag, decode and score OCR'd referral pages.
//!
//! Every stage reads and writes the interchange JSON files, so a corpus
//! can be run in one go (`run`) or stage by stage through intermediate
//! files. Exit status is 0 on success, 1 on data errors and 2 on bad
//! arguments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use refex_core::synth::LayoutKind;

use config::ConfigArgs;

/// Bad arguments or config values. Maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "refex", version, about = "Entity extraction from OCR'd healthcare referrals")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseLevel {
    None,
    Heavy,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with gold labels and predictions.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        pages: usize,
        #[arg(long)]
        out: PathBuf,
        /// Layouts to draw from (default: all).
        #[arg(long, value_delimiter = ',')]
        layout: Vec<LayoutKind>,
        #[arg(long, value_enum, default_value_t = NoiseLevel::None)]
        noise: NoiseLevel,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Group the lines of one OCR page.
    Group {
        page: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag one grouped page.
    Tag {
        page: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode tags into entities, post-process and select.
    Decode {
        page: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score entity files against gold. Accepts two files or two directories.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage over a page or a directory of `*.ocr.json` pages.
    Run {
        input: PathBuf,
        /// Directory holding `<stem>.gold.json` files.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Report path (default: `<out>/report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Abort on the first failing page.
        #[arg(long)]
        strict: bool,
    },
    /// Apply the domain rules to a gold annotation file.
    Correct {
        page: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the correction log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli.command, &cli.config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
