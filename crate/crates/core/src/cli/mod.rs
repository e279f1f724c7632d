//! Command-line entry points: `train`, `eval`, `analyze <name>`, `sweep` and
//! `print-config`, configured by a `key = value` file plus `key=value`
//! overrides.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{load_checkpoint, load_data, run_analyze, run_eval, run_sweep, run_train, EvalReport, TrainOutcome, ANALYSES};
pub use config::RunConfig;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "vib-vit", version, about = "Train and analyse bottlenecked vision transformers")]
pub struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (1 gives bit-exact reruns; default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model; writes checkpoint.bin, epochs.csv and train.json.
    Train {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate `checkpoint` on the validation split; writes eval.json.
    Eval {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a named analysis on `checkpoint`; writes <name>.csv and <name>.json.
    Analyze {
        name: String,
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train once per value in `betas`, into beta_<b>/ subdirectories.
    Sweep {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the resolved configuration.
    PrintConfig {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    let empty = Vec::new();
    let overrides = match &cli.command {
        Some(
            Command::Train { overrides }
            | Command::Eval { overrides }
            | Command::Analyze { overrides, .. }
            | Command::Sweep { overrides }
            | Command::PrintConfig { overrides },
        ) => overrides,
        None => &empty,
    };
    let cfg = RunConfig::resolve(cli.config.as_deref(), overrides)?;
    if cli.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    match cli.command {
        Some(Command::Train { .. }) => run_train(&cfg).map(drop),
        Some(Command::Eval { .. }) => run_eval(&cfg).map(drop),
        Some(Command::Analyze { name, .. }) => run_analyze(&cfg, &name),
        Some(Command::Sweep { .. }) => run_sweep(&cfg),
        Some(Command::PrintConfig { .. }) => {
            print!("{}", cfg.to_text());
            Ok(())
        }
        None => Err(Error::Usage("no command given (train | eval | analyze | sweep | print-config)".into())),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
