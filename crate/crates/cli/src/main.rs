//! `keyfault`: offline pipeline and study server.
//!
//! Exit codes: 0 success, 2 missing or unreadable input, 64 usage error,
//! 70 internal error. Randomised commands print the seed they used on stderr;
//! the default seed is 0.

mod commands;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use keyfault_core::InjectionMode;

#[derive(Debug, Parser)]
#[command(name = "keyfault", version, about = "Error injection and evaluation for text-entry studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ModelArgs {
    /// Keyboard layout file (default: bundled QWERTY).
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Substitution matrix file (default: bundled synthetic matrix).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a substitution matrix from session logs.
    BuildMatrix {
        /// Directory of `.jsonl` session logs.
        logs_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pass text through an injection engine, one keystroke per character.
    Inject {
        /// Input file (default: stdin).
        input: Option<PathBuf>,
        #[arg(long, default_value = "word")]
        mode: InjectionMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "pt", default_value_t = keyfault_core::injection::DEFAULT_P_T, value_parser = parse_probability)]
        p_t: f64,
        #[command(flatten)]
        model: ModelArgs,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Decision sidecar (JSON lines). Defaults to `<out>.decisions.jsonl`
        /// when `--out` is given.
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
    /// Run synthetic typists through a study.
    Simulate {
        /// Experiment manifest (default: bundled).
        manifest: Option<PathBuf>,
        /// Overrides the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Writes one log per participant and condition plus `reports.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the measures table from session logs.
    Analyze {
        /// Log files or directories of `.jsonl` logs.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Target phrases, one per line, for logs without phrase prompts.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Also print one JSON report per log.
        #[arg(long)]
        json: bool,
    },
    /// Print condition orders and phrase-set assignments.
    Plan {
        participants: u32,
        seed: u64,
        /// Phrase pool to partition (default: bundled).
        #[arg(long)]
        phrases: Option<PathBuf>,
        #[arg(long, default_value_t = 14)]
        set_size: usize,
    },
    /// Host live study sessions.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for study configs and session logs.
        #[arg(long, default_value = "study-data")]
        data: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        dict: Option<PathBuf>,
    },
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("{p} is outside [0, 1]"))
    }
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Usage(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Usage(_) => 64,
            CliError::Internal(_) => 70,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("keyfault: {e}");
            ExitCode::from(e.code())
        }
    }
}
