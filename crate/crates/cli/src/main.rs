//! `qa`: train, evaluate and verify the answer tagger from the command line.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "qa", version, about = "Sequence-labeling question answering")]
struct Cli {
    /// Flat key=value config file; `#` starts a comment.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one setting (repeatable); wins over the file and QA_SEED.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads for batches and evaluation; 1 is bitwise reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Paths {
    #[arg(long, value_name = "FILE")]
    train_corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    valid_corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    test_corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    synonyms: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
}

impl Paths {
    fn pairs(self) -> Vec<(&'static str, PathBuf)> {
        [
            ("train_corpus", self.train_corpus),
            ("valid_corpus", self.valid_corpus),
            ("test_corpus", self.test_corpus),
            ("embeddings", self.embeddings),
            ("synonyms", self.synonyms),
            ("checkpoint", self.checkpoint),
            ("output_dir", self.output_dir),
            ("predictions", self.predictions),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes best/last checkpoints and an epoch log.
    Train {
        #[command(flatten)]
        paths: Paths,
    },
    /// Score a checkpoint on a labeled corpus.
    Evaluate {
        #[command(flatten)]
        paths: Paths,
        /// annotated, retrieved or all.
        #[arg(long, default_value = "all")]
        setting: String,
        /// strict, fuzzy or all.
        #[arg(long = "match", default_value = "all")]
        match_mode: String,
    },
    /// Write one answer per question of a (possibly unlabeled) corpus.
    Predict {
        #[command(flatten)]
        paths: Paths,
        /// Corpus to answer (same as --test-corpus).
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Predictions file (same as --predictions).
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
        /// annotated or retrieved.
        #[arg(long, default_value = "retrieved")]
        setting: String,
    },
    /// Finite-difference check of every trainable tensor on a toy instance.
    Gradcheck {
        /// Scalars sampled per tensor.
        #[arg(long, default_value_t = 20)]
        max_per_tensor: usize,
        /// Check every scalar of every tensor.
        #[arg(long, conflicts_with = "max_per_tensor")]
        all: bool,
    },
    /// Compare the CRF dynamic programs with brute-force enumeration.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn settings(cli: &Cli, paths: Vec<(&'static str, PathBuf)>) -> CliResult<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        s.apply_file(path)?;
    }
    s.apply_seed_env(std::env::var("QA_SEED").ok())?;
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        s.set(k, v)?;
    }
    for (k, v) in paths {
        s.set(k, &v.to_string_lossy())?;
    }
    Ok(s)
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let threads = cli.threads;
    let command_paths = match &cli.command {
        Command::Train { paths } | Command::Evaluate { paths, .. } => Some(paths),
        Command::Predict { paths, .. } => Some(paths),
        _ => None,
    };
    let mut pairs = command_paths.map(|p| p.clone().pairs()).unwrap_or_default();
    if let Command::Predict { input, output, .. } = &cli.command {
        pairs.extend(input.clone().map(|p| ("test_corpus", p)));
        pairs.extend(output.clone().map(|p| ("predictions", p)));
    }
    let s = settings(&cli, pairs)?;
    for line in s.echo().lines() {
        eprintln!("# {line}");
    }
    eprintln!("# threads={threads}");
    match &cli.command {
        Command::Train { .. } => commands::run_train(&s, threads),
        Command::Evaluate { setting, match_mode, .. } => commands::run_evaluate(
            &s,
            threads,
            &commands::parse_settings(setting)?,
            &commands::parse_modes(match_mode)?,
        ),
        Command::Predict { setting, .. } => commands::run_predict(&s, threads, setting.parse()?),
        Command::Gradcheck { max_per_tensor, all } => {
            commands::run_gradcheck(&s, (!all).then_some(*max_per_tensor))
        }
        Command::OracleCheck { cases, max_len, seed } => commands::run_oracle_check(*cases, *max_len, *seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
