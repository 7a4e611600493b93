use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use swaf_core::model::TaskKind;
use swaf_core::pipeline::{run_pipeline, Mode, RunConfig};

/// Fuse the outputs of several slot-filling, entity-linking or object
/// detection systems with a stacked meta-classifier.
#[derive(Debug, Parser)]
#[command(name = "swaf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and normalize system output files
    Ingest(Flags),
    /// Train the meta-classifier on system outputs with gold answers
    Train(Flags),
    /// Fuse system outputs with a trained model
    Predict(Flags),
    /// Score an output file against gold
    Score(Flags),
    /// Sweep the voting threshold against gold
    VoteSweep(Flags),
    /// Generate a synthetic train/test corpus
    Synth(Flags),
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// slot-filling, entity-linking or object-detection
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskKind>,
    /// System output files (repeat the flag or separate with commas)
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Source and key documents
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// key = value configuration file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

enum Failure {
    Usage(String),
    Run(swaf_core::Error),
}

impl From<swaf_core::Error> for Failure {
    fn from(e: swaf_core::Error) -> Self {
        Failure::Run(e)
    }
}

fn merged_config(flags: Flags) -> Result<RunConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if flags.task.is_some() {
        cfg.task = flags.task;
    }
    if !flags.inputs.is_empty() {
        cfg.inputs = flags.inputs;
    }
    cfg.gold = flags.gold.or(cfg.gold);
    cfg.docs = flags.docs.or(cfg.docs);
    cfg.model = flags.model.or(cfg.model);
    cfg.out = flags.out.or(cfg.out);
    if let Some(seed) = flags.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn check_required(cfg: &RunConfig, mode: Mode) -> Result<(), Failure> {
    let mut missing = Vec::new();
    if cfg.task.is_none() {
        missing.push("--task");
    }
    if mode != Mode::Synth && cfg.inputs.is_empty() {
        missing.push("--inputs");
    }
    if matches!(mode, Mode::Train | Mode::Score | Mode::VoteSweep) && cfg.gold.is_none() {
        missing.push("--gold");
    }
    if mode == Mode::Predict && cfg.model.is_none() {
        missing.push("--model");
    }
    if !matches!(mode, Mode::Ingest | Mode::Score) && cfg.out.is_none() {
        missing.push("--out");
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "missing required {}",
            missing.join(", ")
        )))
    }
}

fn run(cli: Cli) -> Result<String, Failure> {
    let (mode, flags) = match cli.command {
        Command::Ingest(f) => (Mode::Ingest, f),
        Command::Train(f) => (Mode::Train, f),
        Command::Predict(f) => (Mode::Predict, f),
        Command::Score(f) => (Mode::Score, f),
        Command::VoteSweep(f) => (Mode::VoteSweep, f),
        Command::Synth(f) => (Mode::Synth, f),
    };
    let cfg = merged_config(flags)?;
    check_required(&cfg, mode)?;
    Ok(run_pipeline(&cfg, mode)?)
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
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `swaf --help` for usage");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
