mod ablate;
mod config;
mod evaluate;
mod generate;
mod manifest;
mod memory;
mod pretrain;
mod replay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphfm::Error;

#[derive(Debug, Parser)]
#[command(name = "graphfm", version, about = "Graph foundation model pipeline")]
struct Cli {
    /// Config file (TOML, or JSON by extension) for the chosen subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// LLM backend used by `generate`.
    #[arg(long, global = true, value_parser = config::parse_enum::<graphfm::provider::Backend>)]
    provider: Option<graphfm::provider::Backend>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic graph dataset with an LLM or the mock provider.
    Generate(generate::GenerateArgs),
    /// Pretrain the graph transformer on one or more graphs.
    Pretrain(pretrain::PretrainArgs),
    /// Zero-shot evaluation of a checkpoint on unseen datasets.
    Evaluate(evaluate::EvaluateArgs),
    /// Sweep model variants and record cost and quality per run.
    Ablate(ablate::AblateArgs),
    /// Re-run a recorded command and compare its outputs.
    Replay(replay::ReplayArgs),
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub provider: Option<graphfm::provider::Backend>,
}

impl Global {
    pub fn out(&self) -> graphfm::Result<PathBuf> {
        self.out
            .clone()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .init();
    let global = Global {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        provider: cli.provider,
    };
    let result = match cli.command {
        Command::Generate(a) => generate::run(&global, a),
        Command::Pretrain(a) => pretrain::run(&global, a),
        Command::Evaluate(a) => evaluate::run(&global, a),
        Command::Ablate(a) => ablate::run(&global, a),
        Command::Replay(a) => replay::run(&global, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
