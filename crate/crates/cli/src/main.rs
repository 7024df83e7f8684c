//! `madeon`: data generation, tokenization, training, decoding and scoring
//! for the decoder-only speech recognizer.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use madeon::model::PrefixMode;
use madeon::ssm::SsmVariant;

use config::Overrides;

#[derive(Parser)]
#[command(name = "madeon", version, about = "Decoder-only speech recognition with selective state-space models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the internal consistency checks.
    Selftest(commands::selftest::SelftestArgs),
    /// Quantize features and/or learn subword vocabularies.
    Tokenize(commands::tokenize::TokenizeArgs),
    /// Train a model on a JSON-lines corpus.
    Train(commands::train::TrainArgs),
    /// Transcribe a corpus with a trained checkpoint.
    Decode(commands::decode::DecodeArgs),
    /// Score hypotheses against references.
    Eval(commands::eval::EvalArgs),
    /// Generate synthetic data.
    #[command(subcommand)]
    Gen(commands::gen::GenCommand),
}

/// Flags shared by the config-driven subcommands.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_ssm)]
    pub ssm: Option<SsmVariant>,
    #[arg(long, value_parser = parse_prefix)]
    pub prefix: Option<PrefixMode>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            ssm: self.ssm,
            prefix: self.prefix,
            ..Overrides::default()
        }
    }
}

fn parse_ssm(s: &str) -> Result<SsmVariant, String> {
    s.parse().map_err(|_| "expected one of s4d, mamba, mamba2".to_string())
}

fn parse_prefix(s: &str) -> Result<PrefixMode, String> {
    s.parse().map_err(|_| "expected one of none, serial, parallel".to_string())
}

/// Bad invocation or input; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Whether a command finished cleanly or a check/threshold failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        if e.is::<UsageError>() {
            return true;
        }
        match e.downcast_ref::<madeon::Error>() {
            Some(madeon::Error::Config(_) | madeon::Error::Parse { .. } | madeon::Error::Format(_)) => true,
            Some(madeon::Error::Io(io)) => io.kind() == std::io::ErrorKind::NotFound,
            _ => e
                .downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound),
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Selftest(a) => commands::selftest::run(a),
        Command::Tokenize(a) => commands::tokenize::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Decode(a) => commands::decode::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Gen(c) => commands::gen::run(c),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_usage(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
