//! `opus`: owner, user and server roles of the encrypted fuzzy search engine
//! over on-disk artifacts.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0    | success; for `verify`, the proof was accepted |
//! | 1    | any other failure (invalid parameter, key generation, ...) |
//! | 2    | an output path could not be written |
//! | 3    | empty corpus or empty query |
//! | 4    | dimension mismatch between artifacts |
//! | 5    | `verify` rejected the proof |
//! | 6    | an input file is missing or malformed |
//! | 64   | command-line usage error |

mod commands;
mod params;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_UNWRITABLE: u8 = 2;
pub const EXIT_EMPTY: u8 = 3;
pub const EXIT_DIMENSION: u8 = 4;
pub const EXIT_REJECTED: u8 = 5;
pub const EXIT_MALFORMED: u8 = 6;
pub const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "opus",
    version,
    about = "Multi-keyword fuzzy search over encrypted data"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed for every deterministic random choice; drawn from the OS and
    /// printed when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file of pipeline parameters (index and query), or of experiment
    /// settings (eval, when --config is absent).
    #[arg(long, global = true, value_name = "FILE")]
    pub params_file: Option<PathBuf>,
    /// Print progress and timings to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a secret key (owner).
    Keygen(commands::KeygenArgs),
    /// Build, encrypt and sign the index of a text corpus (owner).
    Index(commands::IndexArgs),
    /// Encrypt a keyword query into a trapdoor (user).
    Query(commands::QueryArgs),
    /// Rank files against a trapdoor and emit a proof (server).
    Search(commands::SearchArgs),
    /// Check a search proof against the owner's public key (user).
    Verify(commands::VerifyArgs),
    /// Run an accuracy and cost experiment on a corpus.
    Eval(commands::EvalArgs),
    /// Write a synthetic topic-structured text corpus.
    GenCorpus(commands::GenCorpusArgs),
}

/// An error that carries its exit code.
#[derive(Debug)]
pub struct Coded {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

pub fn coded(code: u8, err: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(Coded {
        code,
        message: format!("{err:#}"),
    })
}

pub fn malformed(err: anyhow::Error) -> anyhow::Error {
    coded(EXIT_MALFORMED, err)
}

pub fn read_bytes(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        coded(
            EXIT_MALFORMED,
            anyhow::anyhow!("cannot read {}: {e}", path.display()),
        )
    })
}

pub fn read_string(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        coded(
            EXIT_MALFORMED,
            anyhow::anyhow!("cannot read {}: {e}", path.display()),
        )
    })
}

pub fn write_bytes(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::write(path, bytes).map_err(|e| {
        coded(
            EXIT_UNWRITABLE,
            anyhow::anyhow!("cannot write {}: {e}", path.display()),
        )
    })
}

/// Exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use opus_core::Error as E;
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e.root_cause() {
                E::CorpusEmpty(_) | E::InvalidQuery(_) => EXIT_EMPTY,
                E::Dimension { .. } => EXIT_DIMENSION,
                E::Format { .. } | E::Undecodable { .. } | E::Io { .. } => EXIT_MALFORMED,
                _ => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
