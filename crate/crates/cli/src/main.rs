//! `claimgate` command-line driver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use claimgate::data::Subset;
use claimgate::eval::{Protocol, SurfaceSelector};
use claimgate::gate::CandidateKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Tier;

/// Exit codes. Usage errors from argument parsing also exit with 2.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const BACKEND: u8 = 4;
    pub const IO: u8 = 5;
}

#[derive(Parser, Debug)]
#[command(
    name = "claimgate",
    version,
    about = "Gated claim rewriting and retrieve-verify evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML settings file. Environment variables and flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Gate threshold in [0, 1].
    #[arg(long, global = true, value_parser = parse_tau)]
    pub tau: Option<f64>,
    /// Claim surface: r0..r5, gated-r4 or gated-r5.
    #[arg(long, global = true, value_parser = parse_surface)]
    pub surface: Option<SurfaceSelector>,
    /// Context turns prepended to the verification hypothesis.
    #[arg(long = "k-turns", global = true)]
    pub k_turns: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub tier: Option<Tier>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// DialFact-format JSONL split.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub subset: Option<SubsetArg>,
}

#[derive(Args, Debug, Clone)]
pub struct SurfaceArgs {
    /// Surfaces produced by `rewrite`; rebuilt in memory when omitted.
    #[arg(long)]
    pub surfaces: Option<PathBuf>,
    /// Gate signals produced by `gate-sweep`; recomputed when omitted.
    #[arg(long)]
    pub signals: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Chunk a corpus and write a BM25 index directory.
    Index {
        /// JSONL with `title` and `text` per line.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Build R0..R5 surfaces for every instance.
    Rewrite {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit the NLI temperature on gold-evidence pairs.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Evaluate a protocol at every threshold of the grid from cached signals.
    GateSweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        surfaces: SurfaceArgs,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fv")]
        protocol: ProtocolArg,
        #[arg(long, value_enum, default_value = "r4")]
        candidate: CandidateArg,
        /// Comma-separated thresholds; defaults to 0.20, 0.25, ..., 1.00.
        #[arg(long, value_delimiter = ',', value_parser = parse_tau)]
        grid: Option<Vec<f64>>,
    },
    /// Retrieval-only evaluation.
    EvalIr {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        surfaces: SurfaceArgs,
        #[arg(long)]
        index: PathBuf,
    },
    /// Verification against gold evidence.
    EvalFv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        surfaces: SurfaceArgs,
    },
    /// Retrieve, then verify against the top passage.
    EvalE2e {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        surfaces: SurfaceArgs,
        #[arg(long)]
        index: PathBuf,
    },
    /// Dataset statistics table.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SubsetArg {
    Factual,
    Personal,
}

impl From<SubsetArg> for Subset {
    fn from(s: SubsetArg) -> Subset {
        match s {
            SubsetArg::Factual => Subset::Factual,
            SubsetArg::Personal => Subset::Personal,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProtocolArg {
    Ir,
    Fv,
    E2e,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Protocol {
        match p {
            ProtocolArg::Ir => Protocol::Ir,
            ProtocolArg::Fv => Protocol::Fv,
            ProtocolArg::E2e => Protocol::E2e,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CandidateArg {
    R4,
    R5,
}

impl From<CandidateArg> for CandidateKind {
    fn from(c: CandidateArg) -> CandidateKind {
        match c {
            CandidateArg::R4 => CandidateKind::R4,
            CandidateArg::R5 => CandidateKind::R5,
        }
    }
}

fn parse_tau(s: &str) -> Result<f64, String> {
    let t: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(format!("tau must lie in [0, 1], got {t}"))
    }
}

fn parse_surface(s: &str) -> Result<SurfaceSelector, String> {
    s.parse()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<claimgate::Error>() {
        Some(e) => match e.category() {
            "config" => exit::CONFIG,
            "data" => exit::DATA,
            "backend" => exit::BACKEND,
            "io" => exit::IO,
            _ => exit::INTERNAL,
        },
        None => exit::INTERNAL,
    }
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        prev = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {}", render(&e));
            ExitCode::from(code)
        }
    }
}
