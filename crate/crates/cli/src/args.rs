use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "suc",
    version,
    about = "Secret Unknown Ciphers from random maximum-period NLFSRs"
)]
pub struct Cli {
    /// Feedback catalog (TSV). The builtin catalog is used when absent.
    #[arg(long, global = true, env = "SUC_CATALOG")]
    pub catalog: Option<PathBuf>,

    /// 32-byte hex seed; makes every command deterministic.
    #[arg(long, global = true, value_parser = parse_seed)]
    pub seed: Option<[u8; 32]>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_seed(s: &str) -> Result<[u8; 32], String> {
    hex::decode(s)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| "seed must be 64 hex digits".to_string())
}

pub fn parse_sn(s: &str) -> Result<[u8; 16], String> {
    hex::decode(s)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| "serial number must be 32 hex digits".to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Feedback catalog maintenance.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Boolean function analysis.
    #[command(subcommand)]
    Bf(BfCmd),
    /// Create and drive SUC instances stored as blobs.
    #[command(subcommand)]
    Suc(SucCmd),
    /// Print keystream bits of a stored instance without advancing it.
    Keystream(KeystreamArgs),
    /// Measurement tools for toy and full generators.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Security bounds of the 16-register generator, computed from the catalog.
    Bounds,
    /// Trusted authority side of the protocols.
    #[command(subcommand)]
    Ta(TaCmd),
    /// Device side of the protocols.
    #[command(subcommand)]
    Device(DeviceCmd),
}

#[derive(Debug, Subcommand)]
pub enum CatalogCmd {
    /// Exhaustively checks the period of every spec in all four forms.
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Builtin {
    #[value(name = "F16")]
    F16,
}

#[derive(Debug, Subcommand)]
pub enum BfCmd {
    /// Balancedness, degree, correlation immunity, nonlinearity, algebraic immunity.
    Profile {
        #[arg(long, value_enum, conflicts_with_all = ["anf", "truth_table"])]
        builtin: Option<Builtin>,
        /// ANF in term notation, e.g. "1,(2,3)".
        #[arg(long, requires = "vars")]
        anf: Option<String>,
        /// Truth table as little-endian hex.
        #[arg(long, requires = "vars", conflicts_with = "anf")]
        truth_table: Option<String>,
        #[arg(long)]
        vars: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SucCmd {
    /// Runs GENIE once and writes the instance blob.
    Create {
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Produces the next responses and stores the advanced instance.
    Respond {
        #[arg(long)]
        blob: PathBuf,
        #[arg(short, long, default_value_t = 128)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Leave the blob untouched.
        #[arg(long)]
        dry_run: bool,
    },
    /// Public facts about a blob.
    Info {
        #[arg(long)]
        blob: PathBuf,
        /// Also print the selected feedback functions.
        #[arg(long)]
        reveal: bool,
    },
}

#[derive(Debug, Args)]
pub struct KeystreamArgs {
    #[arg(long)]
    pub blob: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub bits: usize,
    /// Write the bits as '0'/'1' text to this file instead of printing hex.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Linear complexity of a bit file.
    Bm(BitInput),
    /// Keystream vs register-subset correlation on a seeded full generator.
    Correlation {
        #[arg(long, default_value_t = 1_000_000)]
        bits: usize,
        #[arg(long, default_value_t = 8)]
        max_order: u32,
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
        /// Also report this subset (hex mask, bit i = register i+1).
        #[arg(long, value_parser = parse_mask)]
        mask: Option<u64>,
    },
    /// Period-shift parity cascade.
    Parity {
        /// Register lengths; periods are 2^N - 1.
        #[arg(long, value_delimiter = ',', conflicts_with = "periods")]
        lengths: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        periods: Vec<usize>,
        #[command(flatten)]
        input: OptionalBitInput,
    },
    /// Exhaustive initial-state recovery for a toy generator.
    Recover {
        /// Register spec "N:form:rff", once per register.
        #[arg(long = "register", required = true)]
        registers: Vec<String>,
        /// Combiner ANF over the registers.
        #[arg(long)]
        combiner: String,
        #[command(flatten)]
        input: BitInput,
    },
}

fn parse_mask(s: &str) -> Result<u64, String> {
    u64::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct BitInput {
    /// Bits as '0'/'1' characters (whitespace ignored), or raw bytes with --binary.
    #[arg(long)]
    pub input: PathBuf,
    /// Read the input as bytes, most significant bit first.
    #[arg(long)]
    pub binary: bool,
    /// Use only the first this many bits.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OptionalBitInput {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// UIR store (JSON lines).
    #[arg(long)]
    pub store: PathBuf,
    /// Device file.
    #[arg(long)]
    pub device: PathBuf,
    /// Seconds to wait for each message.
    #[arg(long, default_value_t = 10)]
    pub timeout: u64,
}

#[derive(Debug, Subcommand)]
pub enum TaCmd {
    /// Serves sessions over TCP.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: SocketAddr,
        /// Stop after this many connections.
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(short, long, default_value_t = 128)]
        k: usize,
        #[arg(short, long, default_value_t = 16)]
        t: usize,
        #[arg(long, default_value_t = 10)]
        timeout: u64,
    },
    /// Enrolls a local device over the trusted in-process channel.
    Enroll {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(short, long, default_value_t = 128)]
        k: usize,
        #[arg(short, long, default_value_t = 16)]
        t: usize,
    },
    /// Identifies a local device in-process.
    Identify {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Refreshes a local device's responses in-process.
    Update {
        #[command(flatten)]
        session: SessionArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Op {
    Enroll,
    Identify,
    Update,
}

#[derive(Debug, Subcommand)]
pub enum DeviceCmd {
    /// Creates a device file holding a fresh SUC instance.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_sn)]
        sn: [u8; 16],
        #[arg(long)]
        force: bool,
    },
    /// Runs one session against a TA over TCP.
    Run {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        connect: SocketAddr,
        #[arg(long, value_enum)]
        op: Op,
        #[arg(long, default_value_t = 10)]
        timeout: u64,
    },
}
