//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 integrity failure (wrong key,
//! stale key chain or tampered ciphertext), 3 I/O or format error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{self, AnalysisError, BruteforceConfig};
use crate::cipher::{self, CipherError, CipherMessage, GridCell};
use crate::codec::{Block30, CodecError, PrimeSymbol, SymbolBlock};
use crate::container::{self, ContainerError};
use crate::engine::{self, AddSubMatrix, StepAction, TraceStep};
use crate::keyschedule::{self, BaseKey, KeyChain, KeyError, MatrixKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INTEGRITY: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cryptompress", version, about = "Compression-based block cipher with sticky-key hardening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a fresh 128-bit key file.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypt a file.
    Encrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt a cipher file.
    Decrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Append a sticky key and rewrite the ciphertext's SM cells with it.
    Harden {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        cipher: PathBuf,
    },
    /// Render the grids of a cipher file.
    Inspect {
        #[arg(long)]
        cipher: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Show the compression walk of one 30-bit block.
    Trace {
        #[arg(long)]
        key: PathBuf,
        /// Block as hex, e.g. 0x2af738f9.
        #[arg(long, value_parser = parse_block)]
        block: Block30,
        #[arg(long)]
        json: bool,
    },
    /// Measurement tools.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Debug, Subcommand)]
enum Analyze {
    /// Toy known-plaintext key search with and without hardening.
    Bruteforce(BruteforceArgs),
    /// SM event counts for random versus run-heavy blocks.
    Compression(CompressionArgs),
    /// Grid bit changes caused by one flipped plaintext bit.
    Avalanche(AvalancheArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct BruteforceArgs {
    /// Key to attack; a seeded random key when absent.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    restricted_bits: u32,
    #[arg(long, default_value_t = 1000)]
    harden_every: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of paired runs (seeds seed..seed+runs).
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long)]
    max_attempts: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct CompressionArgs {
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that a run-biased symbol repeats its predecessor.
    #[arg(long, default_value_t = 0.8)]
    repeat: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct AvalancheArgs {
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn parse_block(s: &str) -> Result<Block30, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    let value = u32::from_str_radix(digits, 16).map_err(|e| format!("not a hex number: {e}"))?;
    Block30::new(value).map_err(|e| e.to_string())
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: ContainerError },
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("output: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Cipher(e) | Self::Analysis(AnalysisError::Cipher(e)) => cipher_exit_code(e),
            Self::Analysis(_) => EXIT_USAGE,
            Self::Io { .. } | Self::Format { .. } | Self::Key(_) | Self::Output(_) => EXIT_IO,
        }
    }
}

fn cipher_exit_code(e: &CipherError) -> i32 {
    match e {
        CipherError::IntegrityFailure(_)
        | CipherError::RoundCountMismatch { .. }
        | CipherError::IncompleteGrid
        | CipherError::ValueOutOfRange { .. } => EXIT_INTEGRITY,
        CipherError::Codec(CodecError::EmptyInput) => EXIT_USAGE,
        CipherError::Key(_) | CipherError::Codec(_) => EXIT_IO,
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn load_key(path: &Path) -> Result<KeyChain, CliError> {
    container::read_key(&read_file(path)?)
        .map_err(|source| CliError::Format { path: path.to_owned(), source })
}

fn load_cipher(path: &Path) -> Result<CipherMessage, CliError> {
    container::read_cipher(&read_file(path)?)
        .map_err(|source| CliError::Format { path: path.to_owned(), source })
}

fn encode_key(chain: &KeyChain, path: &Path) -> Result<Vec<u8>, CliError> {
    container::write_key(chain).map_err(|source| CliError::Format { path: path.to_owned(), source })
}

fn encode_cipher(message: &CipherMessage, path: &Path) -> Result<Vec<u8>, CliError> {
    container::write_cipher(message).map_err(|source| CliError::Format { path: path.to_owned(), source })
}

/// Writes into a temporary file next to `path`; call `persist` to move it in place.
fn stage(path: &Path, bytes: &[u8]) -> Result<tempfile::NamedTempFile, CliError> {
    let io_err = |source| CliError::Io { path: path.to_owned(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    Ok(tmp)
}

fn persist(tmp: tempfile::NamedTempFile, path: &Path) -> Result<(), CliError> {
    tmp.persist(path).map(drop).map_err(|e| CliError::Io { path: path.to_owned(), source: e.error })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    persist(stage(path, bytes)?, path)
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Keygen { out: path } => {
            let base = keyschedule::generate_key(&mut rand::rngs::OsRng)?;
            write_atomic(&path, &encode_key(&KeyChain::new(base), &path)?)
        }
        Command::Encrypt { key, input, out: path } => {
            let chain = load_key(&key)?;
            let payload = read_file(&input)?;
            if payload.is_empty() {
                return Err(CliError::Usage(format!("{}: nothing to encrypt", input.display())));
            }
            let message = cipher::encrypt_message(&payload, &chain)?;
            write_atomic(&path, &encode_cipher(&message, &path)?)
        }
        Command::Decrypt { key, input, out: path } => {
            let chain = load_key(&key)?;
            let message = load_cipher(&input)?;
            let plain = cipher::decrypt_message(&message, &chain)?;
            write_atomic(&path, &plain)
        }
        Command::Harden { key, cipher: cipher_path } => {
            let chain = load_key(&key)?;
            let message = load_cipher(&cipher_path)?;
            let (hardened, grown) = cipher::harden_message(&message, &chain, &mut rand::rngs::OsRng)?;
            let cipher_tmp = stage(&cipher_path, &encode_cipher(&hardened, &cipher_path)?)?;
            let key_tmp = stage(&key, &encode_key(&grown, &key)?)?;
            persist(cipher_tmp, &cipher_path)?;
            persist(key_tmp, &key)
        }
        Command::Inspect { cipher: path, json } => {
            let message = load_cipher(&path)?;
            if json {
                print_json(out, &InspectJson::new(&message))
            } else {
                out.write_all(render_message(&message).as_bytes())?;
                Ok(())
            }
        }
        Command::Trace { key, block, json } => {
            let chain = load_key(&key)?;
            let trace = BlockTrace::new(block, &chain.base.add_sub_matrix());
            if json {
                print_json(out, &trace)
            } else {
                out.write_all(trace.render().as_bytes())?;
                Ok(())
            }
        }
        Command::Analyze(tool) => analyze(tool, out),
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn chain_or_seeded(path: Option<&Path>, seed: u64) -> Result<KeyChain, CliError> {
    match path {
        Some(p) => load_key(p),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(KeyChain::new(keyschedule::generate_key(&mut rng)?))
        }
    }
}

#[derive(Serialize)]
struct PairedAttack {
    seed: u64,
    baseline: analysis::AttackReport,
    hardened: analysis::AttackReport,
}

#[derive(Serialize)]
struct CompressionComparison {
    samples: usize,
    repeat: f64,
    random_mean_events: f64,
    biased_mean_events: f64,
    random_mean_bits: f64,
    biased_mean_bits: f64,
}

fn analyze(tool: Analyze, out: &mut dyn Write) -> Result<(), CliError> {
    match tool {
        Analyze::Bruteforce(args) => {
            let mut results = Vec::new();
            for seed in args.seed..args.seed + args.runs {
                let chain = chain_or_seeded(args.key.as_deref(), seed)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let grid = cipher::encrypt_block(analysis::random_block(&mut rng), &chain)?;
                let mut config = BruteforceConfig::new(args.restricted_bits, 0, seed);
                config.max_attempts = args.max_attempts;
                let baseline = analysis::bruteforce_demo(&grid, &chain, &config)?;
                config.harden_every = args.harden_every;
                let hardened = analysis::bruteforce_demo(&grid, &chain, &config)?;
                results.push(PairedAttack { seed, baseline, hardened });
            }
            match args.format {
                Format::Json => print_json(out, &results),
                Format::Csv => {
                    writeln!(out, "seed,run,keyspace_bits,attempts,failures,integrity_rejections,hardenings,elapsed_s,success")?;
                    for r in &results {
                        for (name, a) in [("baseline", &r.baseline), ("hardened", &r.hardened)] {
                            writeln!(
                                out,
                                "{},{},{},{},{},{},{},{:.6},{}",
                                r.seed,
                                name,
                                a.keyspace_bits,
                                a.attempts_made,
                                a.failures,
                                a.integrity_rejections,
                                a.hardenings_triggered,
                                a.elapsed.as_secs_f64(),
                                a.success
                            )?;
                        }
                    }
                    Ok(())
                }
            }
        }
        Analyze::Compression(args) => {
            if !(0.0..=1.0).contains(&args.repeat) {
                return Err(CliError::Usage("--repeat must be within 0..=1".into()));
            }
            let asm = chain_or_seeded(args.key.as_deref(), args.seed)?.base.add_sub_matrix();
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let random: Vec<_> = (0..args.samples).map(|_| analysis::random_block(&mut rng)).collect();
            let biased: Vec<_> =
                (0..args.samples).map(|_| analysis::run_biased_block(&mut rng, args.repeat)).collect();
            let r = analysis::compression_stats(&random, &asm);
            let b = analysis::compression_stats(&biased, &asm);
            match args.format {
                Format::Json => print_json(
                    out,
                    &CompressionComparison {
                        samples: args.samples,
                        repeat: args.repeat,
                        random_mean_events: r.mean_sm_events,
                        biased_mean_events: b.mean_sm_events,
                        random_mean_bits: r.mean_compressed_bits,
                        biased_mean_bits: b.mean_compressed_bits,
                    },
                ),
                Format::Csv => {
                    writeln!(out, "source,block,sm_events,compressed_bits,ratio")?;
                    for (name, report) in [("random", &r), ("biased", &b)] {
                        for e in &report.entries {
                            writeln!(
                                out,
                                "{name},{:#010x},{},{},{:.4}",
                                e.block, e.sm_events, e.compressed_bits, e.ratio
                            )?;
                        }
                    }
                    Ok(())
                }
            }
        }
        Analyze::Avalanche(args) => {
            let chain = chain_or_seeded(args.key.as_deref(), args.seed)?;
            let s = analysis::avalanche_test(&chain, args.samples, args.seed)?;
            match args.format {
                Format::Json => print_json(out, &s),
                Format::Csv => {
                    writeln!(out, "samples,mean,std_dev,min,max,mean_fraction")?;
                    writeln!(
                        out,
                        "{},{:.4},{:.4},{},{},{:.4}",
                        s.samples, s.mean, s.std_dev, s.min, s.max, s.mean_fraction
                    )?;
                    Ok(())
                }
            }
        }
    }
}

#[derive(Serialize)]
struct InspectJson<'a> {
    sticky_rounds: usize,
    tail_bits: u8,
    grids: &'a [cipher::CipherGrid],
}

impl<'a> InspectJson<'a> {
    fn new(message: &'a CipherMessage) -> Self {
        Self { sticky_rounds: message.sticky_rounds, tail_bits: message.tail_bits, grids: &message.grids }
    }
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", parts.join(" | ").trim_end());
    };
    line(&mut s, &mut header.iter().copied());
    let _ = writeln!(s, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    for row in rows {
        line(&mut s, &mut row.iter().map(String::as_str));
    }
    s
}

fn render_message(message: &CipherMessage) -> String {
    let mut s = format!(
        "blocks: {}  sticky rounds: {}  tail bits: {}\n",
        message.grids.len(),
        message.sticky_rounds,
        message.tail_bits
    );
    let mut header = vec!["Order"];
    header.extend(MatrixKind::ALL.iter().map(|k| k.label()));
    for (i, grid) in message.grids.iter().enumerate() {
        let rows: Vec<Vec<String>> = grid
            .cells
            .iter()
            .zip(grid.orders)
            .map(|(cells, order)| {
                std::iter::once(format!("{order:04b}")).chain(cells.iter().map(GridCell::to_string)).collect()
            })
            .collect();
        let _ = write!(s, "\nblock {i}\n{}", render_table(&header, &rows));
    }
    s
}

#[derive(Serialize)]
struct AsmRowJson {
    target: PrimeSymbol,
    order: String,
    deltas: [Option<i32>; 4],
}

/// Everything `trace` shows for one block.
#[derive(Serialize)]
struct BlockTrace {
    block: String,
    symbols: Vec<i32>,
    asm: Vec<AsmRowJson>,
    steps: Vec<TraceStep>,
    compressed: engine::CompressedBlock,
}

impl BlockTrace {
    fn new(block: Block30, asm: &AddSubMatrix) -> Self {
        let symbols = SymbolBlock::from_block(block);
        let mut steps = Vec::new();
        let compressed = engine::compress_block_with(&symbols, asm, |s| steps.push(s.clone()));
        let asm_rows = PrimeSymbol::ALL
            .iter()
            .map(|&t| AsmRowJson {
                target: t,
                order: format!("{:04b}", asm.orders()[t.index()]),
                deltas: PrimeSymbol::ALL.map(|c| asm.sign(t, c)),
            })
            .collect();
        Self {
            block: format!("{block:#010x}"),
            symbols: symbols.values().to_vec(),
            asm: asm_rows,
            steps,
            compressed,
        }
    }

    fn render(&self) -> String {
        let mut s = String::from("Add-Sub Matrix\n");
        let asm_rows: Vec<Vec<String>> = self
            .asm
            .iter()
            .map(|r| {
                let mut row = vec![r.order.clone(), r.target.to_string()];
                row.extend(r.deltas.iter().map(|d| d.map_or("X".into(), |d| format!("{d:+}"))));
                row
            })
            .collect();
        s += &render_table(&["Order", "Target", "2", "3", "5", "7"], &asm_rows);

        let symbols: Vec<String> = self.symbols.iter().map(i32::to_string).collect();
        let _ = writeln!(s, "\nBlock {}\n      {}\n\nCompression sequence", self.block, symbols.join(" "));
        for (i, step) in self.steps.iter().enumerate() {
            let last = self.steps.get(i + 1).is_none_or(|n| n.target != step.target);
            let row: Vec<String> = step
                .row
                .iter()
                .enumerate()
                .map(|(j, v)| if j == step.cursor { format!("[{v}]") } else { v.to_string() })
                .collect();
            let action = match step.action {
                StepAction::Absorb { run } => format!("absorb x{run}"),
                StepAction::Cross { crossed, delta } => format!("cross {crossed} {delta:+}"),
            };
            let _ = writeln!(
                s,
                "{:<6}{:<12}{}{}",
                format!("{}.{}", step.target, step.seq),
                action,
                row.join(" "),
                if last { "   <- RM" } else { "" }
            );
        }

        let cb = &self.compressed;
        let rows: Vec<Vec<String>> = PrimeSymbol::ALL
            .iter()
            .enumerate()
            .map(|(slot, &p)| {
                let sm: Vec<String> =
                    cb.sm.events(p).iter().map(|e| format!("{}|{}", e.seq, e.redundant)).collect();
                vec![
                    p.to_string(),
                    sm.join(" ; "),
                    cb.rm.outcome(p).map_or(String::new(), |v| v.to_string()),
                    cb.tm.0[slot].map_or(String::new(), |e| format!("{}|{}", e.prime, e.last_seq)),
                ]
            })
            .collect();
        s += "\nSM, RM and TM\n";
        s += &render_table(&["Target", "SM", "RM", "TM"], &rows);
        s
    }
}

/// Step values of the walk in order, as printed by `trace`.
pub fn trace_values(block: Block30, base: BaseKey) -> Vec<i32> {
    BlockTrace::new(block, &base.add_sub_matrix()).steps.iter().map(|s| s.value).collect()
}
