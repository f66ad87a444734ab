//! `biff`: protect files with Biff code patches, repair them, and run the
//! randomized experiments.
//!
//! Exit status: 0 on success, 1 on I/O or parameter errors, 2 on usage
//! errors, 3 when a decode only partially recovered the file.

mod symbols;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use biff_core::analysis::{biff_overhead_factor, cached_threshold, size_table};
use biff_core::codec::patch_len;
use biff_core::experiment::{self, ExperimentConfig, ExperimentKind, ExperimentSummary};
use biff_core::{decode, encode, ChecksumFlavor, CodecParams, DecodeReport, Patch, TimingMode};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Slack over the peeling threshold below which sizing warns.
const SLACK_MARGIN: f64 = 0.02;

const EXIT_ERROR: u8 = 1;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "biff", version, about = "Error correction for large files with Biff codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a patch for a file.
    Encode(EncodeArgs),
    /// Repair a file with its patch.
    Decode(DecodeArgs),
    /// Cells and patch size needed for a number of errors.
    Sizing(SizingArgs),
    /// Run randomized encode/corrupt/decode trials.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args)]
struct TableArgs {
    /// Bits per message symbol.
    #[arg(long, default_value_t = 32)]
    symbol_bits: u32,
    /// Hash functions (one subtable each).
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Total cells; rounded up to a multiple of k.
    #[arg(long)]
    cells: Option<usize>,
    /// Symbol errors to size the table for when --cells is not given.
    #[arg(long)]
    errors: Option<u64>,
    /// Cells per stored pair when sizing from --errors.
    #[arg(long, default_value_t = 1.35)]
    slack: f64,
    #[arg(long, default_value = "hash")]
    checksum: ChecksumFlavor,
    #[arg(long, default_value_t = 32)]
    checksum_bits: u32,
    #[arg(long, env = "BIFF_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EncodeArgs {
    input: PathBuf,
    /// Where to write the patch.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    table: TableArgs,
}

#[derive(Args)]
struct DecodeArgs {
    /// The possibly corrupted file.
    input: PathBuf,
    #[arg(short, long)]
    patch: PathBuf,
    /// Where to write the repaired file.
    #[arg(short, long)]
    output: PathBuf,
    /// Write the correction list here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Fail unless the patch uses this symbol width.
    #[arg(long)]
    symbol_bits: Option<u32>,
    /// Fail unless the patch uses this many hash functions.
    #[arg(long)]
    k: Option<usize>,
    /// Fail unless the patch has this many cells.
    #[arg(long)]
    cells: Option<usize>,
    /// Fail unless the patch was built with this seed.
    #[arg(long, env = "BIFF_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct SizingArgs {
    #[arg(long)]
    errors: u64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 1.35)]
    slack: f64,
    /// Bits per symbol, for the patch size.
    #[arg(long, default_value_t = 20)]
    symbol_bits: u32,
    /// Message length in symbols, for the patch size.
    #[arg(long, default_value_t = 1_000_000)]
    symbols: u64,
    #[arg(long, default_value_t = 32)]
    checksum_bits: u32,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value = "threshold")]
    kind: ExperimentKind,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Message length in symbols.
    #[arg(long)]
    symbols: Option<usize>,
    #[arg(long)]
    symbol_bits: Option<u32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    cells: Option<usize>,
    /// Size the table from --errors and this slack instead of --cells.
    #[arg(long)]
    slack: Option<f64>,
    /// Uniform symbol errors per trial.
    #[arg(long)]
    errors: Option<usize>,
    #[arg(long)]
    burst_len: Option<usize>,
    #[arg(long)]
    burst_count: Option<usize>,
    /// Patch cells randomized per trial.
    #[arg(long)]
    cell_errors: Option<usize>,
    #[arg(long)]
    checksum: Option<ChecksumFlavor>,
    #[arg(long)]
    checksum_bits: Option<u32>,
    /// Base seed; trial t uses seed + t.
    #[arg(long, env = "BIFF_SEED", default_value_t = 0)]
    seed: u64,
    /// with-hash or synthetic.
    #[arg(long)]
    timing_mode: Option<TimingMode>,
    /// Run trials one after another on the calling thread.
    #[arg(long)]
    single_thread: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write rows here instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Sizing(args) => cmd_sizing(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn output_sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(io::BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn write_rows<T: Serialize>(rows: &[T], format: Format, sink: Box<dyn Write>) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut sink = sink;
            for row in rows {
                serde_json::to_writer(&mut sink, row)?;
                sink.write_all(b"\n")?;
            }
            sink.flush()?;
        }
    }
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> Result<ExitCode> {
    let t = &args.table;
    let bytes = read(&args.input)?;
    let n = symbols::symbol_count(bytes.len(), t.symbol_bits.clamp(1, 63));
    let cells = match (t.cells, t.errors) {
        // Nothing to protect: the patch is a bare header.
        _ if n == 0 => 0,
        (Some(cells), _) => cells,
        (None, Some(0)) => bail!("--errors 0 needs no table; pass --cells to build one anyway"),
        (None, Some(e)) => size_table(e, t.k, t.slack)?,
        (None, None) => bail!("give --cells or --errors"),
    };
    let mut params = CodecParams::new(n as u64, t.symbol_bits, t.k, cells)
        .with_seed(t.seed)
        .with_checksum(t.checksum, t.checksum_bits);
    if n == 0 {
        params.cells = 0;
    }
    params.validate()?;

    let message = symbols::to_symbols(&bytes, t.symbol_bits);
    let table = encode(&message, &params)?;
    let patch = Patch::new(params, table).with_byte_len(bytes.len() as u64);
    let out = patch.to_bytes()?;
    write(&args.output, &out)?;

    eprintln!("symbols      {n} x {} bits", params.symbol_bits);
    eprintln!("cells        {} (k = {})", params.cells, params.k);
    eprintln!("patch bytes  {}", out.len());
    if let Some(e) = t.errors.filter(|&e| e > 0) {
        let f = biff_overhead_factor(&params, e);
        eprintln!(
            "overhead     {:.2}x serialized, {:.2}x cell bits, {:.2}x without positions (per {e} errors)",
            f.serialized, f.cell_bits, f.excluding_positions
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CorrectionRow {
    position: u64,
    old: u64,
    new: u64,
}

fn cmd_decode(args: DecodeArgs) -> Result<ExitCode> {
    let patch = Patch::from_bytes(&read(&args.patch)?).context("reading patch")?;
    let params = patch.params;
    let expect = [
        ("symbol width", args.symbol_bits.map(u64::from), params.symbol_bits as u64),
        ("k", args.k.map(|k| k as u64), params.k as u64),
        ("cells", args.cells.map(|c| c as u64), params.cells as u64),
        ("seed", args.seed, params.seed),
    ];
    for (name, wanted, actual) in expect {
        if let Some(wanted) = wanted.filter(|&w| w != actual) {
            bail!("patch {name} is {actual}, expected {wanted}");
        }
    }

    let bytes = read(&args.input)?;
    if bytes.len() as u64 != patch.byte_len {
        bail!("input is {} bytes but the patch protects {} bytes", bytes.len(), patch.byte_len);
    }
    let received = symbols::to_symbols(&bytes, params.symbol_bits);
    let (repaired, report) = decode(&received, &patch.table, &params)?;
    write(&args.output, &symbols::to_bytes(&repaired, params.symbol_bits, bytes.len()))?;

    let rows: Vec<CorrectionRow> = report
        .corrections
        .iter()
        .map(|c| CorrectionRow { position: c.position, old: c.old.unwrap_or(0), new: c.new })
        .collect();
    write_rows(&rows, args.format, output_sink(args.report.as_deref())?)?;
    print_decode_summary(&report);
    Ok(if report.success { ExitCode::SUCCESS } else { ExitCode::from(EXIT_PARTIAL) })
}

fn print_decode_summary(report: &DecodeReport) {
    eprintln!("corrections  {}", report.corrections.len());
    eprintln!("residual     {} cells", report.residual_cells);
    eprintln!("anomalies    {}", report.anomalies);
    eprintln!("status       {}", if report.success { "success" } else { "partial" });
}

fn cmd_sizing(args: SizingArgs) -> Result<ExitCode> {
    let c_k = cached_threshold(args.k)?;
    println!("errors       {}", args.errors);
    println!("k            {}", args.k);
    println!("slack        {}", args.slack);
    println!("threshold    {c_k:.4}");
    if args.errors == 0 {
        eprintln!("warning: zero errors needs no table; the channel must be error-free");
        println!("cells        0");
        return Ok(ExitCode::SUCCESS);
    }
    let cells = size_table(args.errors, args.k, args.slack)?;
    if args.slack < c_k + SLACK_MARGIN {
        eprintln!(
            "warning: slack {} is within {SLACK_MARGIN} of the threshold {c_k:.4}; expect frequent failures at finite sizes",
            args.slack
        );
    }
    let params = CodecParams::new(args.symbols, args.symbol_bits, args.k, cells)
        .with_checksum(ChecksumFlavor::Hash, args.checksum_bits);
    params.validate()?;
    let f = biff_overhead_factor(&params, args.errors);
    println!("cells        {cells}");
    println!("patch bytes  {}", patch_len(&params));
    println!("overhead     {:.3}", f.serialized);
    println!("cell bits    {:.3}", f.cell_bits);
    println!("no positions {:.3}", f.excluding_positions);
    Ok(ExitCode::SUCCESS)
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::standard(args.kind);
    cfg.trials = args.trials;
    cfg.base_seed = args.seed;
    cfg.single_thread |= args.single_thread;
    if let Some(v) = args.symbols {
        cfg.message_len = v;
    }
    if let Some(v) = args.symbol_bits {
        cfg.symbol_bits = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.errors {
        cfg.errors = v;
    }
    if let Some(v) = args.burst_len {
        cfg.burst_len = v;
    }
    if let Some(v) = args.burst_count {
        cfg.burst_count = v;
    }
    if let Some(v) = args.cell_errors {
        cfg.cell_errors = v;
    }
    if let Some(v) = args.checksum {
        cfg.flavor = v;
    }
    if let Some(v) = args.checksum_bits {
        cfg.checksum_bits = v;
    }
    if let Some(v) = args.timing_mode {
        cfg.timing_mode = v;
    }
    match (args.cells, args.slack) {
        (Some(_), Some(_)) => bail!("--cells and --slack are mutually exclusive"),
        (Some(cells), None) => cfg.cells = biff_core::codec::round_up_cells(cells, cfg.k),
        (None, Some(slack)) => cfg.cells = size_table(cfg.symbol_errors() as u64, cfg.k, slack)?,
        (None, None) if args.k.is_some() => cfg.cells = biff_core::codec::round_up_cells(cfg.cells, cfg.k),
        (None, None) => {}
    }
    Ok(cfg)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode> {
    let cfg = experiment_config(&args)?;
    let report = experiment::run(&cfg)?;
    write_rows(&report.rows, args.format, output_sink(args.output.as_deref())?)?;
    print_experiment_summary(&cfg, &report.summary);
    Ok(ExitCode::SUCCESS)
}

fn print_experiment_summary(cfg: &ExperimentConfig, s: &ExperimentSummary) {
    eprintln!(
        "{:?}: n = {}, w = {}, k = {}, m = {}, {} symbol errors, {} cell errors, seeds {}..",
        cfg.kind,
        cfg.message_len,
        cfg.symbol_bits,
        cfg.k,
        cfg.cells,
        cfg.symbol_errors(),
        cfg.cell_errors,
        cfg.base_seed
    );
    eprintln!("trials       {}", s.trials);
    eprintln!("recovered    {} ({:.4})", s.recovered, s.recovery_rate);
    eprintln!("failures     {} ({} left one symbol wrong)", s.failures, s.single_symbol_failures);
    eprintln!("decoder ok   {}", s.decoder_success);
    eprintln!("miscorrect   {}", s.miscorrections);
    if cfg.cell_errors > 0 {
        eprintln!(
            "model        {:.3} expected failures, 99% interval [{}, {}]",
            s.expected_failures, s.failure_interval.0, s.failure_interval.1
        );
    }
    for (name, t) in [("stage 1", s.stage1), ("stage 2", s.stage2)] {
        if let Some(t) = t {
            eprintln!("{name}      mean {:.3} ms, p50 {:.3} ms, p95 {:.3} ms", t.mean_ms, t.p50_ms, t.p95_ms);
        }
    }
}
