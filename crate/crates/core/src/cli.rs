//! `ecctlin` command line: train, ber, timing, makecode, gradcheck.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    calibrate, emit, format_sig9, parse_ebno_range, run_attention_timing, run_ber, run_timing, BerConfig, Decoder,
    Format, StopRule, TimingDecoder, TimingReport,
};
use crate::channel::Modulation;
use crate::codes::{load_alist, save_alist, Construction, LinearCode, Protograph};
use crate::gradsuite;
use crate::training::{write_log, TrainConfig, Trainer};
use crate::transformer::{load_model, AttentionKind, ModelConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Calibration points and error target used by `ber`.
const CALIBRATION_EBNO: [f64; 3] = [4.0, 6.0, 8.0];
const CALIBRATION_ERRORS: u64 = 10_000;
const CALIBRATION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(
    name = "ecctlin",
    version,
    about = "Transformer and belief-propagation decoders for LDPC codes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a transformer decoder and write a checkpoint.
    Train(TrainArgs),
    /// Monte Carlo BER/BLER sweep of one decoder.
    Ber(BerArgs),
    /// Wall-clock scaling of decoders with block length.
    Timing(TimingArgs),
    /// Build a parity-check matrix and write it as alist.
    Makecode(MakecodeArgs),
    /// Run the 64-bit finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CodeArgs {
    /// regular, lifted or alist.
    #[arg(long)]
    pub code: Option<String>,
    #[arg(long, default_value_t = 26)]
    pub n: usize,
    /// Variable-node degree.
    #[arg(long, default_value_t = 3)]
    pub v: usize,
    /// Check-node degree.
    #[arg(long, default_value_t = 6)]
    pub c: usize,
    /// Seed of the regular construction.
    #[arg(long, default_value_t = 0)]
    pub code_seed: u64,
    /// Parity-check matrix in alist format.
    #[arg(long)]
    pub alist: Option<PathBuf>,
    /// Protograph file for lifted codes.
    #[arg(long)]
    pub base: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    #[arg(long, default_value = "linear")]
    pub attn: String,
    #[arg(long, default_value_t = 2)]
    pub mask_div: usize,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    /// Training Eb/N0 range `low:high` in dB.
    #[arg(long, default_value = "8:15")]
    pub ebno: String,
    #[arg(long, default_value = "bpsk")]
    pub modulation: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable global-norm gradient clipping.
    #[arg(long)]
    pub no_grad_clip: bool,
    /// Continue from a training checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Per-step CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BerArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    /// `uncoded`, `bp:ITERS` or a checkpoint path.
    #[arg(long)]
    pub decoder: String,
    /// `start:step:stop` in dB.
    #[arg(long, default_value = "4:1:8")]
    pub ebno: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value = "bpsk")]
    pub modulation: String,
    #[arg(long, default_value_t = 100)]
    pub target_errors: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_bits: u64,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    /// Skip the uncoded calibration run.
    #[arg(long)]
    pub no_calibration: bool,
    /// Write zero seconds so that output depends only on the configuration.
    #[arg(long)]
    pub omit_timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct TimingArgs {
    /// Comma-separated: standard, linear, bp:ITERS.
    #[arg(long, default_value = "standard,linear,bp:1")]
    pub decoders: String,
    /// Comma-separated code lengths (or sequence lengths with --attention-only).
    #[arg(long, default_value = "128,256,512,1024")]
    pub sizes: String,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub mask_div: usize,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    /// Time single attention layers with a fixed projected length instead
    /// of whole decoders.
    #[arg(long)]
    pub attention_only: bool,
    #[arg(long, default_value_t = 64)]
    pub proj: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct MakecodeArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

type CliResult = Result<(), String>;

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Ber(a) => ber(a),
        Command::Timing(a) => timing(a),
        Command::Makecode(a) => makecode(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Builds the code named by the flags; `None` when no code flag is given.
pub fn resolve_code(args: &CodeArgs) -> Result<Option<LinearCode>, String> {
    let kind = match (&args.code, &args.alist) {
        (Some(kind), _) => kind.as_str(),
        (None, Some(_)) => "alist",
        (None, None) => return Ok(None),
    };
    let code = match kind {
        "regular" => LinearCode::regular(args.n, args.v, args.c, args.code_seed).map_err(err)?,
        "alist" => {
            let path = args.alist.as_ref().ok_or("--code alist needs --alist FILE")?;
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            LinearCode::from_pcm(load_alist(&text).map_err(err)?, Construction::Imported).map_err(err)?
        }
        "lifted" => {
            let path = args.base.as_ref().ok_or("--code lifted needs --base FILE")?;
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let (base, z) = Protograph::parse(&text).map_err(err)?;
            LinearCode::lifted(&base, z).map_err(err)?
        }
        other => return Err(format!("unknown code kind `{other}` (regular, lifted, alist)")),
    };
    Ok(Some(code))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(bytes).map_err(err),
    }
}

fn parse_range(text: &str) -> Result<(f64, f64), String> {
    let bad = || format!("Eb/N0 range `{text}` is not low:high");
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn train(a: TrainArgs) -> CliResult {
    let mut trainer = match &a.resume {
        Some(path) => Trainer::load(path).map_err(err)?,
        None => {
            let code = resolve_code(&a.code)?.map_or_else(|| LinearCode::regular(26, 3, 6, 0).map_err(err), Ok)?;
            let (ebno_low, ebno_high) = parse_range(&a.ebno)?;
            let cfg = TrainConfig {
                iterations: a.iters,
                batch: a.batch,
                lr: a.lr,
                ebno_low,
                ebno_high,
                seed: a.seed,
                modulation: a.modulation.parse::<Modulation>().map_err(err)?,
                grad_clip: if a.no_grad_clip {
                    None
                } else {
                    TrainConfig::default().grad_clip
                },
                ..TrainConfig::default()
            };
            let model = ModelConfig {
                d_model: a.d_model,
                heads: a.heads,
                blocks: a.blocks,
                mask_div: a.mask_div,
                seed: a.seed,
                ..ModelConfig::new(code.n(), code.m(), a.attn.parse::<AttentionKind>().map_err(err)?)
            };
            Trainer::new(model, code, cfg).map_err(err)?
        }
    };
    let resumed = a.resume.is_some();
    let records = trainer.run().map_err(err)?;
    trainer.save(&a.out).map_err(err)?;
    if let Some(path) = &a.log {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(resumed)
            .write(true)
            .truncate(!resumed)
            .open(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let header = !resumed || file.metadata().map(|m| m.len() == 0).unwrap_or(true);
        write_log(file, &records, header).map_err(err)?;
    }
    if let Some(last) = records.last() {
        eprintln!(
            "trained {} steps: loss {}, batch BER {}",
            trainer.state.step,
            format_sig9(last.loss),
            format_sig9(last.train_ber)
        );
    }
    Ok(())
}

fn ber(a: BerArgs) -> CliResult {
    let format: Format = a.format.parse().map_err(err)?;
    let code = match resolve_code(&a.code)? {
        Some(code) => code,
        None if a.decoder != "uncoded" && !a.decoder.starts_with("bp:") => {
            let model = load_model(Path::new(&a.decoder)).map_err(err)?;
            LinearCode::from_pcm(model.code().clone(), Construction::Imported).map_err(err)?
        }
        None => LinearCode::regular(a.code.n, a.code.v, a.code.c, a.code.code_seed).map_err(err)?,
    };
    let decoder = Decoder::from_spec(&a.decoder, &code).map_err(err)?;
    let cfg = BerConfig {
        ebno_db: parse_ebno_range(&a.ebno).map_err(err)?,
        stop: StopRule {
            target_errors: a.target_errors,
            max_bits: a.max_bits,
            max_seconds: a.max_seconds,
        },
        batch: a.batch,
        seed: a.seed,
        modulation: a.modulation.parse().map_err(err)?,
        omit_timing: a.omit_timing,
    };
    let mut report = run_ber(&decoder, &code, &cfg).map_err(err)?;
    if !a.no_calibration {
        let cal = calibrate(&CALIBRATION_EBNO, CALIBRATION_ERRORS, CALIBRATION_TOLERANCE, a.seed).map_err(err)?;
        if !cal.valid {
            eprintln!("warning: uncoded calibration failed; decoder comparisons are marked invalid");
        }
        report.calibration = Some(cal);
    }
    if !report.monotonicity_violations.is_empty() {
        eprintln!(
            "warning: BER rises by more than 3 standard errors at Eb/N0 {:?} dB",
            report.monotonicity_violations
        );
    }
    emit(&report, format, a.out.as_deref()).map_err(err)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| format!("bad {what} `{s}`")))
        .collect()
}

fn timing_bytes(report: &TimingReport, format: Format) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, report).map_err(err)?;
            out.push(b'\n');
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["decoder", "n", "batch", "repetitions", "median", "q1", "q3"])
                .map_err(err)?;
            for c in &report.cells {
                w.write_record([
                    c.decoder.clone(),
                    c.n.to_string(),
                    c.batch.to_string(),
                    c.repetitions.to_string(),
                    format_sig9(c.median),
                    format_sig9(c.q1),
                    format_sig9(c.q3),
                ])
                .map_err(err)?;
            }
            w.flush().map_err(err)?;
        }
    }
    Ok(out)
}

fn timing(a: TimingArgs) -> CliResult {
    let format: Format = a.format.parse().map_err(err)?;
    let sizes: Vec<usize> = parse_list(&a.sizes, "size")?;
    let report = if a.attention_only {
        let head_dim = a.d_model / a.heads.max(1);
        run_attention_timing(&sizes, a.proj, a.batch, a.heads, head_dim, a.reps, a.seed).map_err(err)?
    } else {
        let decoders: Vec<TimingDecoder> = parse_list(&a.decoders, "decoder")?;
        let model = ModelConfig {
            d_model: a.d_model,
            heads: a.heads,
            blocks: a.blocks,
            mask_div: a.mask_div,
            seed: a.seed,
            ..ModelConfig::new(1, 1, AttentionKind::Standard)
        };
        run_timing(&decoders, &sizes, a.batch, a.reps, &model, a.seed).map_err(err)?
    };
    for (name, slope) in &report.slopes {
        eprintln!("{name}: log-log slope {}", format_sig9(*slope));
    }
    write_output(a.out.as_deref(), &timing_bytes(&report, format)?)
}

fn makecode(a: MakecodeArgs) -> CliResult {
    let code = resolve_code(&a.code)?.ok_or("makecode needs --code (regular, lifted or alist)")?;
    eprintln!(
        "{}: n={} k={} m={}",
        code.spec().describe(),
        code.n(),
        code.k(),
        code.m()
    );
    write_output(a.out.as_deref(), save_alist(code.pcm()).as_bytes())
}

fn gradcheck(a: GradcheckArgs) -> CliResult {
    let results = gradsuite::run_suite(a.seed).map_err(err)?;
    let mut failed = 0;
    for r in &results {
        let status = if r.passes() { "ok" } else { "FAIL" };
        failed += !r.passes() as usize;
        println!(
            "{:<28} max_rel_error {:.3e}  coordinates {:>5}  {status}",
            r.name, r.result.max_rel_error, r.result.coordinates
        );
    }
    if failed > 0 {
        return Err(format!("{failed} gradient checks exceed {:e}", gradsuite::TOLERANCE));
    }
    Ok(())
}
