//! `selfavg`: table builds, envelopes, period scans, simulation and
//! verification suites for self-averaging sequences.

mod manifest;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use selfavg::engine::{build_table_with, NativeDump, SequenceTable, TableData, TableFormat};
use selfavg::envelope::{
    contraction_constants, default_x0s, envelope_at, envelope_curve, scan_period, scan_periods,
    ContractionConstants, EnvelopeResult, ScanOptions, DEFAULT_K,
};
use selfavg::kernels::KernelName;
use selfavg::simulator::{estimate_p, TrialConfig};
use selfavg::PrecisionConfig;

use manifest::Recorder;

/// Environment variable giving the directory for relative output paths.
pub const OUT_DIR_ENV: &str = "SELFAVG_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "selfavg",
    version,
    about = "Self-averaging sequences: exact tables and non-convergence certificates"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the table p(0..=n_max) for a kernel.
    Table(TableArgs),
    /// Envelope l(x), u(x) at a point or over a range.
    Envelope(EnvelopeArgs),
    /// Bracket liminf and limsup from periods [x0, x0/alpha].
    Scan(ScanArgs),
    /// Monte Carlo estimate of p(n).
    Simulate(SimulateArgs),
    /// Run verification suites.
    Verify(verify::VerifyArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OutFormat {
    Json,
    Csv,
    Native,
}

#[derive(Args, Debug, Serialize)]
struct TableArgs {
    #[arg(long, default_value = "roulette")]
    kernel: KernelName,
    #[arg(long)]
    n_max: u64,
    /// Accuracy target and stored precision of the values.
    #[arg(long, default_value_t = 256)]
    precision_bits: u32,
    /// Escalation ceiling for the working precision.
    #[arg(long, default_value_t = 4096)]
    max_bits: u32,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the extension of --out, else json.
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
    /// Native dump to resume from and to refresh while building.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    checkpoint_every: u64,
}

#[derive(Args, Debug, Serialize)]
struct EnvelopeArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, conflicts_with = "x_range")]
    x: Option<f64>,
    /// Curve over [A, B].
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    x_range: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long = "K", default_value_t = DEFAULT_K)]
    k: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
}

#[derive(Args, Debug, Serialize)]
struct ScanArgs {
    #[arg(long)]
    table: PathBuf,
    /// Start of a single period; several starts are scanned and merged when omitted.
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    /// One or more values; each bound keeps the sharpest result.
    #[arg(long = "K", num_args = 1.., default_values_t = [DEFAULT_K])]
    k: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "roulette")]
    kernel: KernelName,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    batch_size: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV histograms of absorption states and round counts.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

/// A failed verification; maps to exit code 4.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 4;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<selfavg::Error>() {
            use selfavg::Error as E;
            return match e {
                E::Domain(_)
                | E::PrecisionExhausted { .. }
                | E::WindowRange { .. }
                | E::InfeasibleK { .. }
                | E::SearchFailed(_)
                | E::PushforwardLimit { .. } => 3,
                E::UnknownKernel(_) | E::Config(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Table(a) => cmd_table(a),
        Command::Envelope(a) => cmd_envelope(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => verify::cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Resolves relative output paths against `$SELFAVG_OUT_DIR` when set.
pub fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => PathBuf::from(dir).join(p),
        _ => p.to_path_buf(),
    }
}

/// Writes `text` to `path` (via a temporary file and rename) or to stdout.
pub fn emit(path: Option<&Path>, text: &str) -> Result<Option<PathBuf>> {
    match path {
        None => {
            print!("{text}");
            Ok(None)
        }
        Some(p) => {
            let p = out_path(p);
            write_atomic(&p, text.as_bytes())?;
            Ok(Some(p))
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", path.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<TableData> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    TableData::parse(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn format_for(explicit: Option<OutFormat>, out: Option<&Path>) -> OutFormat {
    explicit.unwrap_or_else(|| match out.map(TableFormat::from_path) {
        Some(TableFormat::Csv) => OutFormat::Csv,
        Some(TableFormat::Native) => OutFormat::Native,
        _ => OutFormat::Json,
    })
}

pub fn constants_for(kernel: &str, k: f64) -> Result<ContractionConstants> {
    let drift = match kernel.parse::<KernelName>() {
        Ok(name) => name
            .kernel()
            .drift()
            .context("kernel has no drift parameters")?,
        Err(_) => bail!(selfavg::Error::UnknownKernel(kernel.to_string())),
    };
    Ok(contraction_constants(&drift, k)?)
}

fn cmd_table(a: TableArgs) -> Result<()> {
    let rec = Recorder::new("table", &a);
    let kernel = a.kernel.kernel();
    let config = PrecisionConfig::default()
        .with_initial_bits(a.precision_bits)
        .with_max_bits(a.max_bits);
    config.validate()?;

    let checkpoint = a.checkpoint.as_deref().map(out_path);
    let resume = match &checkpoint {
        Some(p) if p.exists() => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let t = NativeDump::from_json(&bytes)?.into_table()?;
            eprintln!("resuming {} from n = {}", p.display(), t.len());
            Some(t)
        }
        _ => None,
    };
    let every = if checkpoint.is_some() {
        a.checkpoint_every
    } else {
        0
    };
    let table = build_table_with(
        kernel.as_ref(),
        a.n_max,
        &config,
        resume,
        every,
        |t: &SequenceTable| {
            if let Some(p) = &checkpoint {
                let dump = NativeDump::from(t).to_json()?;
                write_atomic(p, dump.as_bytes())
                    .map_err(|e| selfavg::Error::Io(std::io::Error::other(e.to_string())))?;
                eprintln!("checkpoint: n = {}", t.len() - 1);
            }
            Ok(())
        },
    )?;

    let fmt = format_for(a.format, a.out.as_deref());
    let text = match fmt {
        OutFormat::Json => TableData::from(&table).to_json()?,
        OutFormat::Csv => TableData::from(&table).to_csv()?,
        OutFormat::Native => NativeDump::from(&table).to_json()?,
    };
    let written = emit(a.out.as_deref(), &text)?;
    if !table.support_violations.is_empty() {
        eprintln!(
            "note: {} rows put mass on Y(n) = n (first at n = {}); handled as self-loops",
            table.support_violations.len(),
            table.support_violations[0]
        );
    }
    if let Some(p) = written {
        eprintln!(
            "wrote {} (n_max = {}, residual_max = {:e})",
            p.display(),
            table.n_max,
            table.residual_max()
        );
        rec.finish(&[p])?;
    } else {
        drop(rec);
    }
    Ok(())
}

fn envelope_csv(rows: &[EnvelopeResult]) -> String {
    let mut s = String::from("x,t,M,l,u\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.x),
            fmt_f64(r.t),
            r.m,
            fmt_f64(r.lower),
            fmt_f64(r.upper)
        ));
    }
    s
}

pub fn fmt_f64(v: f64) -> String {
    selfavg::engine::io::format_f64(v)
}

fn cmd_envelope(a: EnvelopeArgs) -> Result<()> {
    let mut rec = Recorder::new("envelope", &a);
    rec.input(&a.table);
    let table = read_table(&a.table)?;
    let consts = constants_for(&table.kernel, a.k)?;
    let rows = match (&a.x, &a.x_range) {
        (Some(x), None) => vec![envelope_at(*x, &table, &consts)?],
        (None, Some(r)) => envelope_curve(r[0], r[1], a.step, &table, &consts)?,
        _ => bail!(selfavg::Error::Config("give --x or --x-range".into())),
    };
    let fmt = format_for(a.format, a.out.as_deref());
    let text = match fmt {
        OutFormat::Csv => envelope_csv(&rows),
        _ => serde_json::to_string_pretty(&rows)? + "\n",
    };
    if let Some(p) = emit(a.out.as_deref(), &text)? {
        rec.finish(&[p])?;
    }
    Ok(())
}

fn cmd_scan(a: ScanArgs) -> Result<()> {
    let mut rec = Recorder::new("scan", &a);
    rec.input(&a.table);
    let table = read_table(&a.table)?;
    let consts = constants_for(&table.kernel, a.k[0])?;
    let options = ScanOptions {
        grid_step: a.grid_step,
        k_values: a.k.clone(),
    };
    let r = match a.x0 {
        Some(x0) => scan_period(x0, &table, &consts, &options)?,
        None => scan_periods(&default_x0s(&table, &consts)?, &table, &consts, &options)?,
    };
    println!("kernel        {}", r.kernel);
    if r.periods.len() > 1 {
        println!(
            "periods       {} starts in [{:.1}, {:.1}]",
            r.periods.len(),
            r.periods[0],
            r.periods[r.periods.len() - 1]
        );
    } else {
        println!("period        [{}, {}]", fmt_f64(r.x0), fmt_f64(r.x1));
    }
    println!(
        "liminf in     [{:.6}, {:.6}]",
        r.liminf_lower, r.liminf_upper
    );
    println!(
        "limsup in     [{:.6}, {:.6}]",
        r.limsup_lower, r.limsup_upper
    );
    println!("gap           {:.6}", r.gap);
    println!("verdict       {}", r.verdict());
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&r)? + "\n";
        if let Some(p) = emit(Some(out), &text)? {
            rec.finish(&[p])?;
        }
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let rec = Recorder::new("simulate", &a);
    let config = TrialConfig {
        batch_size: a.batch_size,
        ..TrialConfig::new(a.kernel, a.n, a.trials, a.seed)
    };
    let est = estimate_p(&config)?;
    #[derive(Serialize)]
    struct Out {
        kernel: KernelName,
        n: u64,
        trials: u64,
        seed: u64,
        batch_size: u64,
        p_hat: f64,
        stderr: f64,
    }
    let out = Out {
        kernel: est.kernel,
        n: est.n,
        trials: est.trials,
        seed: est.seed,
        batch_size: est.batch_size,
        p_hat: est.p_hat,
        stderr: est.stderr,
    };
    let text = serde_json::to_string_pretty(&out)? + "\n";
    let mut written = Vec::new();
    written.extend(emit(a.out.as_deref(), &text)?);
    if let Some(h) = &a.histogram {
        written.extend(emit(Some(h), &est.histogram_csv()?)?);
    }
    rec.finish(&written)?;
    Ok(())
}
