//! `selfavg verify`: drift inequalities, martingale property, the two moment
//! lemmas and subsequence containment.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use selfavg::engine::{
    build_table, martingale_check_with, martingale_sweep, NativeDump, SequenceTable, TableData,
    TransitionMatrix, PUSHFORWARD_LIMIT,
};
use selfavg::envelope::{lemma_sweep, subsequence_containment, Rounding, DEFAULT_K};
use selfavg::kernels::{verify_drift, KernelName, MomentSource};
use selfavg::{Error, PrecisionConfig};

use crate::manifest::Recorder;
use crate::{constants_for, emit, VerificationFailed};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Drift,
    Martingale,
    Lemmas,
    Containment,
    All,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    /// Table to check; built on the fly (at 256 bits) when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value = "roulette")]
    kernel: KernelName,
    #[arg(long, default_value_t = 200)]
    n_max: u64,
    /// Single start for the martingale check; all starts when omitted.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 10)]
    k_max: u32,
    /// Containment points; defaults to every integer whose envelope fits.
    #[arg(long, num_args = 1..)]
    x: Vec<f64>,
    #[arg(long = "K", default_value_t = DEFAULT_K)]
    k: f64,
    #[arg(long, default_value_t = 1e-15)]
    tol: f64,
    /// Round `x / alpha^i` half-to-even instead of half-away-from-zero.
    #[arg(long)]
    half_even: bool,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SuiteResult {
    suite: &'static str,
    pass: bool,
    checked: u64,
    detail: String,
}

struct Loaded {
    table: SequenceTable,
    data: TableData,
}

fn load(a: &VerifyArgs) -> Result<Loaded> {
    let table = match &a.table {
        Some(p) => {
            let bytes = std::fs::read(p)?;
            match NativeDump::from_json(&bytes) {
                Ok(dump) => dump.into_table()?,
                Err(_) => SequenceTable::from_data(&crate::read_table(p)?),
            }
        }
        None => build_table(
            a.kernel.kernel().as_ref(),
            a.n_max,
            &PrecisionConfig::default(),
        )?,
    };
    let data = TableData::from(&table);
    Ok(Loaded { table, data })
}

fn kernel_of(table: &SequenceTable) -> Result<KernelName> {
    table
        .kernel_name
        .parse()
        .map_err(|_| anyhow::Error::new(Error::UnknownKernel(table.kernel_name.clone())))
}

fn run_drift(a: &VerifyArgs, kernel: KernelName, n_max: u64) -> Result<SuiteResult> {
    let k = kernel.kernel();
    let Some(params) = k.drift() else {
        bail!(Error::Config(format!(
            "kernel `{}` has no drift parameters",
            kernel.as_str()
        )));
    };
    let _ = a;
    let report = verify_drift(k.as_ref(), &params, 0..=n_max, MomentSource::Auto, 256)?;
    let failures: Vec<u64> = report.failures().map(|r| r.n).collect();
    Ok(SuiteResult {
        suite: "drift",
        pass: report.pass,
        checked: report.rows.len() as u64,
        detail: if failures.is_empty() {
            format!("both inequalities hold for n <= {n_max}")
        } else {
            format!("fails at n = {failures:?}")
        },
    })
}

fn matrix_for(loaded: &Loaded, kernel: KernelName, upto: u64) -> Result<TransitionMatrix> {
    let size = upto.min(loaded.table.n_max).min(PUSHFORWARD_LIMIT);
    Ok(TransitionMatrix::new(
        kernel.kernel().as_ref(),
        size,
        loaded.table.precision_bits.max(128),
    )?)
}

fn run_martingale(a: &VerifyArgs, loaded: &Loaded, kernel: KernelName) -> Result<SuiteResult> {
    match a.n {
        Some(n) => {
            let matrix = matrix_for(loaded, kernel, n)?;
            let r = martingale_check_with(&loaded.table, &matrix, n, a.k_max, a.tol)?;
            Ok(SuiteResult {
                suite: "martingale",
                pass: r.pass,
                checked: r.deviations.len() as u64,
                detail: format!(
                    "n = {n}: max |E p(X_k) - p(n)| = {:e} (tol {:e})",
                    r.max_deviation, a.tol
                ),
            })
        }
        None => {
            let matrix = matrix_for(loaded, kernel, loaded.table.n_max)?;
            let worst = martingale_sweep(&loaded.table, &matrix, a.k_max)?;
            let (arg, max) =
                worst.iter().enumerate().fold(
                    (0, 0.0f64),
                    |acc, (n, &d)| if d > acc.1 { (n, d) } else { acc },
                );
            Ok(SuiteResult {
                suite: "martingale",
                pass: max < a.tol,
                checked: worst.len() as u64,
                detail: format!(
                    "n <= {}, k <= {}: max deviation {:e} at n = {arg} (tol {:e})",
                    matrix.size, a.k_max, max, a.tol
                ),
            })
        }
    }
}

fn run_lemmas(a: &VerifyArgs, loaded: &Loaded, kernel: KernelName) -> Result<SuiteResult> {
    let consts = constants_for(kernel.as_str(), a.k)?;
    let matrix = matrix_for(loaded, kernel, loaded.table.n_max)?;
    let failures = lemma_sweep(&matrix, &consts, a.k_max);
    Ok(SuiteResult {
        suite: "lemmas",
        pass: failures.is_empty(),
        checked: (matrix.size + 1) * (a.k_max as u64 + 1),
        detail: if failures.is_empty() {
            format!(
                "expectation and variance bounds hold for n <= {}, k <= {}",
                matrix.size, a.k_max
            )
        } else {
            let shown: Vec<_> = failures.iter().take(5).collect();
            format!("{} failures, first {shown:?}", failures.len())
        },
    })
}

fn run_containment(a: &VerifyArgs, loaded: &Loaded, kernel: KernelName) -> Result<SuiteResult> {
    let consts = constants_for(kernel.as_str(), a.k)?;
    let rounding = if a.half_even {
        Rounding::HalfToEven
    } else {
        Rounding::HalfAwayFromZero
    };
    let xs: Vec<f64> = if a.x.is_empty() {
        (1..)
            .map(|x| x as f64)
            .take_while(|&x| consts.t(x) + x + 2.0 <= loaded.data.n_max as f64)
            .collect()
    } else {
        a.x.clone()
    };
    let mut checked = 0;
    let mut bad = Vec::new();
    for &x in &xs {
        let r = subsequence_containment(x, &loaded.data, &consts, rounding)?;
        checked += r.rows.len() as u64;
        bad.extend(r.rows.iter().filter(|row| !row.ok).map(|row| (x, row.n)));
    }
    Ok(SuiteResult {
        suite: "containment",
        pass: bad.is_empty(),
        checked,
        detail: if bad.is_empty() {
            format!("l(x) <= p(N_i) <= u(x) at {} points", xs.len())
        } else {
            format!(
                "{} violations, first (x, n) = {:?}",
                bad.len(),
                &bad[..bad.len().min(5)]
            )
        },
    })
}

pub fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let mut rec = Recorder::new("verify", &a);
    if let Some(p) = &a.table {
        rec.input(p);
    }
    let want = |s: Suite| a.suite == s || a.suite == Suite::All;
    let needs_table = want(Suite::Martingale) || want(Suite::Lemmas) || want(Suite::Containment);
    let loaded = if needs_table { Some(load(&a)?) } else { None };
    let kernel = match &loaded {
        Some(l) => kernel_of(&l.table)?,
        None => a.kernel,
    };
    let n_max = loaded.as_ref().map_or(a.n_max, |l| l.table.n_max);

    let mut results = Vec::new();
    if want(Suite::Drift) {
        results.push(run_drift(&a, kernel, n_max)?);
    }
    if let Some(l) = &loaded {
        if want(Suite::Martingale) {
            results.push(run_martingale(&a, l, kernel)?);
        }
        if want(Suite::Lemmas) {
            results.push(run_lemmas(&a, l, kernel)?);
        }
        if want(Suite::Containment) {
            results.push(run_containment(&a, l, kernel)?);
        }
    }

    let text = if a.json {
        serde_json::to_string_pretty(&results)? + "\n"
    } else {
        results
            .iter()
            .map(|r| {
                format!(
                    "{:<12} {}  {}\n",
                    r.suite,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.detail
                )
            })
            .collect()
    };
    if let Some(p) = emit(a.out.as_deref(), &text)? {
        rec.finish(&[p])?;
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.suite)
        .collect();
    if !failed.is_empty() {
        bail!(VerificationFailed(failed.join(", ")));
    }
    Ok(())
}
