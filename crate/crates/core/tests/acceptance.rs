//! End-to-end acceptance run: one PASS/FAIL/SKIP line per criterion.
//!
//! Criterion 9 needs the n = 6000 table. It runs when
//! `target/selfavg-acceptance/roulette6000.native.json` exists (as written by
//! `selfavg table --kernel roulette --n-max 6000 --max-bits 8192 --format native`)
//! or when `SELFAVG_FULL=1`, in which case the table is built here with a
//! resumable checkpoint next to it. That build takes hours.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use rug::Float;
use selfavg::engine::{
    build_table, build_table_with, compare_tables, martingale_sweep, NativeDump, SequenceTable,
    TableData, TransitionMatrix,
};
use selfavg::envelope::{
    contraction_constants, default_x0s, lemma_sweep, scan_periods, subsequence_containment,
    Rounding, ScanOptions, DEFAULT_K,
};
use selfavg::kernels::{
    roulette_pmf, verify_drift, DriftParameters, KernelName, MomentSource, ParityKernel,
    RouletteKernel,
};
use selfavg::simulator::{estimate_p, TrialConfig};
use selfavg::PrecisionConfig;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::*;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

struct Report {
    failed: u32,
}

impl Report {
    fn run(&mut self, id: u32, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                self.failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("criterion {id:>2}: {tag}  {detail}  [{secs:.1}s]");
    }
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/selfavg-acceptance")
}

fn roulette_consts() -> selfavg::envelope::ContractionConstants {
    contraction_constants(&DriftParameters::roulette(), DEFAULT_K).unwrap()
}

fn criterion_1() -> Outcome {
    let t = build_table(&RouletteKernel, 3, &PrecisionConfig::default()).unwrap();
    let p2 = t.value(2).unwrap().to_f64();
    let p3 = t.value(3).unwrap().to_f64();
    let mut worst = 0.0f64;
    for n in 2..=6 {
        let exact = common::roulette_enumerated(n);
        let pmf = roulette_pmf(n as u64, 256).unwrap();
        for (got, want) in pmf.probs.iter().zip(&exact) {
            let w = Float::with_val(320, want);
            worst = worst.max(Float::with_val(320, got - w).abs().to_f64());
        }
    }
    check(
        p2 == 1.0 && (p3 - 0.25).abs() <= 1e-15 && worst < 1e-70,
        format!("p(2) = {p2}, p(3) = {p3}, pmf n <= 6 vs enumeration max |diff| = {worst:.1e} at 256 bits"),
    )
}

fn criterion_2() -> Outcome {
    let r = verify_drift(
        &RouletteKernel,
        &DriftParameters::roulette(),
        2..=2000,
        MomentSource::Auto,
        256,
    )
    .unwrap();
    let bad: Vec<u64> = r.failures().map(|row| row.n).collect();
    let worst_mean = r
        .rows
        .iter()
        .map(|row| (row.mean - row.n as f64 / std::f64::consts::E).abs())
        .fold(0.0, f64::max);
    check(
        r.pass && r.rows.len() == 1999,
        format!(
            "{} rows, max |mu_n - n/e| = {worst_mean:.6} (bound {:.6}), failures {bad:?}",
            r.rows.len(),
            2.0 / std::f64::consts::E
        ),
    )
}

fn criterion_3(table: &SequenceTable) -> Outcome {
    let norm = table
        .residuals
        .iter()
        .map(|r| r.normalization)
        .fold(0.0, f64::max);
    let moment = table
        .residuals
        .iter()
        .map(|r| r.mean.max(r.second))
        .fold(0.0, f64::max);
    let doubled = build_table(
        &RouletteKernel,
        2000,
        &PrecisionConfig::default().with_initial_bits(512),
    )
    .unwrap();
    let bits = compare_tables(table, &doubled).unwrap();
    let min_bits = bits.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        norm < 1e-20 && moment < 1e-15 && min_bits >= 128.0,
        format!(
            "n <= 2000: normalization {norm:.1e}, moments {moment:.1e}, 256 vs 512 bits agree to >= {min_bits:.0} bits"
        ),
    )
}

fn criterion_4(table: &TableData) -> Outcome {
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for n in 3..=30u64 {
        let est = estimate_p(&TrialConfig::new(
            KernelName::Roulette,
            n,
            1_000_000,
            1000 + n,
        ))
        .unwrap();
        let z = (est.p_hat - table.values[n as usize]).abs() / est.stderr;
        worst = worst.max(z);
        if z > 4.0 {
            bad.push(n);
        }
    }
    check(
        bad.is_empty(),
        format!("n = 3..30, 1e6 trials each: max |z| = {worst:.2} (limit 4), outside {bad:?}"),
    )
}

fn criterion_5(table: &SequenceTable, matrix: &TransitionMatrix) -> Outcome {
    let worst = martingale_sweep(table, matrix, 10).unwrap();
    let max = worst.iter().copied().fold(0.0, f64::max);
    check(
        max < 1e-12,
        format!("n <= 300, k <= 10: max |E p(X_k) - p(n)| = {max:.1e}"),
    )
}

fn criterion_6(matrix: &TransitionMatrix) -> Outcome {
    let failures = lemma_sweep(matrix, &roulette_consts(), 10);
    check(
        failures.is_empty(),
        format!(
            "K = 138, n <= 300, k <= 10: {} failures{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(", first {f:?}"))
                .unwrap_or_default()
        ),
    )
}

fn criterion_7(table: &TableData) -> Outcome {
    let c = roulette_consts();
    let mut lines = Vec::new();
    let mut ok = true;
    for x in [40.0, 60.0, 80.0] {
        let r = subsequence_containment(x, table, &c, Rounding::HalfAwayFromZero).unwrap();
        ok &= r.pass && !r.rows.is_empty();
        lines.push(format!(
            "x={x}: [{:.4}, {:.4}] holds {}/{}",
            r.lower,
            r.upper,
            r.rows.iter().filter(|row| row.ok).count(),
            r.rows.len()
        ));
    }
    check(ok, lines.join("; "))
}

fn scan(table: &TableData) -> selfavg::envelope::PeriodScanResult {
    let c = roulette_consts();
    let x0s = default_x0s(table, &c).unwrap();
    scan_periods(&x0s, table, &c, &ScanOptions::default()).unwrap()
}

fn criterion_8(table: &TableData) -> Outcome {
    let r = scan(table);
    check(
        r.gap > 0.02,
        format!(
            "liminf in [{:.6}, {:.6}], limsup in [{:.6}, {:.6}], gap {:.4} > 0.02: {}",
            r.liminf_lower,
            r.liminf_upper,
            r.limsup_lower,
            r.limsup_upper,
            r.gap,
            r.verdict()
        ),
    )
}

fn table_6000() -> Option<SequenceTable> {
    let dir = cache_dir();
    let path = dir.join("roulette6000.native.json");
    if path.exists() {
        let bytes = std::fs::read(&path).unwrap();
        let t = NativeDump::from_json(&bytes).unwrap().into_table().unwrap();
        return (t.n_max == 6000 && t.is_complete()).then_some(t);
    }
    if std::env::var("SELFAVG_FULL").as_deref() != Ok("1") {
        return None;
    }
    std::fs::create_dir_all(&dir).unwrap();
    let ckpt = dir.join("roulette6000.ckpt.native.json");
    let resume = ckpt.exists().then(|| {
        NativeDump::from_json(&std::fs::read(&ckpt).unwrap())
            .unwrap()
            .into_table()
            .unwrap()
    });
    let config = PrecisionConfig::default().with_max_bits(8192);
    let t = build_table_with(&RouletteKernel, 6000, &config, resume, 100, |t| {
        std::fs::write(&ckpt, NativeDump::from(t).to_json()?)?;
        Ok(())
    })
    .unwrap();
    std::fs::write(&path, NativeDump::from(&t).to_json().unwrap()).unwrap();
    Some(t)
}

fn criterion_9() -> Outcome {
    let Some(t) = table_6000() else {
        return Skip("optional: no 6000 table cached and SELFAVG_FULL is not 1".into());
    };
    let r = scan(&TableData::from(&t));
    let near = |v: f64, edge: f64| (v - edge).abs() <= 0.001;
    let ok = near(r.liminf_lower, 0.4702)
        && near(r.liminf_upper, 0.4714)
        && near(r.limsup_lower, 0.5227)
        && near(r.limsup_upper, 0.5237)
        && r.liminf_upper < 0.477487
        && r.limsup_lower > 0.515383;
    check(
        ok,
        format!(
            "liminf in [{:.6}, {:.6}] vs (0.4702, 0.4714), limsup in [{:.6}, {:.6}] vs (0.5227, 0.5237), prior 0.477487 / 0.515383",
            r.liminf_lower, r.liminf_upper, r.limsup_lower, r.limsup_upper
        ),
    )
}

fn criterion_10() -> Outcome {
    let t = build_table(&ParityKernel, 10_000, &PrecisionConfig::default()).unwrap();
    let err = (0..=10_000u64)
        .map(|n| (t.value(n).unwrap().to_f64() - (n % 2) as f64).abs())
        .fold(0.0, f64::max);
    let c = contraction_constants(&DriftParameters::parity(), DEFAULT_K).unwrap();
    let data = TableData::from(&t);
    let r = scan_periods(
        &default_x0s(&data, &c).unwrap(),
        &data,
        &c,
        &ScanOptions::default(),
    )
    .unwrap();
    check(
        err < 1e-12 && r.liminf_lower < 1e-6 && r.limsup_upper > 1.0 - 1e-6 && !r.certified,
        format!(
            "max |p(n) - n mod 2| = {err:.1e} for n <= 1e4; scan l >= {:.2e}, u <= {:.6}: {}",
            r.liminf_lower,
            r.limsup_upper,
            r.verdict()
        ),
    )
}

fn main() {
    // `cargo test` passes filter arguments; this target takes none.
    let mut report = Report { failed: 0 };
    report.run(1, criterion_1);
    report.run(2, criterion_2);

    let start = Instant::now();
    let table = build_table(&RouletteKernel, 2000, &PrecisionConfig::default()).unwrap();
    println!(
        "built roulette table n <= 2000 in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    let data = TableData::from(&table);

    report.run(3, || criterion_3(&table));
    report.run(4, || criterion_4(&data));
    let matrix = TransitionMatrix::new(&RouletteKernel, 300, 256).unwrap();
    report.run(5, || criterion_5(&table, &matrix));
    report.run(6, || criterion_6(&matrix));
    report.run(7, || criterion_7(&data));
    report.run(8, || criterion_8(&data));
    report.run(9, criterion_9);
    report.run(10, criterion_10);

    if report.failed > 0 {
        println!("{} criteria failed", report.failed);
        std::process::exit(1);
    }
}
