//! Table builds for `p(n) = E[p(Y(n))]` at adaptive precision.
//!
//! Rows are evaluated one `n` at a time. A row's law is computed at
//! `initial_bits` plus the kernel's predicted cancellation loss and accepted
//! only when its normalization, moment and negativity residuals pass;
//! otherwise the working precision is multiplied by the escalation factor.
//! Values are stored at `initial_bits`.

pub mod io;
pub mod pushforward;

use rug::{Assign, Float};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Pmf, TransitionKernel};
use crate::precision::{round_up_to_limb, PrecisionConfig};

pub use io::{NativeDump, TableData, TableFormat};
pub use pushforward::{
    law_mean_variance, martingale_check, martingale_check_with, martingale_sweep,
    pushforward_distribution, MartingaleReport, TransitionMatrix, PUSHFORWARD_LIMIT,
};

/// Self-check residuals of one accepted row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RowResidual {
    /// Working precision the row was accepted at (0 for boundary rows).
    pub bits: u32,
    /// `|sum P(Y = k) - 1|`.
    pub normalization: f64,
    /// Relative error of `E[Y]` against the closed form, if the kernel has one.
    pub mean: f64,
    /// Relative error of `E[Y^2]` against the closed form.
    pub second: f64,
    /// Most negative entry before clamping, as a magnitude.
    pub negativity: f64,
}

impl RowResidual {
    pub fn max(&self) -> f64 {
        self.normalization.max(self.mean).max(self.second)
    }
}

/// `p(0..=n_max)` for one kernel.
#[derive(Debug, Clone)]
pub struct SequenceTable {
    pub kernel_name: String,
    pub n_max: u64,
    /// Precision the values are stored at.
    pub precision_bits: u32,
    pub config: PrecisionConfig,
    pub values: Vec<Float>,
    pub residuals: Vec<RowResidual>,
    /// Rows whose law put mass on `Y(n) = n`.
    pub support_violations: Vec<u64>,
}

impl SequenceTable {
    /// Highest `n` computed so far (the table may be partial while building).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.values.len() as u64 == self.n_max + 1
    }

    pub fn value(&self, n: u64) -> Option<&Float> {
        self.values.get(n as usize)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(Float::to_f64).collect()
    }

    pub fn residual_max(&self) -> f64 {
        self.residuals
            .iter()
            .map(RowResidual::max)
            .fold(0.0, f64::max)
    }
}

/// Per-`n` residual summary of a table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kernel: String,
    pub n_max: u64,
    pub precision_bits: u32,
    /// `max(normalization, mean, second)` per `n`.
    pub per_n: Vec<f64>,
    pub max: f64,
    pub argmax: u64,
    /// Largest working precision any row needed.
    pub max_row_bits: u32,
}

pub fn table_residual_report(table: &SequenceTable) -> ResidualReport {
    let per_n: Vec<f64> = table.residuals.iter().map(RowResidual::max).collect();
    let (argmax, max) =
        per_n.iter().enumerate().fold(
            (0, 0.0),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        );
    ResidualReport {
        kernel: table.kernel_name.clone(),
        n_max: table.n_max,
        precision_bits: table.precision_bits,
        per_n,
        max,
        argmax: argmax as u64,
        max_row_bits: table.residuals.iter().map(|r| r.bits).max().unwrap_or(0),
    }
}

/// Bits of agreement between two tables of the same kernel, per `n`.
/// Exactly equal values give `f64::INFINITY`.
pub fn compare_tables(a: &SequenceTable, b: &SequenceTable) -> Result<Vec<f64>> {
    if a.kernel_name != b.kernel_name {
        return Err(Error::Config(format!(
            "cannot compare `{}` with `{}`",
            a.kernel_name, b.kernel_name
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| crate::precision::agreement_bits(x, y))
        .collect())
}

fn relative_gap(got: &Float, want: &Float) -> f64 {
    let bits = got.prec().max(want.prec());
    let diff = Float::with_val(bits, got - want).abs();
    let scale = Float::with_val(bits, want.abs_ref()).max(&Float::with_val(bits, 1));
    (diff / scale).to_f64()
}

/// Evaluates the law of `Y(n)` under the precision policy and returns it with
/// its residuals. Negative entries are clamped only after all checks pass.
pub fn evaluate_row(
    kernel: &dyn TransitionKernel,
    n: u64,
    config: &PrecisionConfig,
) -> Result<(Pmf, RowResidual)> {
    config.validate()?;
    let hint = round_up_to_limb(
        config
            .initial_bits
            .saturating_add(kernel.cancellation_bits(n)),
    );
    let mut bits = hint.min(config.max_bits);
    loop {
        let mut pmf = kernel.pmf(n, bits)?;
        let res = row_residual(kernel, &pmf, n, bits);
        let effective = bits.saturating_sub(kernel.cancellation_bits(n)).max(64);
        let neg_ok = res.negativity <= PrecisionConfig::negativity_tol(effective);
        let ok = res.normalization < config.normalization_tol
            && res.mean < config.moment_tol
            && res.second < config.moment_tol
            && neg_ok;
        if ok {
            pmf.clamp_negatives();
            return Ok((pmf, res));
        }
        if bits >= config.max_bits {
            let residual = if neg_ok { res.max() } else { res.negativity };
            return Err(Error::PrecisionExhausted { n, bits, residual });
        }
        bits = bits
            .saturating_mul(config.escalation_factor)
            .min(config.max_bits);
    }
}

fn row_residual(kernel: &dyn TransitionKernel, pmf: &Pmf, n: u64, bits: u32) -> RowResidual {
    let total = pmf.total();
    let normalization = Float::with_val(bits, total - 1u32).abs().to_f64();
    let (mean, second) = match kernel.closed_form_moments(n, bits) {
        Some(want) => {
            let got = pmf.moments();
            (
                relative_gap(&got.mean, &want.mean),
                relative_gap(&got.second, &want.second),
            )
        }
        None => (0.0, 0.0),
    };
    let negativity = (-pmf.min_entry()).max(0.0);
    RowResidual {
        bits,
        normalization,
        mean,
        second,
        negativity,
    }
}

/// `p(n) = sum_{k<n} P(Y=k) p(k) / (1 - P(Y=n))`, clamped to `[0, 1]`.
fn next_value(pmf: &Pmf, values: &[Float], out_bits: u32) -> Float {
    let bits = pmf.bits;
    let mut acc = Float::new(bits);
    let mut tmp = Float::new(bits);
    for (p, v) in pmf.probs.iter().zip(values) {
        if p.is_zero() || v.is_zero() {
            continue;
        }
        tmp.assign(p * v);
        acc += &tmp;
    }
    if pmf.support_violation() {
        let stay = Float::with_val(bits, 1u32 - pmf.self_mass());
        acc /= stay;
    }
    let mut out = Float::with_val(out_bits, &acc);
    if out.is_sign_negative() {
        out = Float::new(out_bits);
    } else if out > 1u32 {
        out = Float::with_val(out_bits, 1);
    }
    out
}

/// Builds `p(0..=n_max)`.
pub fn build_table(
    kernel: &dyn TransitionKernel,
    n_max: u64,
    config: &PrecisionConfig,
) -> Result<SequenceTable> {
    build_table_with(kernel, n_max, config, None, 0, |_| Ok(()))
}

/// Builds `p(0..=n_max)`, optionally continuing a partial table.
///
/// `checkpoint` is called with the partial table every `every` computed rows
/// (never when `every == 0`) and once more when the table is complete.
pub fn build_table_with<F>(
    kernel: &dyn TransitionKernel,
    n_max: u64,
    config: &PrecisionConfig,
    resume: Option<SequenceTable>,
    every: u64,
    mut checkpoint: F,
) -> Result<SequenceTable>
where
    F: FnMut(&SequenceTable) -> Result<()>,
{
    config.validate()?;
    let out_bits = config.initial_bits;
    let mut table = match resume {
        Some(t) => {
            if t.kernel_name != kernel.name() {
                return Err(Error::Config(format!(
                    "checkpoint is for kernel `{}`, not `{}`",
                    t.kernel_name,
                    kernel.name()
                )));
            }
            if t.precision_bits != out_bits {
                return Err(Error::Config(format!(
                    "checkpoint was built at {} bits, not {out_bits}",
                    t.precision_bits
                )));
            }
            if t.len() as u64 > n_max + 1 {
                return Err(Error::Config(format!(
                    "checkpoint already extends past n_max = {n_max}"
                )));
            }
            SequenceTable {
                n_max,
                config: *config,
                ..t
            }
        }
        None => SequenceTable {
            kernel_name: kernel.name().to_string(),
            n_max,
            precision_bits: out_bits,
            config: *config,
            values: Vec::with_capacity(n_max as usize + 1),
            residuals: Vec::with_capacity(n_max as usize + 1),
            support_violations: Vec::new(),
        },
    };

    let mut since = 0;
    for n in table.len() as u64..=n_max {
        if n <= kernel.n0() {
            let v = kernel.boundary_value(n);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "boundary value p({n}) = {v} is not a probability"
                )));
            }
            table.values.push(Float::with_val(out_bits, v));
            table.residuals.push(RowResidual::default());
        } else {
            let (pmf, res) = evaluate_row(kernel, n, config)?;
            if pmf.support_violation() {
                table.support_violations.push(n);
                if *pmf.self_mass() >= 1u32 {
                    return Err(Error::Domain(format!(
                        "law of Y({n}) is a point mass at n; p({n}) is undetermined"
                    )));
                }
            }
            let v = next_value(&pmf, &table.values, out_bits);
            table.values.push(v);
            table.residuals.push(res);
        }
        since += 1;
        if every > 0 && since >= every && !table.is_complete() {
            checkpoint(&table)?;
            since = 0;
        }
    }
    checkpoint(&table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CustomKernel, ParityKernel, RouletteKernel};

    #[test]
    fn roulette_small_table() {
        let t = build_table(&RouletteKernel, 3, &PrecisionConfig::default()).unwrap();
        let v = t.to_f64();
        assert_eq!(v, vec![1.0, 0.0, 1.0, 0.25]);
        assert!(t.residual_max() < 1e-60);
    }

    #[test]
    fn parity_is_n_mod_2() {
        let t = build_table(&ParityKernel, 60, &PrecisionConfig::default()).unwrap();
        for (n, v) in t.to_f64().into_iter().enumerate() {
            assert!((v - (n % 2) as f64).abs() < 1e-12, "n = {n}");
        }
        assert_eq!(t.support_violations.first(), Some(&2));
    }

    #[test]
    fn point_mass_at_zero_copies_p0() {
        let k = CustomKernel::new("zero", vec![0.3], |n, bits| {
            let mut v = vec![Float::new(bits); n as usize];
            v[0] = Float::with_val(bits, 1);
            v
        })
        .unwrap();
        let t = build_table(&k, 20, &PrecisionConfig::default()).unwrap();
        for v in &t.values {
            assert_eq!(*v, t.values[0]);
        }
        assert_eq!(t.residual_max(), 0.0);
    }

    #[test]
    fn resume_matches_fresh_build() {
        let cfg = PrecisionConfig::default();
        let fresh = build_table(&RouletteKernel, 40, &cfg).unwrap();
        let mut saved = None;
        let _ = build_table_with(&RouletteKernel, 25, &cfg, None, 10, |t| {
            saved = Some(t.clone());
            Ok(())
        })
        .unwrap();
        let resumed = build_table_with(&RouletteKernel, 40, &cfg, saved, 0, |_| Ok(())).unwrap();
        assert_eq!(fresh.values, resumed.values);
    }

    #[test]
    fn exhaustion_names_row() {
        let cfg = PrecisionConfig::default()
            .with_initial_bits(64)
            .with_max_bits(64);
        let err = build_table(&RouletteKernel, 200, &cfg).unwrap_err();
        match err {
            Error::PrecisionExhausted { n, .. } => assert!(n > 2),
            other => panic!("unexpected {other}"),
        }
    }
}
