//! Exact laws of the iterated process `X_0 = n`, `X_{k+1} = Y(X_k)`
//! (with `Y(m) = m` for `m <= n0`) through powers of the transition matrix.

use rayon::prelude::*;
use rug::{Assign, Float};
use serde::{Deserialize, Serialize};

use super::{evaluate_row, SequenceTable};
use crate::error::{Error, Result};
use crate::kernels::{Pmf, TransitionKernel};
use crate::precision::PrecisionConfig;

/// Largest starting population for exact pushforwards.
pub const PUSHFORWARD_LIMIT: u64 = 500;

/// Rows `P(Y(m) = j)` for `m = 0..=size`, rounded to `bits`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub kernel: String,
    pub size: u64,
    pub bits: u32,
    rows: Vec<Vec<Float>>,
}

impl TransitionMatrix {
    pub fn new(kernel: &dyn TransitionKernel, size: u64, bits: u32) -> Result<Self> {
        Self::with_limit(kernel, size, bits, PUSHFORWARD_LIMIT)
    }

    pub fn with_limit(
        kernel: &dyn TransitionKernel,
        size: u64,
        bits: u32,
        limit: u64,
    ) -> Result<Self> {
        if size > limit {
            return Err(Error::PushforwardLimit { n: size, limit });
        }
        let config = PrecisionConfig::default()
            .with_initial_bits(bits)
            .with_max_bits(bits.max(8192));
        let rows = (0..=size)
            .into_par_iter()
            .map(|m| {
                let pmf = if m <= kernel.n0() {
                    Pmf::point_mass(m, bits)
                } else {
                    evaluate_row(kernel, m, &config)?.0
                };
                Ok(pmf
                    .probs
                    .into_iter()
                    .map(|p| Float::with_val(bits, p))
                    .collect())
            })
            .collect::<Result<Vec<Vec<Float>>>>()?;
        Ok(Self {
            kernel: kernel.name().to_string(),
            size,
            bits,
            rows,
        })
    }

    pub fn row(&self, m: u64) -> &[Float] {
        &self.rows[m as usize]
    }

    /// Law of `X_{k+1}` from the law of `X_k`.
    pub fn forward(&self, dist: &[Float]) -> Vec<Float> {
        let mut out = vec![Float::new(self.bits); dist.len()];
        let mut tmp = Float::new(self.bits);
        for (m, w) in dist.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            for (j, p) in self.rows[m].iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                tmp.assign(w * p);
                out[j] += &tmp;
            }
        }
        out
    }

    /// `(P f)(m) = E[f(Y(m))]` for every `m` at once.
    pub fn backward(&self, f: &[Float]) -> Vec<Float> {
        self.rows
            .par_iter()
            .take(f.len())
            .map(|row| {
                let mut acc = Float::new(self.bits);
                let mut tmp = Float::new(self.bits);
                for (p, v) in row.iter().zip(f) {
                    if !p.is_zero() {
                        tmp.assign(p * v);
                        acc += &tmp;
                    }
                }
                acc
            })
            .collect()
    }

    /// Law of `X_k` started from `X_0 = n`.
    pub fn pushforward(&self, n: u64, k_rounds: u32) -> Result<Vec<Float>> {
        if n > self.size {
            return Err(Error::PushforwardLimit {
                n,
                limit: self.size,
            });
        }
        let mut dist = vec![Float::new(self.bits); n as usize + 1];
        dist[n as usize] = Float::with_val(self.bits, 1);
        for _ in 0..k_rounds {
            dist = self.forward(&dist);
        }
        Ok(dist)
    }
}

/// Law of `X_k` with `X_0 = n`, indexed `0..=n`, at 256 bits.
pub fn pushforward_distribution(
    kernel: &dyn TransitionKernel,
    n: u64,
    k_rounds: u32,
) -> Result<Vec<Float>> {
    TransitionMatrix::new(kernel, n, 256)?.pushforward(n, k_rounds)
}

/// Mean and variance of a law on `{0, 1, ...}`.
pub fn law_mean_variance(dist: &[Float]) -> (Float, Float) {
    let bits = dist.first().map_or(64, Float::prec);
    let mut mean = Float::new(bits);
    let mut second = Float::new(bits);
    let mut tmp = Float::new(bits);
    for (m, w) in dist.iter().enumerate() {
        tmp.assign(w * (m as u64));
        mean += &tmp;
        tmp *= m as u64;
        second += &tmp;
    }
    let var = second - Float::with_val(bits, mean.square_ref());
    (mean, var)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub n: u64,
    pub p_n: f64,
    /// `|E[p(X_k)] - p(n)|` for `k = 0..=k_max`.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `E[p(X_k)] = p(n)` for `k = 0..=k_max` with exact pushforwards.
pub fn martingale_check(
    table: &SequenceTable,
    kernel: &dyn TransitionKernel,
    n: u64,
    k_max: u32,
    tolerance: f64,
) -> Result<MartingaleReport> {
    let matrix = TransitionMatrix::new(kernel, n, table.precision_bits.max(128))?;
    martingale_check_with(table, &matrix, n, k_max, tolerance)
}

/// As [`martingale_check`] with a prebuilt matrix covering `n`.
pub fn martingale_check_with(
    table: &SequenceTable,
    matrix: &TransitionMatrix,
    n: u64,
    k_max: u32,
    tolerance: f64,
) -> Result<MartingaleReport> {
    if table.kernel_name != matrix.kernel {
        return Err(Error::Config(format!(
            "table is for `{}`, matrix for `{}`",
            table.kernel_name, matrix.kernel
        )));
    }
    let p_n = table.value(n).ok_or_else(|| Error::WindowRange {
        x: n as f64,
        n_max: table.len().saturating_sub(1) as u64,
        required_n_max: n,
    })?;
    let mut dist = matrix.pushforward(n, 0)?;
    let mut deviations = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        if k > 0 {
            dist = matrix.forward(&dist);
        }
        let mut e = Float::new(matrix.bits);
        for (w, v) in dist.iter().zip(&table.values) {
            e += Float::with_val(matrix.bits, w * v);
        }
        deviations.push(Float::with_val(matrix.bits, e - p_n).abs().to_f64());
    }
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    Ok(MartingaleReport {
        n,
        p_n: p_n.to_f64(),
        deviations,
        max_deviation,
        tolerance,
        pass: max_deviation < tolerance,
    })
}

/// `max_{k <= k_max} |E[p(X_k) | X_0 = n] - p(n)|` for every `n <= matrix.size`,
/// by iterating `P` on the table values.
pub fn martingale_sweep(
    table: &SequenceTable,
    matrix: &TransitionMatrix,
    k_max: u32,
) -> Result<Vec<f64>> {
    let size = matrix.size as usize;
    if table.len() <= size {
        return Err(Error::WindowRange {
            x: size as f64,
            n_max: table.len().saturating_sub(1) as u64,
            required_n_max: size as u64,
        });
    }
    let p: Vec<Float> = table.values[..=size]
        .iter()
        .map(|v| Float::with_val(matrix.bits, v))
        .collect();
    let mut worst = vec![0.0f64; size + 1];
    let mut f = p.clone();
    for _ in 0..k_max {
        f = matrix.backward(&f);
        for (m, (a, b)) in f.iter().zip(&p).enumerate() {
            let d = Float::with_val(matrix.bits, a - b).abs().to_f64();
            worst[m] = worst[m].max(d);
        }
    }
    Ok(worst)
}
