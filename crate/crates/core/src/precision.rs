//! Working-precision policy and small multiprecision helpers.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MPFR's hard lower limit is 1 bit; we never go below a double's mantissa.
pub const MIN_BITS: u32 = 64;

/// Precision policy for high-precision row evaluation.
///
/// A row is first evaluated at `initial_bits` plus whatever cancellation
/// loss the kernel predicts for it, and the result is accepted only if its
/// normalization and moment residuals pass. Otherwise the precision is
/// multiplied by `escalation_factor` until `max_bits` is exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    pub initial_bits: u32,
    pub max_bits: u32,
    pub normalization_tol: f64,
    /// Relative tolerance on first and second moments against closed forms.
    pub moment_tol: f64,
    pub escalation_factor: u32,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            initial_bits: 256,
            max_bits: 4096,
            normalization_tol: 1e-20,
            moment_tol: 1e-15,
            escalation_factor: 2,
        }
    }
}

impl PrecisionConfig {
    pub fn with_initial_bits(mut self, bits: u32) -> Self {
        self.initial_bits = bits;
        self
    }

    pub fn with_max_bits(mut self, bits: u32) -> Self {
        self.max_bits = bits;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_bits < MIN_BITS {
            return Err(Error::Config(format!(
                "initial_bits = {} is below the minimum of {MIN_BITS}",
                self.initial_bits
            )));
        }
        if self.max_bits < self.initial_bits {
            return Err(Error::Config(format!(
                "max_bits = {} is below initial_bits = {}",
                self.max_bits, self.initial_bits
            )));
        }
        if self.escalation_factor < 2 {
            return Err(Error::Config("escalation_factor must be at least 2".into()));
        }
        if !(self.normalization_tol > 0.0 && self.moment_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Tolerance for negative entries before clamping: 2^-(P/2).
    pub fn negativity_tol(bits: u32) -> f64 {
        (-(f64::from(bits) / 2.0)).exp2()
    }
}

/// Rounds `bits` up to a whole number of 64-bit limbs.
pub fn round_up_to_limb(bits: u32) -> u32 {
    bits.div_ceil(64).max(1) * 64
}

/// `log2(m!)` for `m = 0..=n`, in double precision.
pub fn log2_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for m in 1..=n {
        acc += (m as f64).log2();
        out.push(acc);
    }
    out
}

/// `1/m!` for `m = 0..=n` at `bits` precision.
pub fn inverse_factorials(n: usize, bits: u32) -> Vec<Float> {
    let mut out = Vec::with_capacity(n + 1);
    let mut cur = Float::with_val(bits, 1);
    out.push(cur.clone());
    for m in 1..=n {
        cur /= m as u32;
        out.push(cur.clone());
    }
    out
}

/// Approximate `log2 |x|`; `-inf` for zero.
pub fn log2_abs(x: &Float) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    match x.get_exp() {
        Some(e) => {
            // x = m * 2^e with 0.5 <= |m| < 1
            let m = Float::with_val(64, x >> e).to_f64().abs();
            f64::from(e) + m.log2()
        }
        None => f64::NAN,
    }
}

/// Number of leading bits on which `a` and `b` agree, measured absolutely:
/// `-log2 |a - b|`, or `f64::INFINITY` when equal.
pub fn agreement_bits(a: &Float, b: &Float) -> f64 {
    let bits = a.prec().max(b.prec());
    let diff = Float::with_val(bits, a - b);
    if diff.is_zero() {
        f64::INFINITY
    } else {
        -log2_abs(&diff)
    }
}

/// Euler's number at `bits` precision.
pub fn euler(bits: u32) -> Float {
    Float::with_val(bits, 1).exp()
}
