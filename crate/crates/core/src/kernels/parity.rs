//! The parity example: `Y(n) = 2 Bin(n/2, 1/2)` for even `n` and
//! `2 Bin((n-1)/2, 1/2) + 1` for odd `n`, with `p(0) = 0`, `p(1) = 1`.
//! Parity is preserved, so `p(n) = n mod 2`.
//!
//! The law is kept verbatim, including its mass `2^-floor(n/2)` on
//! `Y(n) = n`; [`Pmf::support_violation`] reports it.

use rug::Float;

use super::{half_binomial_row, DriftParameters, Moments, Pmf, TransitionKernel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct ParityKernel;

impl TransitionKernel for ParityKernel {
    fn name(&self) -> &str {
        "parity"
    }

    fn n0(&self) -> u64 {
        1
    }

    fn boundary_value(&self, n: u64) -> f64 {
        (n % 2) as f64
    }

    fn pmf(&self, n: u64, bits: u32) -> Result<Pmf> {
        if n < 2 {
            return Err(Error::Domain(format!("parity needs n >= 2, got {n}")));
        }
        let half = n / 2;
        let offset = (n % 2) as usize;
        let mut probs = vec![Float::new(bits); n as usize + 1];
        for (i, p) in half_binomial_row(half, bits).into_iter().enumerate() {
            probs[2 * i + offset] = p;
        }
        Ok(Pmf { n, bits, probs })
    }

    fn closed_form_moments(&self, n: u64, bits: u32) -> Option<Moments> {
        if n < 2 {
            return None;
        }
        let half = n / 2;
        // mean = n/2 (even) or (n+1)/2 (odd); variance = floor(n/2)/1
        let mean = Float::with_val(bits, half + n % 2);
        let var = Float::with_val(bits, half);
        let second = var + Float::with_val(bits, mean.square_ref());
        Some(Moments { mean, second })
    }

    fn drift(&self) -> Option<DriftParameters> {
        Some(DriftParameters::parity())
    }
}
