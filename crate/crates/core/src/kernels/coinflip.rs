//! Loser selection by coin flipping: every remaining player flips, the
//! tail-flippers continue. A round where everybody flips tails changes
//! nothing, so it is resampled: `Y(n)` is Binomial(n, 1/2) conditioned on
//! `Y(n) != n`. `p(n)` is the probability that the process fails, i.e. that
//! some round eliminates everybody.

use rug::Float;

use super::{half_binomial_row, DriftParameters, Moments, Pmf, TransitionKernel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct CoinflipKernel;

impl TransitionKernel for CoinflipKernel {
    fn name(&self) -> &str {
        "coinflip"
    }

    fn n0(&self) -> u64 {
        1
    }

    fn boundary_value(&self, n: u64) -> f64 {
        if n == 0 {
            1.0
        } else {
            0.0
        }
    }

    fn pmf(&self, n: u64, bits: u32) -> Result<Pmf> {
        if n < 2 {
            return Err(Error::Domain(format!("coinflip needs n >= 2, got {n}")));
        }
        let mut probs = half_binomial_row(n, bits);
        let all_tails = probs[n as usize].clone();
        let keep = Float::with_val(bits, 1u32 - all_tails);
        for p in probs.iter_mut().take(n as usize) {
            *p /= &keep;
        }
        probs[n as usize] = Float::new(bits);
        Ok(Pmf { n, bits, probs })
    }

    fn closed_form_moments(&self, n: u64, bits: u32) -> Option<Moments> {
        if n < 2 {
            return None;
        }
        // E[Y 1{Y<n}] = n/2 - n 2^-n,  E[Y^2 1{Y<n}] = n/4 + n^2/4 - n^2 2^-n
        let mut tail = Float::with_val(bits, 1);
        tail >>= n as u32;
        let keep = Float::with_val(bits, 1u32 - &tail);
        let nf = Float::with_val(bits, n);
        let mean = (Float::with_val(bits, &nf / 2u32) - Float::with_val(bits, &nf * &tail)) / &keep;
        let n2 = Float::with_val(bits, nf.square_ref());
        let second = (Float::with_val(bits, &nf / 4u32) + Float::with_val(bits, &n2 / 4u32)
            - Float::with_val(bits, &n2 * &tail))
            / &keep;
        Some(Moments { mean, second })
    }

    fn drift(&self) -> Option<DriftParameters> {
        Some(DriftParameters::coinflip())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditioned_binomial() {
        let k = CoinflipKernel;
        let p2 = k.pmf(2, 128).unwrap().to_f64();
        assert!((p2[0] - 1.0 / 3.0).abs() < 1e-16 && (p2[1] - 2.0 / 3.0).abs() < 1e-16);
        assert_eq!(p2[2], 0.0);
        let p3 = k.pmf(3, 128).unwrap().to_f64();
        for (got, want) in p3.iter().zip([1.0 / 7.0, 3.0 / 7.0, 3.0 / 7.0, 0.0]) {
            assert!((got - want).abs() < 1e-16);
        }
    }

    #[test]
    fn moments_match_pmf() {
        let k = CoinflipKernel;
        for n in [2u64, 3, 10, 57] {
            let pmf = k.pmf(n, 200).unwrap();
            let got = pmf.moments();
            let want = k.closed_form_moments(n, 200).unwrap();
            assert!((got.mean.to_f64() - want.mean.to_f64()).abs() < 1e-12);
            assert!((got.second.to_f64() - want.second.to_f64()).abs() < 1e-10);
        }
        let m = k.closed_form_moments(400, 256).unwrap().mean.to_f64();
        assert!((m / 400.0 - 0.5).abs() < 1e-15);
    }
}
