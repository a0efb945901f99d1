//! Group Russian roulette: `n` players each shoot a uniformly chosen other
//! player; `Y(n)` is the number nobody aimed at.
//!
//! Two independent evaluations of the one-round law live here.
//!
//! * [`kill_subset_row`] runs the subset recursion
//!   `q(n,k) = ((k-1)/(n-1))^k (k/(n-1))^(n-k) - sum_{i<k} C(k,i) q(n,i)`
//!   where `q(n,k)` is the probability that one fixed `k`-set is exactly the
//!   set of victims. Then `P(Y(n) = j) = C(n,j) q(n, n-j)`.
//! * [`roulette_pmf`] evaluates the same law through the binomial-moment
//!   expansion `P(Y = j) = sum_{s>=j} (-1)^(s-j) C(s,j) S_s` with
//!   `S_s = C(n,s) ((n-s)/(n-1))^s ((n-s-1)/(n-1))^(n-s)`, the expected number
//!   of surviving `s`-sets. This is the closed-form solution of the same
//!   recursion, written so that each entry is an independent alternating sum.
//!   Terms below the rounding floor of the largest term are skipped, which
//!   removes roughly half the work without changing the accuracy.
//!
//! Both sums cancel catastrophically: the largest terms reach `2^(0.67 n)`
//! while the result is a probability. [`cancellation_bits`] predicts the loss
//! from term magnitudes so that the caller can size the working precision.

use rayon::prelude::*;
use rug::{Assign, Float};

use super::{DriftParameters, Moments, Pmf, TransitionKernel};
use crate::error::{Error, Result};
use crate::precision::{inverse_factorials, log2_factorials, round_up_to_limb, PrecisionConfig};

/// `p(0) = 1`, `p(1) = 0`; `p(n)` is the probability that nobody survives.
#[derive(Debug, Clone, Copy, Default)]
pub struct RouletteKernel;

impl TransitionKernel for RouletteKernel {
    fn name(&self) -> &str {
        "roulette"
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
        roulette_pmf(n, bits)
    }

    fn cancellation_bits(&self, n: u64) -> u32 {
        cancellation_bits(n)
    }

    fn closed_form_moments(&self, n: u64, bits: u32) -> Option<Moments> {
        let mean = roulette_mu(n, bits).ok()?;
        let second = roulette_second_moment(n, bits).ok()?;
        Some(Moments { mean, second })
    }

    fn drift(&self) -> Option<DriftParameters> {
        Some(DriftParameters::roulette())
    }
}

fn check_domain(n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("roulette needs n >= 2, got {n}")));
    }
    if n > u64::from(u32::MAX) {
        return Err(Error::Domain(format!("n = {n} is too large")));
    }
    Ok(())
}

/// `num^exp / den^exp` at `bits` precision; `0^0 = 1`.
fn ratio_pow(num: u64, den: u64, exp: u64, bits: u32) -> Float {
    let top = Float::with_val(bits, Float::u_pow_u(num as u32, exp as u32));
    let bottom = Float::with_val(bits, Float::u_pow_u(den as u32, exp as u32));
    top / bottom
}

/// `E[Y(n)] = n (1 - 1/(n-1))^(n-1)`.
pub fn roulette_mu(n: u64, bits: u32) -> Result<Float> {
    check_domain(n)?;
    Ok(ratio_pow(n - 2, n - 1, n - 1, bits) * n)
}

/// `P(two fixed players both survive) = (1 - 1/(n-1))^2 (1 - 2/(n-1))^(n-2)`.
fn pair_survival(n: u64, bits: u32) -> Float {
    if n < 3 {
        return Float::new(bits);
    }
    let first = ratio_pow(n - 2, n - 1, 2, bits);
    first * ratio_pow(n - 3, n - 1, n - 2, bits)
}

/// `E[Y(n)^2] = mu_n + (n^2 - n) P(two fixed players survive)`.
pub fn roulette_second_moment(n: u64, bits: u32) -> Result<Float> {
    let mu = roulette_mu(n, bits)?;
    let pairs = pair_survival(n, bits) * (n * (n - 1));
    Ok(mu + pairs)
}

/// `Var(Y(n)) = mu_n - mu_n^2 + (n^2 - n)(1 - 1/(n-1))^2 (1 - 2/(n-1))^(n-2)`.
pub fn roulette_sigma2(n: u64, bits: u32) -> Result<Float> {
    let mu = roulette_mu(n, bits)?;
    let mu_sq = Float::with_val(bits, mu.square_ref());
    let pairs = pair_survival(n, bits) * (n * (n - 1));
    Ok(mu - mu_sq + pairs)
}

/// `log2 S_s` for `s = 0..=n-2` (`S_{n-1} = S_n = 0`), in double precision.
fn log2_surviving_sets(n: u64, lf: &[f64]) -> Vec<f64> {
    let nf = n as f64;
    let base = nf * (nf - 1.0).log2();
    (0..=n - 2)
        .map(|s| {
            let r = (n - s) as f64;
            let falling = lf[n as usize] - lf[(n - s) as usize];
            let mut v = falling - lf[s as usize] - base;
            if s > 0 {
                v += s as f64 * r.log2();
            }
            v + r * (r - 1.0).log2()
        })
        .collect()
}

/// Magnitude table for the alternating sums of one row.
struct TermScale {
    /// `log2(s! S_s)`.
    scaled: Vec<f64>,
    lf: Vec<f64>,
    max_term: f64,
}

impl TermScale {
    fn new(n: u64) -> Self {
        let lf = log2_factorials(n as usize);
        let scaled: Vec<f64> = log2_surviving_sets(n, &lf)
            .into_iter()
            .enumerate()
            .map(|(s, v)| v + lf[s])
            .collect();
        let mut max_term = f64::NEG_INFINITY;
        for j in 0..scaled.len() {
            for s in j..scaled.len() {
                max_term = max_term.max(self_term(&scaled, &lf, s, j));
            }
        }
        Self {
            scaled,
            lf,
            max_term,
        }
    }

    /// `[lo, hi]` range of `s` whose terms for entry `j` exceed `floor`.
    fn kept_range(&self, j: usize, floor: f64) -> Option<(usize, usize)> {
        let mut lo = None;
        let mut hi = 0;
        for s in j..self.scaled.len() {
            if self_term(&self.scaled, &self.lf, s, j) >= floor {
                lo.get_or_insert(s);
                hi = s;
            }
        }
        lo.map(|lo| (lo, hi))
    }
}

/// `log2 |C(s,j) S_s| = log2(s! S_s) - log2((s-j)!) - log2(j!)`.
#[inline]
fn self_term(scaled: &[f64], lf: &[f64], s: usize, j: usize) -> f64 {
    scaled[s] - lf[s - j] - lf[j]
}

fn guard_bits(n: u64) -> u32 {
    (64 - n.leading_zeros()) + 8
}

/// Bits lost to cancellation when evaluating row `n` to absolute accuracy.
pub fn cancellation_bits(n: u64) -> u32 {
    if n < 3 {
        return 0;
    }
    let scale = TermScale::new(n);
    scale.max_term.max(0.0).ceil() as u32 + guard_bits(n)
}

/// Term tables for one row of the binomial-moment expansion at fixed
/// precision.
struct ExpansionRow {
    bits: u32,
    scale: TermScale,
    /// Terms below `2^floor` (in units of the final probability) are skipped.
    floor: f64,
    /// `s! S_s` for `s = 0..=n-2`.
    scaled: Vec<Float>,
    inv_fact: Vec<Float>,
}

impl ExpansionRow {
    fn new(n: u64, bits: u32) -> Self {
        let scale = TermScale::new(n);
        let floor = scale.max_term - f64::from(bits) - f64::from(guard_bits(n));

        // s! S_s = n!/(n-s)! * (n-s)^s (n-s-1)^(n-s) / (n-1)^n
        let denom = Float::with_val(bits, Float::u_pow_u((n - 1) as u32, n as u32));
        let mut falling = Float::with_val(bits, 1);
        let mut scaled = Vec::with_capacity(n as usize - 1);
        for s in 0..=n - 2 {
            if s > 0 {
                falling *= n - s + 1;
            }
            let r = n - s;
            let mut a = Float::with_val(bits, Float::u_pow_u(r as u32, s as u32));
            a *= Float::with_val(bits, Float::u_pow_u((r - 1) as u32, r as u32));
            a *= &falling;
            a /= &denom;
            scaled.push(a);
        }
        Self {
            bits,
            scale,
            floor,
            scaled,
            inv_fact: inverse_factorials(n as usize, bits),
        }
    }

    /// `P(Y = j)`. Each product is formed at just enough precision for its
    /// magnitude; MPFR truncates the wider operands.
    fn entry(&self, j: usize) -> Float {
        let bits = self.bits;
        let mut acc = Float::new(bits);
        let Some((lo, hi)) = self.scale.kept_range(j, self.floor) else {
            return acc;
        };
        let mut scratch: Vec<Option<Float>> = vec![None; (bits / 64) as usize + 1];
        for s in lo..=hi {
            let need = self_term(&self.scale.scaled, &self.scale.lf, s, j) - self.floor;
            let prec = round_up_to_limb((need.max(0.0).ceil() as u32).saturating_add(64)).min(bits);
            let tmp = scratch[(prec / 64) as usize].get_or_insert_with(|| Float::new(prec));
            tmp.assign(&self.scaled[s] * &self.inv_fact[s - j]);
            if (s - j) % 2 == 0 {
                acc += &*tmp;
            } else {
                acc -= &*tmp;
            }
        }
        acc *= &self.inv_fact[j];
        acc
    }
}

/// Law of `Y(n)` via the binomial-moment expansion at `bits` precision.
///
/// The absolute error of every entry is about `2^(M - bits)` where `M` is the
/// largest term magnitude (see [`cancellation_bits`]). Only a band of entries
/// around the mean is evaluated; the band is widened until the mass outside it,
/// certified as `|1 - sum(band)|`, is at the level of that rounding error.
/// Entries outside the band are exactly zero.
pub fn roulette_pmf(n: u64, bits: u32) -> Result<Pmf> {
    check_domain(n)?;
    let size = n as usize;
    let mut probs = vec![Float::new(bits); size + 1];
    if n == 2 {
        probs[0] = Float::with_val(bits, 1);
        return Ok(Pmf { n, bits, probs });
    }

    let row = ExpansionRow::new(n, bits);
    let last = size - 2;
    let noise_log2 = row.scale.max_term.max(0.0) - f64::from(bits) + f64::from(guard_bits(n));
    let drop_tol = Float::with_val(bits, noise_log2 + 8.0).exp2();

    // Gaussian width at which the tail reaches the noise level, with margin.
    let mu = roulette_mu(n, 128)?.to_f64();
    let sigma = roulette_sigma2(n, 128)?.to_f64().max(0.25).sqrt();
    let depth = (f64::from(bits) - row.scale.max_term.max(0.0)).max(16.0) + 16.0;
    let mut width = 1.25 * sigma * (2.0 * std::f64::consts::LN_2 * depth).sqrt() + 4.0;

    let mut done = vec![false; last + 1];
    loop {
        let lo = (mu - width).floor().max(0.0) as usize;
        let hi = ((mu + width).ceil() as usize).min(last);
        let todo: Vec<usize> = (lo..=hi).filter(|&j| !done[j]).collect();
        let fresh: Vec<(usize, Float)> = todo.into_par_iter().map(|j| (j, row.entry(j))).collect();
        for (j, p) in fresh {
            probs[j] = p;
            done[j] = true;
        }
        if lo == 0 && hi == last {
            break;
        }
        let total = Float::with_val(bits, Float::sum(probs.iter()));
        let outside = Float::with_val(bits, total - 1u32).abs();
        if outside <= drop_tol {
            break;
        }
        width *= 1.5;
    }
    Ok(Pmf { n, bits, probs })
}

/// Probabilities `q(n,k)`, `k = 0..=n`, that a fixed `k`-set is exactly the
/// set of players killed in one round. `q[0] = q[1] = 0`.
#[derive(Debug, Clone)]
pub struct KillSubsetRow {
    pub n: u64,
    pub bits: u32,
    pub q: Vec<Float>,
    /// `|sum_k C(n,k) q[k] - 1|` before clamping.
    pub normalization_residual: f64,
    /// Relative error of the implied mean against `roulette_mu`.
    pub mean_residual: f64,
}

impl KillSubsetRow {
    /// `P(Y(n) = j) = C(n,j) q(n, n-j)`.
    pub fn to_pmf(&self) -> Pmf {
        let bits = self.bits;
        let n = self.n as usize;
        let mut probs = vec![Float::new(bits); n + 1];
        let mut binom = Float::with_val(bits, 1);
        for (j, p) in probs.iter_mut().enumerate() {
            p.assign(&binom * &self.q[n - j]);
            binom *= (n - j) as u64;
            binom /= (j + 1) as u64;
        }
        Pmf {
            n: self.n,
            bits,
            probs,
        }
    }
}

fn subset_recursion(n: u64, bits: u32) -> Vec<Float> {
    let size = n as usize;
    let mut q = vec![Float::new(bits); size + 1];
    let denom = Float::with_val(bits, Float::u_pow_u((n - 1) as u32, n as u32));
    // Pascal row C(k, i), updated in place as k grows.
    let mut pascal = vec![Float::new(bits); size + 1];
    pascal[0] = Float::with_val(bits, 1);
    pascal[1] = Float::with_val(bits, 1);
    let mut tmp = Float::new(bits);
    for k in 2..=size {
        for i in (1..k).rev() {
            let (lo, hi) = pascal.split_at_mut(i);
            hi[0] += &lo[i - 1];
        }
        pascal[k] = Float::with_val(bits, 1);

        let ku = k as u64;
        let mut f = Float::with_val(bits, Float::u_pow_u((ku - 1) as u32, ku as u32));
        f *= Float::with_val(bits, Float::u_pow_u(ku as u32, (n - ku) as u32));
        f /= &denom;
        for i in 2..k {
            tmp.assign(&pascal[i] * &q[i]);
            f -= &tmp;
        }
        q[k] = f;
    }
    q
}

/// Runs the subset recursion for one row, escalating precision until the row
/// normalizes and reproduces `E[Y(n)]`.
pub fn kill_subset_row(n: u64, precision: &PrecisionConfig) -> Result<KillSubsetRow> {
    check_domain(n)?;
    precision.validate()?;
    let hint = precision.initial_bits.saturating_add(cancellation_bits(n));
    let mut bits = round_up_to_limb(hint).min(precision.max_bits);
    loop {
        let q = subset_recursion(n, bits);
        let mut row = KillSubsetRow {
            n,
            bits,
            q,
            normalization_residual: 0.0,
            mean_residual: 0.0,
        };
        let pmf = row.to_pmf();
        let total = pmf.total();
        row.normalization_residual = Float::with_val(bits, total - 1u32).to_f64().abs();
        let mean = pmf.moments().mean;
        let mu = roulette_mu(n, bits)?;
        let scale = if mu > 1 {
            mu.clone()
        } else {
            Float::with_val(bits, 1)
        };
        row.mean_residual = Float::with_val(bits, (mean - &mu) / &scale).to_f64().abs();
        let negative = row.q.iter().map(Float::to_f64).fold(0.0f64, f64::min);
        let ok = row.normalization_residual < precision.normalization_tol
            && row.mean_residual < precision.moment_tol
            && negative >= -PrecisionConfig::negativity_tol(bits);
        if ok {
            for v in &mut row.q {
                if v.is_sign_negative() && !v.is_zero() {
                    *v = Float::new(bits);
                }
            }
            return Ok(row);
        }
        if bits >= precision.max_bits {
            return Err(Error::PrecisionExhausted {
                n,
                bits,
                residual: row.normalization_residual.max(row.mean_residual),
            });
        }
        bits = bits
            .saturating_mul(precision.escalation_factor)
            .min(precision.max_bits);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Float, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol
    }

    #[test]
    fn mu_small_cases() {
        assert!(roulette_mu(2, 128).unwrap().is_zero());
        assert!(close(&roulette_mu(3, 128).unwrap(), 0.75, 1e-30));
        assert!(close(&roulette_mu(4, 128).unwrap(), 32.0 / 27.0, 1e-15));
        assert!(roulette_mu(1, 128).is_err());
    }

    #[test]
    fn sigma2_small_cases() {
        assert!(roulette_sigma2(2, 128).unwrap().is_zero());
        assert!(close(&roulette_sigma2(3, 128).unwrap(), 0.1875, 1e-30));
        assert!(roulette_sigma2(0, 128).is_err());
    }

    #[test]
    fn kill_row_small_cases() {
        let cfg = PrecisionConfig::default();
        let row = kill_subset_row(2, &cfg).unwrap();
        assert_eq!(
            row.q.iter().map(Float::to_f64).collect::<Vec<_>>(),
            vec![0.0, 0.0, 1.0]
        );
        let row = kill_subset_row(3, &cfg).unwrap();
        let q: Vec<f64> = row.q.iter().map(Float::to_f64).collect();
        assert_eq!(q, vec![0.0, 0.0, 0.25, 0.25]);
    }

    #[test]
    fn pmf_n3_and_n2() {
        let pmf = roulette_pmf(3, 256).unwrap();
        assert_eq!(pmf.to_f64(), vec![0.25, 0.75, 0.0, 0.0]);
        let pmf = roulette_pmf(2, 256).unwrap();
        assert_eq!(pmf.to_f64(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn routes_agree() {
        let cfg = PrecisionConfig::default();
        for n in [4u64, 7, 25, 80, 150] {
            let row = kill_subset_row(n, &cfg).unwrap();
            let bits = row.bits;
            let a = row.to_pmf();
            let b = roulette_pmf(n, bits).unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                let d = Float::with_val(bits, x - y).to_f64().abs();
                assert!(d < 1e-60, "n={n} diff {d:e}");
            }
        }
    }

    #[test]
    fn cancellation_grows_linearly() {
        let b500 = cancellation_bits(500) as f64;
        let b1000 = cancellation_bits(1000) as f64;
        assert!((b500 / 500.0 - 0.66).abs() < 0.05, "{b500}");
        assert!((b1000 / 1000.0 - 0.67).abs() < 0.03, "{b1000}");
    }

    #[test]
    fn insufficient_precision_is_detected() {
        // 256 bits cannot absorb the ~400-bit cancellation at n = 600.
        let pmf = roulette_pmf(600, 256).unwrap();
        let mu = roulette_mu(600, 256).unwrap();
        let mean = pmf.moments().mean;
        let rel = Float::with_val(256, (mean - &mu) / &mu).to_f64().abs();
        assert!(rel > 1e-15 || pmf.min_entry() < -1e-30);
        let cfg = PrecisionConfig {
            initial_bits: 64,
            max_bits: 128,
            ..PrecisionConfig::default()
        };
        assert!(matches!(
            kill_subset_row(400, &cfg),
            Err(Error::PrecisionExhausted { n: 400, .. })
        ));
    }
}
