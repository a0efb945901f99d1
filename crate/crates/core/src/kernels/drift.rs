use rug::Float;
use serde::{Deserialize, Serialize};

use super::TransitionKernel;
use crate::error::{Error, Result};

/// Constants in `|E[Y(n)] - alpha n| <= beta` and
/// `Var(Y(n)) <= gamma n^p + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParameters {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Variance growth exponent `p`; 1 for the base setting.
    pub p_exponent: f64,
}

impl DriftParameters {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let d = Self {
            alpha,
            beta,
            gamma,
            delta,
            p_exponent: 1.0,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_exponent(mut self, p: f64) -> Result<Self> {
        self.p_exponent = p;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha < 1.0
            && self.beta >= 0.0
            && self.gamma >= 0.0
            && self.delta >= 0.0
            && self.p_exponent >= 1.0
            && self.p_exponent < 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid drift parameters {self:?}")))
        }
    }

    /// `alpha = 1/e, beta = 2/e, gamma = (e-2)/e^2, delta = (3-e)/(2e^2)`.
    pub fn roulette() -> Self {
        let e = std::f64::consts::E;
        Self {
            alpha: 1.0 / e,
            beta: 2.0 / e,
            gamma: (e - 2.0) / (e * e),
            delta: (3.0 - e) / (2.0 * e * e),
            p_exponent: 1.0,
        }
    }

    pub fn parity() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.5,
            delta: 0.0,
            p_exponent: 1.0,
        }
    }

    /// `|E[Y] - n/2| = n / (2(2^n - 1)) <= 1/3` and `Var(Y) <= n/4`.
    pub fn coinflip() -> Self {
        Self {
            alpha: 0.5,
            beta: 1.0 / 3.0,
            gamma: 0.25,
            delta: 0.0,
            p_exponent: 1.0,
        }
    }
}

/// Where the per-`n` moments in a [`DriftReport`] come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    /// Closed forms when the kernel has them, otherwise the pmf.
    Auto,
    Pmf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftRow {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    pub kernel: String,
    pub params: DriftParameters,
    pub rows: Vec<DriftRow>,
    pub pass: bool,
}

impl DriftReport {
    pub fn failures(&self) -> impl Iterator<Item = &DriftRow> {
        self.rows.iter().filter(|r| !(r.mean_ok && r.variance_ok))
    }
}

/// The parameters are doubles approximating irrational constants; right-hand
/// sides get this much relative room for that representation error.
const PARAM_SLACK: f64 = 1e-12;

/// Checks both drift inequalities for every `n` in `n_range` above `n0`.
pub fn verify_drift(
    kernel: &dyn TransitionKernel,
    params: &DriftParameters,
    n_range: std::ops::RangeInclusive<u64>,
    source: MomentSource,
    bits: u32,
) -> Result<DriftReport> {
    params.validate()?;
    let mut rows = Vec::new();
    for n in n_range {
        if n <= kernel.n0() {
            continue;
        }
        let moments = match source {
            MomentSource::Auto => match kernel.closed_form_moments(n, bits) {
                Some(m) => m,
                None => law_moments(kernel, n, bits)?,
            },
            MomentSource::Pmf => law_moments(kernel, n, bits)?,
        };
        let var = moments.variance();
        let drift = Float::with_val(
            bits,
            &moments.mean - Float::with_val(bits, params.alpha) * n,
        );
        let mean_gap = drift.abs().to_f64();
        let mean_ok = mean_gap <= params.beta * (1.0 + PARAM_SLACK);
        let nf = n as f64;
        let var_bound = params.gamma * nf.powf(params.p_exponent) + params.delta;
        let variance = var.to_f64();
        let variance_ok = variance <= var_bound * (1.0 + PARAM_SLACK);
        rows.push(DriftRow {
            n,
            mean: moments.mean.to_f64(),
            variance,
            mean_ok,
            variance_ok,
        });
    }
    let pass = rows.iter().all(|r| r.mean_ok && r.variance_ok);
    Ok(DriftReport {
        kernel: kernel.name().to_string(),
        params: *params,
        rows,
        pass,
    })
}

fn law_moments(kernel: &dyn TransitionKernel, n: u64, base_bits: u32) -> Result<super::Moments> {
    let bits = base_bits.saturating_add(kernel.cancellation_bits(n));
    Ok(kernel.pmf(n, bits)?.moments())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CoinflipKernel, ParityKernel, RouletteKernel};

    #[test]
    fn roulette_constants_hold() {
        let r = verify_drift(
            &RouletteKernel,
            &DriftParameters::roulette(),
            2..=300,
            MomentSource::Auto,
            256,
        )
        .unwrap();
        assert!(r.pass);
        assert_eq!(r.rows.len(), 299);
    }

    #[test]
    fn zero_beta_fails_at_small_n() {
        let mut p = DriftParameters::roulette();
        p.beta = 0.0;
        let r = verify_drift(&RouletteKernel, &p, 2..=10, MomentSource::Auto, 256).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failures().next().unwrap().n, 2);
    }

    #[test]
    fn parity_and_coinflip() {
        let r = verify_drift(
            &ParityKernel,
            &DriftParameters::parity(),
            0..=200,
            MomentSource::Pmf,
            128,
        )
        .unwrap();
        assert!(r.pass);
        let r = verify_drift(
            &CoinflipKernel,
            &DriftParameters::coinflip(),
            2..=300,
            MomentSource::Auto,
            256,
        )
        .unwrap();
        assert!(r.pass);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DriftParameters::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(DriftParameters::new(0.5, -1.0, 0.0, 0.0).is_err());
        assert!(DriftParameters::parity().with_exponent(2.0).is_err());
        assert!(DriftParameters::parity().with_exponent(1.5).is_ok());
    }
}
