//! Transition kernels `Y(n)`: the one-round laws that drive a
//! self-averaging sequence `p(n) = E[p(Y(n))]`.
//!
//! A kernel supplies the starting values `p(0..=n0)`, the law of `Y(n)` for
//! `n > n0` at a requested working precision, and optionally closed-form
//! moments and published drift parameters. For `n <= n0` the law is the
//! point mass at `n`.

mod coinflip;
mod custom;
mod drift;
mod parity;
pub mod roulette;

use std::str::FromStr;
use std::sync::Arc;

use rug::{Assign, Float};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use coinflip::CoinflipKernel;
pub use custom::CustomKernel;
pub use drift::{verify_drift, DriftParameters, DriftReport, DriftRow, MomentSource};
pub use parity::ParityKernel;
pub use roulette::{
    kill_subset_row, roulette_mu, roulette_pmf, roulette_second_moment, roulette_sigma2,
    KillSubsetRow, RouletteKernel,
};

/// First and second raw moments `E[Y]`, `E[Y^2]`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: Float,
    pub second: Float,
}

impl Moments {
    pub fn variance(&self) -> Float {
        let bits = self.mean.prec().max(self.second.prec());
        let sq = Float::with_val(bits, self.mean.square_ref());
        Float::with_val(bits, &self.second - &sq)
    }
}

/// Law of `Y(n)` on `{0, ..., n}`.
///
/// Index `n` is kept so that kernels whose published form puts mass on
/// `Y(n) = n` (the parity example) can be represented verbatim; see
/// [`Pmf::support_violation`].
#[derive(Debug, Clone)]
pub struct Pmf {
    pub n: u64,
    pub bits: u32,
    pub probs: Vec<Float>,
}

impl Pmf {
    pub fn point_mass(n: u64, bits: u32) -> Self {
        let mut probs = vec![Float::new(bits); n as usize + 1];
        probs[n as usize] = Float::with_val(bits, 1);
        Self { n, bits, probs }
    }

    pub fn total(&self) -> Float {
        Float::with_val(self.bits, Float::sum(self.probs.iter()))
    }

    pub fn moments(&self) -> Moments {
        let mut mean = Float::new(self.bits);
        let mut second = Float::new(self.bits);
        let mut tmp = Float::new(self.bits);
        for (k, p) in self.probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            tmp.assign(p * (k as u64));
            mean += &tmp;
            tmp *= k as u64;
            second += &tmp;
        }
        Moments { mean, second }
    }

    /// Smallest entry, as a double.
    pub fn min_entry(&self) -> f64 {
        self.probs
            .iter()
            .map(Float::to_f64)
            .fold(f64::INFINITY, f64::min)
    }

    /// Mass on `Y(n) = n`, which the general setting excludes for `n > n0`.
    pub fn self_mass(&self) -> &Float {
        &self.probs[self.n as usize]
    }

    pub fn support_violation(&self) -> bool {
        !self.self_mass().is_zero()
    }

    pub fn clamp_negatives(&mut self) {
        for p in &mut self.probs {
            if p.is_sign_negative() && !p.is_zero() {
                *p = Float::new(p.prec());
            }
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(Float::to_f64).collect()
    }
}

/// A family of one-round laws `Y(n)`.
///
/// Implementations must be pure: the same `(n, bits)` always yields the same
/// law, and evaluation may happen concurrently from several threads.
pub trait TransitionKernel: Send + Sync {
    fn name(&self) -> &str;

    /// Largest index whose value is given as a starting value.
    fn n0(&self) -> u64;

    /// Starting value `p(n)` for `n <= n0`.
    fn boundary_value(&self, n: u64) -> f64;

    /// Law of `Y(n)` for `n > n0`, evaluated at `bits` of working precision.
    fn pmf(&self, n: u64, bits: u32) -> Result<Pmf>;

    /// Bits expected to be lost to cancellation when evaluating `pmf(n)`.
    fn cancellation_bits(&self, _n: u64) -> u32 {
        0
    }

    /// Exact `E[Y(n)]` and `E[Y(n)^2]` when known in closed form.
    fn closed_form_moments(&self, _n: u64, _bits: u32) -> Option<Moments> {
        None
    }

    /// Drift parameters known to hold for this kernel.
    fn drift(&self) -> Option<DriftParameters> {
        None
    }

    /// Law of `Y(n)` including the degenerate convention `Y(n) = n` for
    /// `n <= n0`.
    fn law(&self, n: u64, bits: u32) -> Result<Pmf> {
        if n <= self.n0() {
            Ok(Pmf::point_mass(n, bits))
        } else {
            self.pmf(n, bits)
        }
    }
}

/// Built-in kernels selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Roulette,
    Coinflip,
    Parity,
}

impl KernelName {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelName::Roulette => "roulette",
            KernelName::Coinflip => "coinflip",
            KernelName::Parity => "parity",
        }
    }

    pub fn kernel(self) -> Arc<dyn TransitionKernel> {
        match self {
            KernelName::Roulette => Arc::new(RouletteKernel),
            KernelName::Coinflip => Arc::new(CoinflipKernel),
            KernelName::Parity => Arc::new(ParityKernel),
        }
    }
}

impl FromStr for KernelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "roulette" => Ok(KernelName::Roulette),
            "coinflip" => Ok(KernelName::Coinflip),
            "parity" => Ok(KernelName::Parity),
            _ => Err(Error::UnknownKernel(s.to_string())),
        }
    }
}

impl std::fmt::Display for KernelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Looks up a built-in kernel by name.
pub fn kernel_by_name(name: &str) -> Result<Arc<dyn TransitionKernel>> {
    Ok(name.parse::<KernelName>()?.kernel())
}

/// Binomial(m, 1/2) probabilities `C(m, i) / 2^m`, `i = 0..=m`.
pub(crate) fn half_binomial_row(m: u64, bits: u32) -> Vec<Float> {
    let mut row = Vec::with_capacity(m as usize + 1);
    let mut cur = Float::with_val(bits, 1);
    cur >>= m as u32;
    for i in 0..=m {
        row.push(cur.clone());
        if i < m {
            cur *= m - i;
            cur /= i + 1;
        }
    }
    row
}
