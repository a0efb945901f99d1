use std::fmt;

use rug::Float;

use super::{DriftParameters, Pmf, TransitionKernel};
use crate::error::{Error, Result};

type PmfFn = dyn Fn(u64, u32) -> Vec<Float> + Send + Sync;

/// A kernel defined by a closure returning the law of `Y(n)` on
/// `{0, ..., n}` (or `{0, ..., n-1}`; a missing last entry is zero).
pub struct CustomKernel {
    name: String,
    boundary: Vec<f64>,
    pmf: Box<PmfFn>,
    drift: Option<DriftParameters>,
}

impl CustomKernel {
    /// `boundary[n]` is `p(n)` for `n <= n0 = boundary.len() - 1`.
    pub fn new<F>(name: impl Into<String>, boundary: Vec<f64>, pmf: F) -> Result<Self>
    where
        F: Fn(u64, u32) -> Vec<Float> + Send + Sync + 'static,
    {
        if boundary.is_empty() {
            return Err(Error::Config("a kernel needs at least p(0)".into()));
        }
        Ok(Self {
            name: name.into(),
            boundary,
            pmf: Box::new(pmf),
            drift: None,
        })
    }

    pub fn with_drift(mut self, drift: DriftParameters) -> Self {
        self.drift = Some(drift);
        self
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("n0", &self.n0())
            .finish()
    }
}

impl TransitionKernel for CustomKernel {
    fn name(&self) -> &str {
        &self.name
    }

    fn n0(&self) -> u64 {
        self.boundary.len() as u64 - 1
    }

    fn boundary_value(&self, n: u64) -> f64 {
        self.boundary[n as usize]
    }

    fn pmf(&self, n: u64, bits: u32) -> Result<Pmf> {
        let mut probs = (self.pmf)(n, bits);
        if probs.len() > n as usize + 1 {
            return Err(Error::Domain(format!(
                "kernel `{}` put mass above n = {n}",
                self.name
            )));
        }
        probs.resize(n as usize + 1, Float::new(bits));
        for p in &mut probs {
            if p.prec() != bits {
                p.set_prec(bits);
            }
        }
        Ok(Pmf { n, bits, probs })
    }

    fn drift(&self) -> Option<DriftParameters> {
        self.drift
    }
}
