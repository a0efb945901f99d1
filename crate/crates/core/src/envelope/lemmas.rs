//! Numerical checks of the moment lemmas on exact pushforward laws.
//!
//! * `|E[X_k] - alpha^k X_0| <= beta / (1 - alpha)`
//! * `Var(X_k) <= C alpha^(kp) X_0^p + D`
//! * `P(|Z_i - x| <= t + k) >= 1 - tau^2 / (tau + k)^2` for `Z_i` the state
//!   after `i` rounds from `N_i = [x / alpha^i]`.

use rug::Float;
use serde::{Deserialize, Serialize};

use super::{ContractionConstants, Rounding};
use crate::engine::pushforward::{law_mean_variance, TransitionMatrix};
use crate::error::Result;
use crate::kernels::{DriftParameters, TransitionKernel};

/// Relative room for the double-precision constants.
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaRow {
    pub k: u32,
    pub value: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub name: String,
    pub n: u64,
    pub rows: Vec<LemmaRow>,
    pub pass: bool,
}

fn report(name: &str, n: u64, rows: Vec<LemmaRow>) -> LemmaReport {
    let pass = rows.iter().all(|r| r.ok);
    LemmaReport {
        name: name.to_string(),
        n,
        rows,
        pass,
    }
}

fn laws(matrix: &TransitionMatrix, n: u64, k_max: u32) -> Result<Vec<Vec<Float>>> {
    let mut out = vec![matrix.pushforward(n, 0)?];
    for _ in 0..k_max {
        let next = matrix.forward(out.last().expect("nonempty"));
        out.push(next);
    }
    Ok(out)
}

pub fn expectation_bound_check(
    kernel: &dyn TransitionKernel,
    drift: &DriftParameters,
    n: u64,
    k_max: u32,
) -> Result<LemmaReport> {
    let m = TransitionMatrix::new(kernel, n, 256)?;
    expectation_bound_check_with(&m, drift, n, k_max)
}

pub fn expectation_bound_check_with(
    matrix: &TransitionMatrix,
    drift: &DriftParameters,
    n: u64,
    k_max: u32,
) -> Result<LemmaReport> {
    let bound = drift.beta / (1.0 - drift.alpha);
    let rows = laws(matrix, n, k_max)?
        .iter()
        .enumerate()
        .map(|(k, law)| {
            let (mean, _) = law_mean_variance(law);
            let target = drift.alpha.powi(k as i32) * n as f64;
            let value = (mean.to_f64() - target).abs();
            LemmaRow {
                k: k as u32,
                value,
                bound,
                ok: value <= bound * (1.0 + SLACK) + SLACK,
            }
        })
        .collect();
    Ok(report("expectation", n, rows))
}

pub fn variance_bound_check(
    kernel: &dyn TransitionKernel,
    consts: &ContractionConstants,
    n: u64,
    k_max: u32,
) -> Result<LemmaReport> {
    let m = TransitionMatrix::new(kernel, n, 256)?;
    variance_bound_check_with(&m, consts, n, k_max)
}

pub fn variance_bound_check_with(
    matrix: &TransitionMatrix,
    consts: &ContractionConstants,
    n: u64,
    k_max: u32,
) -> Result<LemmaReport> {
    let a = consts.drift.alpha;
    let p = consts.drift.p_exponent;
    let rows = laws(matrix, n, k_max)?
        .iter()
        .enumerate()
        .map(|(k, law)| {
            let (_, var) = law_mean_variance(law);
            let bound = consts.c * (a.powi(k as i32) * n as f64).powf(p) + consts.d;
            let value = var.to_f64();
            LemmaRow {
                k: k as u32,
                value,
                bound,
                ok: value <= bound * (1.0 + SLACK),
            }
        })
        .collect();
    Ok(report("variance", n, rows))
}

/// Both lemma checks for every start `n <= matrix.size` at once, by iterating
/// the transition matrix on `f(m) = m` and `f(m) = m^2`. Returns the starts
/// (and `k`) where a bound fails; empty means all pass.
pub fn lemma_sweep(
    matrix: &TransitionMatrix,
    consts: &ContractionConstants,
    k_max: u32,
) -> Vec<(u64, u32, &'static str)> {
    let bits = matrix.bits;
    let size = matrix.size as usize;
    let d = &consts.drift;
    let mut first: Vec<Float> = (0..=size).map(|m| Float::with_val(bits, m)).collect();
    let mut second: Vec<Float> = (0..=size).map(|m| Float::with_val(bits, m * m)).collect();
    let mean_bound = d.beta / (1.0 - d.alpha) * (1.0 + SLACK) + SLACK;
    let mut failures = Vec::new();
    for k in 0..=k_max {
        if k > 0 {
            first = matrix.backward(&first);
            second = matrix.backward(&second);
        }
        let ak = d.alpha.powi(k as i32);
        for n in 0..=size {
            let mean = &first[n];
            let var = Float::with_val(bits, &second[n] - Float::with_val(bits, mean.square_ref()));
            if (mean.to_f64() - ak * n as f64).abs() > mean_bound {
                failures.push((n as u64, k, "expectation"));
            }
            let bound = consts.c * (ak * n as f64).powf(d.p_exponent) + consts.d;
            if var.to_f64() > bound * (1.0 + SLACK) {
                failures.push((n as u64, k, "variance"));
            }
        }
    }
    failures
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChebyshevRow {
    pub i: u32,
    pub n_i: u64,
    pub k: u64,
    pub probability: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Checks `P(|Z_i - x| <= t + k) >= 1 - tau^2/(tau+k)^2` for every `i` with
/// `N_i <= matrix.size` and `k <= k_max`.
pub fn chebyshev_check(
    matrix: &TransitionMatrix,
    consts: &ContractionConstants,
    x: f64,
    k_max: u64,
) -> Result<Vec<ChebyshevRow>> {
    let tau = consts.tau(x);
    let t = consts.t_from_tau(tau);
    let inv = 1.0 / consts.drift.alpha;
    let mut rows = Vec::new();
    for i in 0u32.. {
        let n_i = Rounding::HalfAwayFromZero.apply(x * inv.powi(i as i32));
        if n_i > matrix.size as f64 {
            break;
        }
        let law = matrix.pushforward(n_i as u64, i)?;
        for k in 0..=k_max {
            let r = t + k as f64;
            let mut mass = Float::new(matrix.bits);
            for (m, w) in law.iter().enumerate() {
                if (m as f64 - x).abs() <= r {
                    mass += w;
                }
            }
            let probability = mass.to_f64();
            let bound = 1.0 - super::tail_mass(tau, k);
            rows.push(ChebyshevRow {
                i,
                n_i: n_i as u64,
                k,
                probability,
                bound,
                ok: probability >= bound - SLACK,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{contraction_constants, DEFAULT_K};
    use crate::kernels::{CustomKernel, RouletteKernel};

    #[test]
    fn roulette_lemmas_at_100() {
        let drift = DriftParameters::roulette();
        let c = contraction_constants(&drift, DEFAULT_K).unwrap();
        let m = TransitionMatrix::new(&RouletteKernel, 100, 256).unwrap();
        let e = expectation_bound_check_with(&m, &drift, 100, 8).unwrap();
        assert!(e.pass);
        assert_eq!(e.rows[0].value, 0.0);
        let v = variance_bound_check_with(&m, &c, 100, 8).unwrap();
        assert!(v.pass);
        assert_eq!(v.rows[0].value, 0.0);
        assert!(lemma_sweep(&m, &c, 8).is_empty());
    }

    #[test]
    fn deterministic_kernel_has_no_variance() {
        // Y(n) = floor(n/2): |E - n/2| <= 1/2.
        let k = CustomKernel::new("half", vec![0.0, 1.0], |n, bits| {
            let mut v = vec![Float::new(bits); n as usize];
            v[(n / 2) as usize] = Float::with_val(bits, 1);
            v
        })
        .unwrap();
        let drift = DriftParameters::new(0.5, 0.5, 0.0, 0.0).unwrap();
        let c = contraction_constants(&drift, 10.0).unwrap();
        let r = variance_bound_check(&k, &c, 77, 6).unwrap();
        assert!(r.pass && r.rows.iter().all(|r| r.value == 0.0));
        assert!(expectation_bound_check(&k, &drift, 77, 6).unwrap().pass);
    }

    #[test]
    fn chebyshev_holds_for_roulette() {
        let c = contraction_constants(&DriftParameters::roulette(), DEFAULT_K).unwrap();
        let m = TransitionMatrix::new(&RouletteKernel, 300, 256).unwrap();
        let rows = chebyshev_check(&m, &c, 37.0, 20).unwrap();
        assert!(rows.len() > 40);
        assert!(rows.iter().all(|r| r.ok));
    }
}
