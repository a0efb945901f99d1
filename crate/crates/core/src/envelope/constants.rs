//! Constants `(K, C, D)` with `Var(X_k) <= C alpha^(kp) X_0^p + D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::DriftParameters;

/// The tuning constant used for group Russian roulette.
pub const DEFAULT_K: f64 = 138.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub drift: DriftParameters,
}

impl ContractionConstants {
    /// `tau(x)^2 = C (x + alpha/2)^p + D` bounds the variance of every `Z_i`.
    pub fn tau(&self, x: f64) -> f64 {
        let a = self.drift.alpha;
        (self.c * (x + a / 2.0).powf(self.drift.p_exponent) + self.d).sqrt()
    }

    /// `t = tau + beta/(1-alpha) + 1/2`.
    pub fn t(&self, x: f64) -> f64 {
        self.t_from_tau(self.tau(x))
    }

    pub fn t_from_tau(&self, tau: f64) -> f64 {
        tau + self.drift.beta / (1.0 - self.drift.alpha) + 0.5
    }

    /// Right-hand sides of the two induction inequalities at `(C, D)`:
    /// `(C', D')` with the step valid iff `C' <= C` and `D' <= D`.
    pub fn induction_step(&self) -> (f64, f64) {
        induction_step(&self.drift, self.k, self.c, self.d)
    }
}

/// `(C', D')` such that `Var(X_k) <= C a^(kp) X_0^p + D` implies
/// `Var(X_{k+1}) <= C' a^((k+1)p) X_0^p + D'`.
///
/// For `p = 1` this is the sharp linear step; otherwise the step used for
/// general `p`, which pays a factor 2 on both variance terms.
pub fn induction_step(drift: &DriftParameters, k: f64, c: f64, d: f64) -> (f64, f64) {
    step(drift, k, c, d, drift.p_exponent != 1.0)
}

fn step(drift: &DriftParameters, k: f64, c: f64, d: f64, general: bool) -> (f64, f64) {
    let DriftParameters {
        alpha: a,
        beta: b,
        gamma: g,
        delta: dl,
        p_exponent: p,
    } = *drift;
    let denom = a * a * k - b * b;
    let shrink_c = a.powf(4.0 - p) * k / denom;
    let shrink_d = a.powi(4) * k / denom;
    if !general {
        (
            g / a + c * shrink_c,
            g * b / (1.0 - a) + dl + a * a * k + d * shrink_d,
        )
    } else {
        (
            2.0 * g * a.powf(-p) * (1.0 + c.sqrt()).powf(p) + c * shrink_c,
            2.0 * g * ((c + d).sqrt() + b / (1.0 - a)).powf(p) + dl + a * a * k + d * shrink_d,
        )
    }
}

/// Smallest admissible `K` (exclusive): `beta^2 / (alpha^2 - alpha^(4-p))`.
pub fn k_threshold(drift: &DriftParameters) -> f64 {
    let a = drift.alpha;
    let b = drift.beta;
    b * b / (a * a - a.powf(4.0 - drift.p_exponent))
}

fn check_k(drift: &DriftParameters, k: f64) -> Result<()> {
    drift.validate()?;
    let threshold = k_threshold(drift);
    // beta = 0 makes the threshold 0 but K must still be positive.
    if !(k.is_finite() && k > threshold && k > 0.0) {
        return Err(Error::InfeasibleK { k, threshold });
    }
    Ok(())
}

/// Minimal `(C, D)` for variance growth exponent 1:
///
/// `C = (g a^2 K - g b^2) / (a^3 K - a^4 K - a b^2)`,
/// `D = (g b + (d + a^2 K)(1 - a)) (a^2 K - b^2) / ((1 - a)(a^2 K - b^2 - a^4 K))`.
pub fn contraction_constants(drift: &DriftParameters, k: f64) -> Result<ContractionConstants> {
    if drift.p_exponent != 1.0 {
        return Err(Error::Config(format!(
            "closed-form constants need p_exponent = 1, got {}; use generalized_constants_search",
            drift.p_exponent
        )));
    }
    check_k(drift, k)?;
    let DriftParameters {
        alpha: a,
        beta: b,
        gamma: g,
        delta: dl,
        ..
    } = *drift;
    let a2k = a * a * k;
    let c = (g * a2k - g * b * b) / (a.powi(3) * k - a.powi(4) * k - a * b * b);
    let d = (g * b + (dl + a2k) * (1.0 - a)) * (a2k - b * b)
        / ((1.0 - a) * (a2k - b * b - a.powi(4) * k));
    Ok(ContractionConstants {
        k,
        c,
        d,
        drift: *drift,
    })
}

/// Root of an increasing-past-its-root function by doubling then bisection.
fn bisect_root<F: Fn(f64) -> f64>(f: F, what: &str) -> Result<f64> {
    let mut hi = 1.0;
    let mut steps = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > 2000 || !hi.is_finite() {
            return Err(Error::SearchFailed(format!("no feasible {what} found")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `(C, D)` for variance growth `gamma n^p + delta`, `1 <= p < 2`.
///
/// `C` is the least solution of `2 g a^-p (1 + sqrt C)^p + c C <= C` with
/// `c = a^(4-p) K / (a^2 K - b^2)`, found by bisection on `sqrt C`. `D` is then
/// the least solution of
/// `2 g (sqrt(C + D) + b/(1-a))^p + d + a^2 K + c' D <= D` with
/// `c' = a^4 K / (a^2 K - b^2)`. Both sides have a single crossing, so
/// bisection finds the minimum. When `g = 0` the `C` condition is void and the
/// smallest positive double is returned for `C`.
pub fn generalized_constants_search(
    drift: &DriftParameters,
    k: f64,
) -> Result<ContractionConstants> {
    check_k(drift, k)?;
    let DriftParameters {
        alpha: a,
        beta: b,
        gamma: g,
        delta: dl,
        p_exponent: p,
    } = *drift;
    let denom = a * a * k - b * b;
    let shrink_c = a.powf(4.0 - p) * k / denom;
    let shrink_d = a.powi(4) * k / denom;

    let c = if g == 0.0 {
        f64::EPSILON
    } else {
        let s = bisect_root(
            |s| (1.0 - shrink_c) * s * s - 2.0 * g * a.powf(-p) * (1.0 + s).powf(p),
            "C",
        )?;
        s * s
    };
    let d = bisect_root(
        |d| {
            (1.0 - shrink_d) * d
                - 2.0 * g * ((c + d).sqrt() + b / (1.0 - a)).powf(p)
                - dl
                - a * a * k
        },
        "D",
    )?;
    let consts = ContractionConstants {
        k,
        c,
        d,
        drift: *drift,
    };
    let (c2, d2) = step(drift, k, c, d, true);
    if !(c2 <= c * (1.0 + 1e-9) && d2 <= d * (1.0 + 1e-9)) {
        return Err(Error::SearchFailed(format!(
            "bisection ended at C = {c}, D = {d} but the step gives ({c2}, {d2})"
        )));
    }
    Ok(consts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roulette_threshold_and_constants() {
        let d = DriftParameters::roulette();
        let e = std::f64::consts::E;
        assert!((k_threshold(&d) - 4.0 * e / (e - 1.0)).abs() < 1e-12);
        let c = contraction_constants(&d, DEFAULT_K).unwrap();
        assert!(c.c > 0.0 && c.d > 0.0);
        let (c2, d2) = c.induction_step();
        assert!((c2 - c.c).abs() < 1e-12 * c.c);
        assert!((d2 - c.d).abs() < 1e-12 * c.d);
        assert!(matches!(
            contraction_constants(&d, 6.0),
            Err(Error::InfeasibleK { .. })
        ));
    }

    #[test]
    fn zero_beta_simplifies() {
        let d = DriftParameters::new(0.5, 0.0, 1.0, 0.0).unwrap();
        for k in [0.5, 3.0, 100.0] {
            let c = contraction_constants(&d, k).unwrap();
            assert!((c.c - 4.0).abs() < 1e-12);
            assert!((c.d - 0.25 * k / 0.75).abs() < 1e-12 * c.d);
        }
    }

    #[test]
    fn generalized_near_one_dominates_closed_form() {
        let base = contraction_constants(&DriftParameters::roulette(), DEFAULT_K).unwrap();
        let drift = DriftParameters::roulette()
            .with_exponent(1.0 + 1e-9)
            .unwrap();
        let g = generalized_constants_search(&drift, DEFAULT_K).unwrap();
        assert!(g.c >= base.c && g.d >= base.d);
        // The generalized step pays a factor 2 on the variance terms.
        assert!(g.c < 10.0 * base.c);
    }

    #[test]
    fn generalized_gamma_zero() {
        let drift = DriftParameters::new(0.5, 0.2, 0.0, 0.3)
            .unwrap()
            .with_exponent(1.5)
            .unwrap();
        let g = generalized_constants_search(&drift, 10.0).unwrap();
        let shrink = 0.5f64.powi(4) * 10.0 / (0.25 * 10.0 - 0.04);
        let want = (0.3 + 0.25 * 10.0) / (1.0 - shrink);
        assert!((g.d - want).abs() < 1e-9 * want);
    }

    #[test]
    fn generalized_rejects_small_k() {
        let drift = DriftParameters::roulette().with_exponent(1.5).unwrap();
        let t = k_threshold(&drift);
        assert!(generalized_constants_search(&drift, t * 0.99).is_err());
        assert!(generalized_constants_search(&drift, DEFAULT_K).is_ok());
    }
}
