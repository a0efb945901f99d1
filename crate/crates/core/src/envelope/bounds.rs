//! The envelope `l(x) <= p(N_i) <= u(x)` for `N_i = [x / alpha^i]` and the
//! period scans built on it.
//!
//! With `tau = tau(x)`, `t = tau + beta/(1-alpha) + 1/2`,
//! `q_k = tau^2/(tau+k)^2 - tau^2/(tau+k+1)^2` and windows
//! `I_k = [x - (t+k+1), x + (t+k+1)]`,
//!
//! `l(x) = sum_{k<M} q_k min_{I_k} p`, `u(x) = sum_{k<M} q_k max_{I_k} p + T_M`,
//!
//! where `M` is the largest integer with `x + t + M + 1 <= n_max` and
//! `T_M = tau^2/(tau+M)^2` is the tail mass, bounded by 0 below and 1 above.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ContractionConstants;
use crate::engine::TableData;
use crate::error::{Error, Result};

/// Envelope at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub x: f64,
    pub tau: f64,
    pub t: f64,
    #[serde(rename = "M")]
    pub m: u64,
    pub lower: f64,
    pub upper: f64,
    pub tail: f64,
    /// `q_0, ..., q_{M-1}`; omitted from compact exports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
}

/// `q_k = tau^2 (2 tau + 2k + 1) / ((tau+k)^2 (tau+k+1)^2)`, written without
/// the cancelling difference.
pub fn weight(tau: f64, k: u64) -> f64 {
    let a = tau + k as f64;
    let b = a + 1.0;
    tau * tau * (a + b) / (a * a * b * b)
}

/// `sum_{j >= k} q_j = tau^2 / (tau + k)^2`.
pub fn tail_mass(tau: f64, k: u64) -> f64 {
    let a = tau + k as f64;
    tau * tau / (a * a)
}

/// Truncation index for windows reaching `right + k + 1`, or `None` when not
/// even the first window fits.
fn truncation(right: f64, n_max: u64) -> Option<u64> {
    let room = n_max as f64 - right - 1.0;
    if room >= 1.0 {
        Some(room.floor() as u64)
    } else {
        None
    }
}

fn range_error(x: f64, t: f64, n_max: u64) -> Error {
    Error::WindowRange {
        x,
        n_max,
        required_n_max: (x + t + 2.0).ceil() as u64,
    }
}

/// `(sum q_k min, sum q_k max)` over windows `[lo - k - 1, hi + k + 1]` for
/// `k < m`. With `lo = hi = x` these are the windows `I_k`.
fn window_sums(values: &[f64], lo: f64, hi: f64, tau: f64, m: u64) -> (f64, f64) {
    let last = values.len() as i64 - 1;
    let clamp = |v: f64| (v as i64).clamp(0, last);
    let mut a = clamp((lo - 1.0).ceil().max(0.0));
    let mut b = clamp((hi + 1.0).floor());
    let mut mn = f64::INFINITY;
    let mut mx = f64::NEG_INFINITY;
    for v in &values[a as usize..=b as usize] {
        mn = mn.min(*v);
        mx = mx.max(*v);
    }
    let mut lower = 0.0;
    let mut upper = 0.0;
    for k in 0..m {
        if k > 0 {
            let extra = k as f64 + 1.0;
            let na = clamp((lo - extra).ceil().max(0.0));
            let nb = clamp((hi + extra).floor());
            for v in &values[na as usize..a as usize] {
                mn = mn.min(*v);
                mx = mx.max(*v);
            }
            for v in &values[(b + 1) as usize..=nb as usize] {
                mn = mn.min(*v);
                mx = mx.max(*v);
            }
            a = na;
            b = nb;
        }
        let q = weight(tau, k);
        lower += q * mn;
        upper += q * mx;
    }
    (lower, upper)
}

/// `l(x)` and `u(x)`; see the module docs.
pub fn envelope_at(
    x: f64,
    table: &TableData,
    consts: &ContractionConstants,
) -> Result<EnvelopeResult> {
    let r = envelope_compact(x, table, consts, None)?;
    let weights = (0..r.m).map(|k| weight(r.tau, k)).collect();
    Ok(EnvelopeResult { weights, ..r })
}

/// As [`envelope_at`] without the weight vector; `truncate` caps `M`.
pub fn envelope_compact(
    x: f64,
    table: &TableData,
    consts: &ContractionConstants,
    truncate: Option<u64>,
) -> Result<EnvelopeResult> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("envelope needs x > 0, got {x}")));
    }
    let tau = consts.tau(x);
    let t = consts.t_from_tau(tau);
    let mut m = truncation(x + t, table.n_max).ok_or_else(|| range_error(x, t, table.n_max))?;
    if let Some(cap) = truncate {
        m = m.min(cap.max(1));
    }
    let (lower_sum, upper_sum) = window_sums(&table.values, x - t, x + t, tau, m);
    let tail = tail_mass(tau, m);
    Ok(EnvelopeResult {
        x,
        tau,
        t,
        m,
        lower: lower_sum.clamp(0.0, 1.0),
        upper: (upper_sum + tail).clamp(0.0, 1.0),
        tail,
        weights: Vec::new(),
    })
}

/// Rule for `[x]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
    HalfToEven,
}

impl Rounding {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Rounding::HalfAwayFromZero => v.round(),
            Rounding::HalfToEven => {
                let r = v.round();
                if (v - v.trunc()).abs() == 0.5 && r % 2.0 != 0.0 {
                    r - v.signum()
                } else {
                    r
                }
            }
        }
    }
}

/// Absolute slack for comparing doubles against the envelope.
pub const CONTAINMENT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainmentRow {
    pub i: u32,
    pub n: u64,
    pub p: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub x: f64,
    pub lower: f64,
    pub upper: f64,
    pub rows: Vec<ContainmentRow>,
    pub pass: bool,
}

/// Checks `l(x) <= p(N_i) <= u(x)` for every `N_i = [x / alpha^i] <= n_max`.
pub fn subsequence_containment(
    x: f64,
    table: &TableData,
    consts: &ContractionConstants,
    rounding: Rounding,
) -> Result<ContainmentReport> {
    let env = envelope_compact(x, table, consts, None)?;
    let inv = 1.0 / consts.drift.alpha;
    let mut rows = Vec::new();
    for i in 0.. {
        let n = rounding.apply(x * inv.powi(i as i32));
        if n > table.n_max as f64 {
            break;
        }
        let n = n as u64;
        let p = table.values[n as usize];
        let ok = p >= env.lower - CONTAINMENT_SLACK && p <= env.upper + CONTAINMENT_SLACK;
        rows.push(ContainmentRow { i, n, p, ok });
    }
    let pass = rows.iter().all(|r| r.ok);
    Ok(ContainmentReport {
        x,
        lower: env.lower,
        upper: env.upper,
        rows,
        pass,
    })
}

/// Envelope curve sampled on `[x_start, x_end]` with the given step.
pub fn envelope_curve(
    x_start: f64,
    x_end: f64,
    step: f64,
    table: &TableData,
    consts: &ContractionConstants,
) -> Result<Vec<EnvelopeResult>> {
    grid(x_start, x_end, step)?
        .into_par_iter()
        .map(|x| envelope_compact(x, table, consts, None))
        .collect()
}

fn grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite() && start > 0.0 && end >= start) {
        return Err(Error::Config(format!(
            "bad grid: start {start}, end {end}, step {step}"
        )));
    }
    let cells = ((end - start) / step).ceil().max(0.0) as u64;
    if cells > 50_000_000 {
        return Err(Error::Config(format!("grid of {cells} cells is too fine")));
    }
    let mut xs: Vec<f64> = (0..cells).map(|i| start + i as f64 * step).collect();
    xs.push(end);
    Ok(xs)
}

/// Lower bound on `inf l` and upper bound on `sup u` over `[a, b]`.
///
/// For `x` in the cell, `tau(x) <= tau(b)`, `t(x) <= t(b)` and every window
/// `I_k(x)` lies inside `[a - (t(b)+k+1), b + (t(b)+k+1)]`. The lower sum
/// decreases and the upper sum increases when `tau` grows with the window
/// contents fixed (summation by parts), when windows widen, and when `M`
/// shrinks. Evaluating with `tau(b)`, the widened windows and the `M` of
/// `b` therefore bounds the whole cell.
pub fn cell_bounds(
    a: f64,
    b: f64,
    table: &TableData,
    consts: &ContractionConstants,
) -> Result<(f64, f64)> {
    let tau = consts.tau(b);
    let t = consts.t_from_tau(tau);
    let m = truncation(b + t, table.n_max).ok_or_else(|| range_error(b, t, table.n_max))?;
    let (lo, hi) = window_sums(&table.values, a - t, b + t, tau, m);
    Ok((lo.clamp(0.0, 1.0), (hi + tail_mass(tau, m)).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanOptions {
    pub grid_step: f64,
    /// Values of `K` to try; each output keeps its sharpest valid value.
    pub k_values: Vec<f64>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.1,
            k_values: vec![super::DEFAULT_K],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodScanResult {
    pub kernel: String,
    pub x0: f64,
    pub x1: f64,
    /// Starts of every period that contributed (one unless merged).
    #[serde(default)]
    pub periods: Vec<f64>,
    pub grid_step: f64,
    /// `inf l` over the period, bounded rigorously from below.
    pub liminf_lower: f64,
    /// `min u` over grid points.
    pub liminf_upper: f64,
    /// `max l` over grid points.
    pub limsup_lower: f64,
    /// `sup u` over the period, bounded rigorously from above.
    pub limsup_upper: f64,
    pub argmax_l: f64,
    pub argmin_u: f64,
    /// `K` that produced each of the four numbers, in the order above.
    pub k_used: [f64; 4],
    pub certified: bool,
    pub gap: f64,
}

impl PeriodScanResult {
    pub fn verdict(&self) -> &'static str {
        if self.certified {
            "non-convergent"
        } else {
            "inconclusive by this method"
        }
    }
}

/// Brackets `liminf p` and `limsup p` from one period `[x0, x0 / alpha]`.
///
/// `consts` supplies the drift; its `K` is replaced by each of
/// `options.k_values` (closed-form constants, so `p_exponent` must be 1).
pub fn scan_period(
    x0: f64,
    table: &TableData,
    consts: &ContractionConstants,
    options: &ScanOptions,
) -> Result<PeriodScanResult> {
    let x1 = x0 / consts.drift.alpha;
    let xs = grid(x0, x1, options.grid_step)?;
    let ks = if options.k_values.is_empty() {
        vec![consts.k]
    } else {
        options.k_values.clone()
    };

    let mut best: Option<PeriodScanResult> = None;
    for &k in &ks {
        let c = if k == consts.k {
            *consts
        } else {
            super::contraction_constants(&consts.drift, k)?
        };
        // Fails early with the coverage error when the period does not fit.
        envelope_compact(x1, table, &c, None)?;

        let points: Vec<EnvelopeResult> = xs
            .par_iter()
            .map(|&x| envelope_compact(x, table, &c, None))
            .collect::<Result<_>>()?;
        let cells: Vec<(f64, f64)> = xs
            .par_windows(2)
            .map(|w| cell_bounds(w[0], w[1], table, &c))
            .collect::<Result<_>>()?;

        let mut r = PeriodScanResult {
            kernel: table.kernel.clone(),
            x0,
            x1,
            periods: vec![x0],
            grid_step: options.grid_step,
            liminf_lower: cells.iter().map(|c| c.0).fold(f64::INFINITY, f64::min),
            liminf_upper: f64::INFINITY,
            limsup_lower: f64::NEG_INFINITY,
            limsup_upper: cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
            argmax_l: x0,
            argmin_u: x0,
            k_used: [k; 4],
            certified: false,
            gap: 0.0,
        };
        for e in &points {
            if e.upper < r.liminf_upper {
                r.liminf_upper = e.upper;
                r.argmin_u = e.x;
            }
            if e.lower > r.limsup_lower {
                r.limsup_lower = e.lower;
                r.argmax_l = e.x;
            }
        }
        best = Some(match best {
            None => r,
            Some(b) => merge(b, r),
        });
    }
    let mut r = best.expect("at least one K");
    r.gap = r.limsup_lower - r.liminf_upper;
    r.certified = r.gap > 0.0;
    Ok(r)
}

/// Largest `x0` whose period `[x0, x0 / alpha]` fits in the table.
pub fn max_x0(table: &TableData, consts: &ContractionConstants) -> Result<f64> {
    let alpha = consts.drift.alpha;
    let fits = |x0: f64| truncation(x0 / alpha + consts.t(x0 / alpha), table.n_max).is_some();
    let mut lo = 1.0;
    if !fits(lo) {
        let x1 = lo / alpha;
        return Err(range_error(x1, consts.t(x1), table.n_max));
    }
    let mut hi = table.n_max as f64 * alpha;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Period starts scanned when none is given: fractions 0.30, 0.35, ..., 0.95
/// of [`max_x0`]. Periods ending near `n_max` lose to the tail mass, short
/// ones to the wide windows, and the best place in between depends on the
/// table, so several are tried and merged.
pub fn default_x0s(table: &TableData, consts: &ContractionConstants) -> Result<Vec<f64>> {
    let top = max_x0(table, consts)?;
    Ok((6..=19)
        .map(|i| top * i as f64 * 0.05)
        .filter(|&x| x >= 1.0)
        .collect())
}

fn merge(mut a: PeriodScanResult, b: PeriodScanResult) -> PeriodScanResult {
    if b.liminf_lower > a.liminf_lower {
        a.liminf_lower = b.liminf_lower;
        a.k_used[0] = b.k_used[0];
    }
    if b.liminf_upper < a.liminf_upper {
        a.liminf_upper = b.liminf_upper;
        a.argmin_u = b.argmin_u;
        a.k_used[1] = b.k_used[1];
    }
    if b.limsup_lower > a.limsup_lower {
        a.limsup_lower = b.limsup_lower;
        a.argmax_l = b.argmax_l;
        a.k_used[2] = b.k_used[2];
    }
    if b.limsup_upper < a.limsup_upper {
        a.limsup_upper = b.limsup_upper;
        a.k_used[3] = b.k_used[3];
    }
    a
}

/// Runs [`scan_period`] for several `x0` and keeps the sharpest value of each
/// bound. Every period gives valid bounds, so the combination is valid too.
pub fn scan_periods(
    x0s: &[f64],
    table: &TableData,
    consts: &ContractionConstants,
    options: &ScanOptions,
) -> Result<PeriodScanResult> {
    let mut best: Option<PeriodScanResult> = None;
    for &x0 in x0s {
        let r = scan_period(x0, table, consts, options)?;
        best = Some(match best {
            None => r,
            Some(b) => merge(b, r),
        });
    }
    let mut r = best.ok_or_else(|| Error::Config("no x0 given".into()))?;
    r.periods = x0s.to_vec();
    r.gap = r.limsup_lower - r.liminf_upper;
    r.certified = r.gap > 0.0;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{contraction_constants, DEFAULT_K};
    use crate::kernels::DriftParameters;

    fn roulette_consts() -> ContractionConstants {
        contraction_constants(&DriftParameters::roulette(), DEFAULT_K).unwrap()
    }

    #[test]
    fn weights_telescope() {
        let tau = 7.3;
        let mut s = 0.0;
        let mut prev = f64::INFINITY;
        for k in 0..10_000 {
            let q = weight(tau, k);
            assert!(q > 0.0 && q < prev);
            prev = q;
            s += q;
        }
        assert!((s + tail_mass(tau, 10_000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_table() {
        let table = TableData::from_values("c", vec![0.5; 3000]).unwrap();
        let e = envelope_at(100.0, &table, &roulette_consts()).unwrap();
        let t = e.tail;
        assert!((e.lower - 0.5 * (1.0 - t)).abs() < 1e-12);
        assert!((e.upper - (0.5 * (1.0 - t) + t)).abs() < 1e-12);
        assert_eq!(e.weights.len() as u64, e.m);
        let ones = TableData::from_values("one", vec![1.0; 3000]).unwrap();
        let e = envelope_at(100.0, &ones, &roulette_consts()).unwrap();
        assert!((e.upper - 1.0).abs() < 1e-12 && (e.lower - (1.0 - e.tail)).abs() < 1e-12);
    }

    #[test]
    fn range_error_names_requirement() {
        let table = TableData::from_values("c", vec![0.5; 50]).unwrap();
        match envelope_at(40.0, &table, &roulette_consts()) {
            Err(Error::WindowRange { required_n_max, .. }) => assert!(required_n_max > 49),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rounding_rules() {
        assert_eq!(Rounding::HalfAwayFromZero.apply(2.5), 3.0);
        assert_eq!(Rounding::HalfToEven.apply(2.5), 2.0);
        assert_eq!(Rounding::HalfToEven.apply(3.5), 4.0);
        assert_eq!(Rounding::HalfToEven.apply(3.2), 3.0);
    }

    #[test]
    fn cells_bracket_points() {
        let values: Vec<f64> = (0..4000)
            .map(|n| 0.5 + 0.1 * ((n as f64 + 1.0).ln() * std::f64::consts::TAU).sin())
            .collect();
        let table = TableData::from_values("wave", values).unwrap();
        let c = roulette_consts();
        let (lo, hi) = cell_bounds(300.0, 301.0, &table, &c).unwrap();
        for i in 0..=20 {
            let e = envelope_compact(300.0 + i as f64 / 20.0, &table, &c, None).unwrap();
            assert!(lo <= e.lower + 1e-15 && e.upper <= hi + 1e-15);
        }
    }

    #[test]
    fn scan_on_constant_table() {
        let table = TableData::from_values("c", vec![0.4; 20_000]).unwrap();
        let r = scan_period(
            50.0,
            &table,
            &roulette_consts(),
            &ScanOptions {
                grid_step: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        for v in [
            r.liminf_lower,
            r.liminf_upper,
            r.limsup_lower,
            r.limsup_upper,
        ] {
            assert!((v - 0.4).abs() < 0.02, "{r:?}");
        }
        assert!(r.liminf_lower <= r.liminf_upper && r.limsup_lower <= r.limsup_upper);
        assert!(!r.certified);
    }
}
