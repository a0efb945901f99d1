//! Mechanistic Monte Carlo of the elimination processes.
//!
//! Nothing here touches the pmf code: each round is played out shot by shot
//! (roulette) or coin by coin (coin-flip, parity). Trials are split into
//! batches; batch `b` draws from ChaCha8 seeded with `seed` on stream `b`, so
//! results depend only on `(seed, trials, batch_size)` and not on the number
//! of threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelName;

/// One round of group Russian roulette with `n >= 2` players: everybody shoots
/// a uniformly chosen other player. Returns the number nobody aimed at.
pub fn simulate_roulette_round<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    let mut hit = vec![false; n as usize];
    roulette_round_into(n, rng, &mut hit)
}

fn roulette_round_into<R: Rng + ?Sized>(n: u64, rng: &mut R, hit: &mut Vec<bool>) -> u64 {
    if n < 2 {
        return n;
    }
    hit.clear();
    hit.resize(n as usize, false);
    for shooter in 0..n {
        // Uniform over the other n-1 players without rejection.
        let r = rng.gen_range(0..n - 1);
        let target = r + u64::from(r >= shooter);
        hit[target as usize] = true;
    }
    hit.iter().filter(|h| !**h).count() as u64
}

/// `n` players flip fair coins; tail-flippers continue. A round where all flip
/// tails is replayed.
pub fn simulate_coinflip_round<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    if n < 2 {
        return n;
    }
    loop {
        let tails = count_heads(n, rng);
        if tails != n {
            return tails;
        }
    }
}

/// Parity example: `2 Bin(floor(n/2), 1/2) + (n mod 2)`, played as one coin per
/// pair of players.
pub fn simulate_parity_round<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    if n < 2 {
        return n;
    }
    2 * count_heads(n / 2, rng) + n % 2
}

fn count_heads<R: Rng + ?Sized>(n: u64, rng: &mut R) -> u64 {
    let mut left = n;
    let mut heads = 0;
    while left >= 64 {
        heads += u64::from(rng.gen::<u64>().count_ones());
        left -= 64;
    }
    if left > 0 {
        let mask = (1u64 << left) - 1;
        heads += u64::from((rng.gen::<u64>() & mask).count_ones());
    }
    heads
}

fn n0(kernel: KernelName) -> u64 {
    match kernel {
        KernelName::Roulette | KernelName::Coinflip | KernelName::Parity => 1,
    }
}

fn boundary(kernel: KernelName, state: u64) -> f64 {
    match kernel {
        KernelName::Roulette | KernelName::Coinflip => f64::from(u8::from(state == 0)),
        KernelName::Parity => (state % 2) as f64,
    }
}

struct Round {
    kernel: KernelName,
    buf: Vec<bool>,
}

impl Round {
    fn new(kernel: KernelName) -> Self {
        Self {
            kernel,
            buf: Vec::new(),
        }
    }

    fn play<R: Rng + ?Sized>(&mut self, n: u64, rng: &mut R) -> u64 {
        match self.kernel {
            KernelName::Roulette => roulette_round_into(n, rng, &mut self.buf),
            KernelName::Coinflip => simulate_coinflip_round(n, rng),
            KernelName::Parity => simulate_parity_round(n, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub kernel: KernelName,
    pub n_start: u64,
    pub trials: u64,
    pub seed: u64,
    pub batch_size: u64,
}

impl TrialConfig {
    pub fn new(kernel: KernelName, n_start: u64, trials: u64, seed: u64) -> Self {
        Self {
            kernel,
            n_start,
            trials,
            seed,
            batch_size: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    fn batches(&self) -> Vec<(u64, u64)> {
        let count = self.trials.div_ceil(self.batch_size);
        (0..count)
            .map(|b| {
                let start = b * self.batch_size;
                (b, self.batch_size.min(self.trials - start))
            })
            .collect()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// States `X_0, X_1, ..., X_T` with `X_T <= n0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessTrace {
    pub states: Vec<u64>,
}

impl ProcessTrace {
    pub fn rounds(&self) -> usize {
        self.states.len() - 1
    }

    pub fn absorbed_at(&self) -> u64 {
        *self.states.last().expect("trace is never empty")
    }
}

fn run_trace<R: Rng + ?Sized>(round: &mut Round, n_start: u64, rng: &mut R, states: &mut Vec<u64>) {
    states.clear();
    states.push(n_start);
    let mut n = n_start;
    let floor = n0(round.kernel);
    while n > floor {
        n = round.play(n, rng);
        states.push(n);
    }
}

/// One trace from `config.n_start`, drawn from batch stream 0.
pub fn simulate_process(config: &TrialConfig) -> Result<ProcessTrace> {
    config.validate()?;
    let mut rng = config.rng(0);
    let mut states = Vec::new();
    run_trace(
        &mut Round::new(config.kernel),
        config.n_start,
        &mut rng,
        &mut states,
    );
    Ok(ProcessTrace { states })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Tally {
    trials: u64,
    sum: f64,
    sum_sq: f64,
    absorbed: BTreeMap<u64, u64>,
    rounds: BTreeMap<u64, u64>,
}

impl Tally {
    fn merge(&mut self, other: Tally) {
        self.trials += other.trials;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (k, v) in other.absorbed {
            *self.absorbed.entry(k).or_default() += v;
        }
        for (k, v) in other.rounds {
            *self.rounds.entry(k).or_default() += v;
        }
    }
}

fn run_batches<F>(config: &TrialConfig, body: F) -> Result<Tally>
where
    F: Fn(&mut ChaCha8Rng, u64, &mut Tally) + Sync,
{
    config.validate()?;
    let tallies: Vec<Tally> = config
        .batches()
        .into_par_iter()
        .map(|(b, len)| {
            let mut rng = config.rng(b);
            let mut t = Tally::default();
            body(&mut rng, len, &mut t);
            t
        })
        .collect();
    let mut total = Tally::default();
    for t in tallies {
        total.merge(t);
    }
    Ok(total)
}

/// Estimate of `p(n)` with absorption and round-count histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub kernel: KernelName,
    pub n: u64,
    pub trials: u64,
    pub seed: u64,
    pub batch_size: u64,
    pub p_hat: f64,
    pub stderr: f64,
    pub absorbed: BTreeMap<u64, u64>,
    pub rounds: BTreeMap<u64, u64>,
}

impl Estimate {
    /// Most frequent number of rounds (smallest on ties).
    pub fn modal_rounds(&self) -> u64 {
        let mut best = (0, 0);
        for (&r, &c) in &self.rounds {
            if c > best.1 {
                best = (r, c);
            }
        }
        best.0
    }

    /// Histogram CSV with columns `kind,value,count`.
    pub fn histogram_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "value", "count"])?;
        for (k, c) in &self.absorbed {
            w.write_record(["absorbed", &k.to_string(), &c.to_string()])?;
        }
        for (k, c) in &self.rounds {
            w.write_record(["rounds", &k.to_string(), &c.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Mean of the starting value at absorption, with its standard error.
pub fn estimate_p(config: &TrialConfig) -> Result<Estimate> {
    let kernel = config.kernel;
    let n = config.n_start;
    let t = run_batches(config, |rng, len, t| {
        let mut round = Round::new(kernel);
        let mut states = Vec::new();
        for _ in 0..len {
            run_trace(&mut round, n, rng, &mut states);
            let end = *states.last().expect("nonempty");
            let v = boundary(kernel, end);
            t.trials += 1;
            t.sum += v;
            t.sum_sq += v * v;
            *t.absorbed.entry(end).or_default() += 1;
            *t.rounds.entry(states.len() as u64 - 1).or_default() += 1;
        }
    })?;
    let (p_hat, var) = mean_var(&t);
    Ok(Estimate {
        kernel,
        n,
        trials: t.trials,
        seed: config.seed,
        batch_size: config.batch_size,
        p_hat,
        stderr: (var / t.trials as f64).sqrt(),
        absorbed: t.absorbed,
        rounds: t.rounds,
    })
}

fn mean_var(t: &Tally) -> (f64, f64) {
    let n = t.trials as f64;
    let mean = t.sum / n;
    let var = if t.trials > 1 {
        ((t.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub kernel: KernelName,
    pub n: u64,
    pub trials: u64,
    pub mean: f64,
    pub variance: f64,
    pub mean_stderr: f64,
    /// Large-sample standard error of the sample variance.
    pub variance_stderr: f64,
    /// One-round survivor counts.
    pub histogram: BTreeMap<u64, u64>,
}

/// Sample mean and variance of `Y(n)` over `trials` single rounds.
pub fn estimate_moments(
    kernel: KernelName,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<MomentEstimate> {
    let config = TrialConfig::new(kernel, n, trials, seed);
    let t = run_batches(&config, |rng, len, t| {
        let mut round = Round::new(kernel);
        for _ in 0..len {
            let y = if n <= n0(kernel) {
                n
            } else {
                round.play(n, rng)
            };
            t.trials += 1;
            t.sum += y as f64;
            t.sum_sq += (y * y) as f64;
            *t.absorbed.entry(y).or_default() += 1;
        }
    })?;
    let (mean, variance) = mean_var(&t);
    // Fourth central moment from the histogram for the variance's error.
    let m = t.trials as f64;
    let m4 = t
        .absorbed
        .iter()
        .map(|(&y, &c)| c as f64 * (y as f64 - mean).powi(4))
        .sum::<f64>()
        / m;
    let variance_stderr = ((m4 - variance * variance).max(0.0) / m).sqrt();
    Ok(MomentEstimate {
        kernel,
        n,
        trials: t.trials,
        mean,
        variance,
        mean_stderr: (variance / m).sqrt(),
        variance_stderr,
        histogram: t.absorbed,
    })
}

/// Draws from a finite law by inverting its cumulative sums.
#[derive(Debug, Clone)]
pub struct PmfSampler {
    cdf: Vec<f64>,
}

impl PmfSampler {
    pub fn new(probs: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(probs.len());
        for &p in probs {
            if !(p.is_finite() && p >= -1e-12) {
                return Err(Error::Domain(format!("bad probability {p}")));
            }
            acc += p.max(0.0);
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::Domain("law has no mass".into()));
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1) as u64
    }
}

/// Histogram of `trials` draws from a pmf, reproducible per seed.
pub fn sample_pmf_histogram(probs: &[f64], trials: u64, seed: u64) -> Result<Vec<u64>> {
    let sampler = PmfSampler::new(probs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..trials {
        counts[sampler.sample(&mut rng) as usize] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test on count vectors, pooling sparse
/// bins (expected count below 5) from the tails inward.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquare> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("empty sample".into()));
    }
    let total = na + nb;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for i in 0..len {
        cur.0 += get(a, i);
        cur.1 += get(b, i);
        let pooled = cur.0 + cur.1;
        if pooled * na.min(nb) / total >= 5.0 {
            bins.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if cur.0 + cur.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => bins.push(cur),
        }
    }
    let mut stat = 0.0;
    for (x, y) in &bins {
        let pooled = x + y;
        let ea = pooled * na / total;
        let eb = pooled * nb / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = bins.len().saturating_sub(1) as u64;
    let p_value = if dof == 0 {
        1.0
    } else {
        let d = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
        1.0 - d.cdf(stat)
    };
    Ok(ChiSquare {
        statistic: stat,
        dof,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_players_always_die() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(simulate_roulette_round(2, &mut rng), 0);
        }
        let cfg = TrialConfig::new(KernelName::Roulette, 2, 1000, 3);
        assert_eq!(simulate_process(&cfg).unwrap().states, vec![2, 0]);
        assert_eq!(estimate_p(&cfg).unwrap().p_hat, 1.0);
        let cfg = TrialConfig::new(KernelName::Roulette, 1, 10, 3);
        assert_eq!(simulate_process(&cfg).unwrap().states, vec![1]);
    }

    #[test]
    fn survivors_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 3..40 {
            for _ in 0..200 {
                assert!(simulate_roulette_round(n, &mut rng) <= n - 2);
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = TrialConfig {
            batch_size: 97,
            ..TrialConfig::new(KernelName::Roulette, 20, 2000, 11)
        };
        let a = estimate_p(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| estimate_p(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn coinflip_and_parity_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..100 {
            let c = simulate_coinflip_round(n, &mut rng);
            assert!(c < n);
            let p = simulate_parity_round(n, &mut rng);
            assert_eq!(p % 2, n % 2);
            assert!(p <= n);
        }
        let e = estimate_p(&TrialConfig::new(KernelName::Parity, 9, 500, 2)).unwrap();
        assert_eq!(e.p_hat, 1.0);
    }

    #[test]
    fn chi_square_accepts_same_law() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let a = sample_pmf_histogram(&probs, 20_000, 1).unwrap();
        let b = sample_pmf_histogram(&probs, 20_000, 2).unwrap();
        assert!(chi_square_two_sample(&a, &b).unwrap().p_value > 1e-3);
        let c = sample_pmf_histogram(&[0.4, 0.3, 0.2, 0.1], 20_000, 3).unwrap();
        assert!(chi_square_two_sample(&a, &c).unwrap().p_value < 1e-10);
    }
}
