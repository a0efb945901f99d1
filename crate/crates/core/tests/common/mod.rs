//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rug::{Integer, Rational};

/// Exact law of the number of survivors of one roulette round, by running
/// through all `(n-1)^n` target assignments.
pub fn roulette_enumerated(n: usize) -> Vec<Rational> {
    assert!(n >= 2);
    let mut counts = vec![0u64; n + 1];
    let mut choice = vec![0usize; n];
    let mut hit = vec![0u32; n];
    loop {
        hit.iter_mut().for_each(|h| *h = 0);
        for (shooter, &c) in choice.iter().enumerate() {
            // Target index among the n-1 other players.
            let target = c + usize::from(c >= shooter);
            hit[target] += 1;
        }
        counts[hit.iter().filter(|&&h| h == 0).count()] += 1;

        let mut i = 0;
        loop {
            if i == n {
                let total = Integer::from(Integer::u_pow_u(n as u32 - 1, n as u32));
                return counts
                    .iter()
                    .map(|&c| Rational::from((Integer::from(c), total.clone())))
                    .collect();
            }
            choice[i] += 1;
            if choice[i] < n - 1 {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// `p(0..=n_max)` for roulette in exact rationals from enumerated laws.
pub fn roulette_rational_table(n_max: usize) -> Vec<Rational> {
    let mut p = vec![Rational::from(1), Rational::from(0)];
    for n in 2..=n_max {
        let law = roulette_enumerated(n);
        assert_eq!(law[n], 0);
        let mut v = Rational::new();
        for (j, w) in law.iter().enumerate().take(n) {
            v += Rational::from(w * &p[j]);
        }
        p.push(v);
    }
    p.truncate(n_max + 1);
    p
}

/// Exact coin-flip law: Binomial(n, 1/2) conditioned on not all tails.
pub fn coinflip_rational(n: u32) -> Vec<Rational> {
    let total = (Integer::from(1) << n) - 1u32;
    (0..=n)
        .map(|j| {
            if j == n {
                Rational::new()
            } else {
                Rational::from((Integer::from(Integer::binomial_u(n, j)), total.clone()))
            }
        })
        .collect()
}

/// Straightforward f64 recursion `p(n) = sum_j P(Y=j) p(j)` for a kernel
/// given as f64 rows, used as an oracle at small `n`.
pub fn f64_table(n_max: usize, boundary: &[f64], row: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    let mut p = boundary.to_vec();
    for n in boundary.len()..=n_max {
        let w = row(n);
        let mut s = 0.0;
        for j in 0..n {
            s += w[j] * p[j];
        }
        p.push(s / (1.0 - w[n]));
    }
    p
}
