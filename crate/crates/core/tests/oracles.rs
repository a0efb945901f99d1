#![allow(clippy::needless_range_loop)]

mod common;

use rug::{Float, Rational};
use selfavg::engine::build_table;
use selfavg::kernels::{
    kill_subset_row, roulette_mu, roulette_pmf, roulette_sigma2, CoinflipKernel, KernelName,
    ParityKernel, RouletteKernel, TransitionKernel,
};
use selfavg::PrecisionConfig;

fn err(x: &Float, exact: &Rational) -> f64 {
    let e = Float::with_val(x.prec() + 64, exact);
    Float::with_val(x.prec() + 64, x - e).abs().to_f64()
}

#[test]
fn roulette_pmf_matches_enumeration() {
    for n in 2..=6 {
        let exact = common::roulette_enumerated(n);
        let pmf = roulette_pmf(n as u64, 256).unwrap();
        let subset = kill_subset_row(n as u64, &PrecisionConfig::default())
            .unwrap()
            .to_pmf();
        for j in 0..=n {
            assert!(err(&pmf.probs[j], &exact[j]) < 1e-74, "n={n} j={j}");
            assert!(err(&subset.probs[j], &exact[j]) < 1e-74, "n={n} j={j}");
        }
    }
}

#[test]
fn roulette_moments_match_enumeration() {
    for n in 2..=6 {
        let exact = common::roulette_enumerated(n);
        let mut mean = Rational::new();
        let mut second = Rational::new();
        for (j, w) in exact.iter().enumerate() {
            mean += Rational::from(w * j as u32);
            second += Rational::from(w * (j * j) as u32);
        }
        let var = &second - Rational::from(mean.square_ref());
        assert!(err(&roulette_mu(n as u64, 256).unwrap(), &mean) < 1e-70);
        assert!(err(&roulette_sigma2(n as u64, 256).unwrap(), &var) < 1e-70);
    }
}

#[test]
fn p3_is_one_quarter() {
    let t = build_table(&RouletteKernel, 3, &PrecisionConfig::default()).unwrap();
    assert_eq!(t.value(2).unwrap().to_f64(), 1.0);
    assert_eq!(t.value(3).unwrap().to_f64(), 0.25);
}

#[test]
fn roulette_table_matches_rational_recursion() {
    let exact = common::roulette_rational_table(7);
    let t = build_table(&RouletteKernel, 7, &PrecisionConfig::default()).unwrap();
    for (n, e) in exact.iter().enumerate() {
        assert!(err(t.value(n as u64).unwrap(), e) < 1e-70, "n={n}");
    }
}

#[test]
fn coinflip_pmf_matches_rationals() {
    for n in 2..=12u32 {
        let exact = common::coinflip_rational(n);
        let pmf = CoinflipKernel.pmf(n as u64, 256).unwrap();
        for j in 0..=n as usize {
            assert!(err(&pmf.probs[j], &exact[j]) < 1e-74, "n={n} j={j}");
        }
    }
}

#[test]
fn coinflip_table_matches_f64_recursion() {
    let oracle = common::f64_table(60, &[1.0, 0.0], |n| {
        common::coinflip_rational(n as u32)
            .iter()
            .map(|r| r.to_f64())
            .collect()
    });
    let t = build_table(&CoinflipKernel, 60, &PrecisionConfig::default()).unwrap();
    for (n, want) in oracle.iter().enumerate() {
        let got = t.value(n as u64).unwrap().to_f64();
        assert!((got - want).abs() < 1e-13, "n={n}: {got} vs {want}");
    }
}

#[test]
fn parity_table_is_n_mod_2() {
    let t = build_table(&ParityKernel, 400, &PrecisionConfig::default()).unwrap();
    for n in 0..=400u64 {
        let v = t.value(n).unwrap().to_f64();
        assert!((v - (n % 2) as f64).abs() < 1e-30, "n={n}: {v}");
    }
    assert_eq!(t.support_violations.len(), 399);
}

#[test]
fn kernels_by_name() {
    for name in ["roulette", "coinflip", "parity"] {
        let k: KernelName = name.parse().unwrap();
        assert_eq!(k.kernel().name(), name);
    }
    assert!("russian".parse::<KernelName>().is_err());
}
