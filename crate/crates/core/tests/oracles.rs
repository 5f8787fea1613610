//! Detector outputs checked against independent exact or brute-force computations.

use forensics_core::audit::{detection_probability, miss_probability_exact, plan_sample_size};
use forensics_core::digits::{
    bayes_factor_digit_test, benford_pmf, bounded_reference_pmf, chi_square_digit_test, DigitDistribution,
    DigitPosition, GenerativeModel,
};
use forensics_core::polling::{center_poll_pvalue, TailDirection};
use forensics_core::stats::{rank_sum_test, RankSumMethod};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact binomial tail in integer arithmetic: `p = a / d` exactly as stored in the f64.
fn exact_binomial_tail(m: u64, k: u64, p: f64, upper: bool) -> f64 {
    let ratio = BigRational::from_float(p).unwrap();
    let a = ratio.numer().clone();
    let d = ratio.denom().clone();
    let b = &d - &a;
    let range: Vec<u64> = if upper { (k..=m).collect() } else { (0..=k).collect() };
    let mut total = BigInt::zero();
    for j in range {
        let coef = binomial(m, j);
        total += coef * num_traits::pow(a.clone(), j as usize) * num_traits::pow(b.clone(), (m - j) as usize);
    }
    BigRational::new(total, num_traits::pow(d, m as usize)).to_f64().unwrap()
}

fn binomial(n: u64, k: u64) -> BigInt {
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

#[test]
fn binomial_tails_match_integer_arithmetic() {
    for &p in &[0.41, 0.6, 0.02, 0.5, 0.999] {
        for &m in &[1u64, 7, 30, 100, 333, 1000] {
            let mf = m as f64;
            let mut ks = vec![0, 1, m / 4, (mf * p) as u64, m / 2, 3 * m / 4, m];
            ks.dedup();
            for k in ks {
                for (dir, upper) in [(TailDirection::Ge, true), (TailDirection::Le, false)] {
                    let oracle = exact_binomial_tail(m, k, p, upper);
                    if oracle < 1e-300 {
                        continue;
                    }
                    let got = center_poll_pvalue(p, m, k, dir).unwrap().p_value;
                    let rel = (got - oracle).abs() / oracle;
                    assert!(rel < 1e-12, "p={p} m={m} k={k} {dir:?}: {got} vs {oracle} (rel {rel:e})");
                }
            }
        }
    }
}

fn first_digit_counts(n: f64) -> Vec<u64> {
    let pmf = benford_pmf(1).unwrap();
    pmf.weights.iter().map(|w| (w * n).round() as u64).collect()
}

/// Chi-square upper tail with even df = 2j: `exp(-x/2) * sum_{i<j} (x/2)^i / i!`.
fn chi_square_sf_even(x: f64, df: u32) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 0.0;
    for i in 0..df / 2 {
        if i > 0 {
            term *= half / i as f64;
        }
        sum += term;
    }
    (-half).exp() * sum
}

#[test]
fn chi_square_matches_direct_formula() {
    let mut counts = first_digit_counts(1000.0);
    counts[0] = 50;
    let n: u64 = counts.iter().sum();
    let observed = DigitDistribution::observed(DigitPosition::First, counts.clone()).unwrap();
    let got = chi_square_digit_test(&observed, &benford_pmf(1).unwrap()).unwrap();

    let mut statistic = 0.0;
    for (i, &o) in counts.iter().enumerate() {
        let d = (i + 1) as f64;
        let e = n as f64 * (1.0 + 1.0 / d).log10();
        statistic += (o as f64 - e).powi(2) / e;
    }
    assert!((got.chi_square - statistic).abs() < 1e-9, "{} vs {statistic}", got.chi_square);
    assert_eq!(got.df, 8);
    let p = chi_square_sf_even(statistic, 8);
    assert!((got.p_value - p).abs() <= 1e-9 * p.max(1e-300), "{} vs {p}", got.p_value);
}

#[test]
fn chi_square_closed_form_tail_on_moderate_statistic() {
    let mut counts = first_digit_counts(1000.0);
    counts[0] -= 20;
    counts[8] += 20;
    let observed = DigitDistribution::observed(DigitPosition::First, counts).unwrap();
    let got = chi_square_digit_test(&observed, &benford_pmf(1).unwrap()).unwrap();
    let p = chi_square_sf_even(got.chi_square, 8);
    assert!(p > 1e-6 && p < 1.0);
    assert!((got.p_value - p).abs() < 1e-12, "{} vs {p}", got.p_value);
}

#[test]
fn all_mass_on_nine_is_extreme() {
    let mut counts = vec![0; 9];
    counts[8] = 100;
    let observed = DigitDistribution::observed(DigitPosition::First, counts).unwrap();
    let got = chi_square_digit_test(&observed, &benford_pmf(1).unwrap()).unwrap();
    assert!(got.p_value < 1e-10, "{}", got.p_value);
}

#[test]
fn bayes_factor_matches_per_observation_log_likelihood() {
    let benford2 = benford_pmf(2).unwrap();
    let observed = DigitDistribution::observed(DigitPosition::Second, vec![1000; 10]).unwrap();
    let got = bayes_factor_digit_test(&observed, &benford2).unwrap();

    // Walk the 10 000 observations one by one, with compensated summation.
    let n = 10_000usize;
    let mut ll_null = Neumaier::default();
    let mut ll_sat = Neumaier::default();
    for i in 0..n {
        let digit = i % 10;
        let p_null: f64 = (1..=9).map(|j| (1.0 + 1.0 / (10 * j + digit) as f64).log10()).sum();
        ll_null.add(p_null.ln());
        ll_sat.add((1000.0f64 / n as f64).ln());
    }
    let (ll_null, ll_sat) = (ll_null.total(), ll_sat.total());
    let oracle = ll_null - ll_sat + 4.5 * (n as f64).ln();
    assert!(oracle < 0.0);
    assert!(got.log_bayes_factor < 0.0);
    assert!(
        (got.log_bayes_factor - oracle).abs() < 1e-9,
        "{} vs {oracle}",
        got.log_bayes_factor
    );
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact second-digit distribution of the integers 10..=cap.
fn exact_uniform_second_digit(cap: u64) -> Vec<f64> {
    let mut counts = vec![0u64; 10];
    for v in 10..=cap {
        let s = v.to_string();
        counts[(s.as_bytes()[1] - b'0') as usize] += 1;
    }
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

#[test]
fn bounded_uniform_cap_99_is_uniform() {
    let reps = 1_000_000u64;
    let oracle = exact_uniform_second_digit(99);
    assert!(oracle.iter().all(|&w| (w - 0.1).abs() < 1e-15));
    let sim = bounded_reference_pmf(2, 99, GenerativeModel::UniformZeroCap, reps, 2004).unwrap();
    let effective = reps as f64 * 0.9;
    let sigma = (0.1f64 * 0.9 / effective).sqrt();
    for (d, &w) in sim.weights.iter().enumerate() {
        assert!((w - 0.1).abs() < 3.0 * sigma, "digit {d}: {w}");
    }
}

#[test]
fn bounded_uniform_converges_to_enumeration() {
    for cap in [999u64, 9999] {
        let reps = 400_000u64;
        let oracle = exact_uniform_second_digit(cap);
        let sim = bounded_reference_pmf(2, cap, GenerativeModel::UniformZeroCap, reps, cap).unwrap();
        let bound = 5.0 * (0.1f64 * 0.9 / reps as f64).sqrt();
        for (d, (&w, &o)) in sim.weights.iter().zip(&oracle).enumerate() {
            assert!((w - o).abs() < bound, "cap {cap} digit {d}: {w} vs {o}");
        }
    }
}

/// Two-sided exact rank-sum p-value by enumerating every subset of ranks.
fn enumerated_rank_sum_p(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let rank = |v: f64| pooled.iter().position(|&x| x == v).unwrap() as f64 + 1.0;
    let observed: f64 = a.iter().map(|&v| rank(v)).sum();
    let n = pooled.len();
    let na = a.len();
    let mean = na as f64 * (n as f64 + 1.0) / 2.0;
    let dev = (observed - mean).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i as f64 + 1.0).sum();
        total += 1;
        if (w - mean).abs() >= dev - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

#[test]
fn rank_sum_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (na, nb) in [(5, 5), (3, 4), (6, 8), (2, 9)] {
        for _ in 0..20 {
            let a: Vec<f64> = (0..na).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random::<f64>() + 0.2).collect();
            let got = rank_sum_test(&a, &b);
            assert_eq!(got.method, RankSumMethod::Exact);
            let oracle = enumerated_rank_sum_p(&a, &b);
            assert!((got.p_value - oracle).abs() < 1e-12, "{na}x{nb}: {} vs {oracle}", got.p_value);
        }
    }
}

#[test]
fn rank_sum_complete_separation_ten_by_ten() {
    let low: Vec<f64> = (1..=10).map(f64::from).collect();
    let high: Vec<f64> = (11..=20).map(f64::from).collect();
    let expected = 2.0 / binomial(20, 10).to_f64().unwrap();
    assert!((expected - 2.0 / 184_756.0).abs() < 1e-18);
    assert!((rank_sum_test(&high, &low).p_value - expected).abs() < 1e-15);
    assert!((rank_sum_test(&low, &high).p_value - expected).abs() < 1e-15);
}

#[test]
fn detection_probability_exact_example() {
    let miss = miss_probability_exact(10, 2, 7).unwrap();
    assert_eq!(miss, BigRational::new(BigInt::from(8), BigInt::from(120)));
    assert!((detection_probability(10, 2, 7).unwrap() - 14.0 / 15.0).abs() < 1e-15);
}

/// Minimal n with `1 - C(N-k, n) / C(N, n) >= num / den`, from binomial coefficients.
fn brute_force_plan(n_precincts: u64, k: u64, num: u64, den: u64) -> u64 {
    (0..=n_precincts)
        .find(|&n| {
            let miss = BigRational::new(binomial(n_precincts - k, n), binomial(n_precincts, n));
            BigRational::one() - miss >= BigRational::new(BigInt::from(num), BigInt::from(den))
        })
        .unwrap()
}

#[test]
fn planner_matches_big_integer_search() {
    let plan = plan_sample_size(400, 4, 0.99).unwrap();
    assert_eq!(plan.sample_size, brute_force_plan(400, 4, 99, 100));
    for (n, k, num, den) in [(100, 1, 9, 10), (250, 7, 95, 100), (1000, 10, 99, 100), (57, 3, 1, 2)] {
        let conf = num as f64 / den as f64;
        assert_eq!(plan_sample_size(n, k, conf).unwrap().sample_size, brute_force_plan(n, k, num, den));
    }
}

#[test]
fn detection_probability_matches_subset_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    for (n_precincts, k, n) in [(40u64, 3u64, 10u64), (12, 1, 6), (200, 20, 5)] {
        let exact = detection_probability(n_precincts, k, n).unwrap();
        let mut hits = 0u32;
        for _ in 0..draws {
            // Precincts 0..k are the tainted ones.
            if sample(&mut rng, n_precincts as usize, n as usize).iter().any(|i| (i as u64) < k) {
                hits += 1;
            }
        }
        let freq = f64::from(hits) / draws as f64;
        let se = (exact * (1.0 - exact) / draws as f64).sqrt();
        assert!((freq - exact).abs() <= 3.0 * se, "N={n_precincts} k={k} n={n}: {freq} vs {exact}");
    }
}
