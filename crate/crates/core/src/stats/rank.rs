//! Wilcoxon–Mann–Whitney rank-sum test.

use serde::{Deserialize, Serialize};

use super::normal_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankSumMethod {
    /// Exact permutation distribution of the rank sum (no ties, N <= 60).
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Mann–Whitney U of the first sample.
    pub u_statistic: f64,
    /// Rank sum of the first sample (mid-ranks for ties).
    pub rank_sum: f64,
    pub p_value: f64,
    pub method: RankSumMethod,
}

const EXACT_LIMIT: usize = 60;

fn mid_ranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        if j > i {
            tie_sizes.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, tie_sizes)
}

/// Number of `k`-subsets of `{1..n}` with each possible rank sum.
fn rank_sum_counts(n: usize, k: usize) -> Vec<u64> {
    let max_sum = k * (2 * n - k + 1) / 2;
    // dp[j][s]: ways to pick j ranks summing to s
    let mut dp = vec![vec![0u64; max_sum + 1]; k + 1];
    dp[0][0] = 1;
    for rank in 1..=n {
        for j in (1..=k.min(rank)).rev() {
            for s in (rank..=max_sum).rev() {
                let add = dp[j - 1][s - rank];
                if add != 0 {
                    dp[j][s] += add;
                }
            }
        }
    }
    dp.swap_remove(k)
}

/// Two-sided rank-sum test of `a` against `b`.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> RankSumResult {
    assert!(!a.is_empty() && !b.is_empty(), "both samples must be non-empty");
    let na = a.len();
    let nb = b.len();
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = mid_ranks(&pooled);
    let rank_sum: f64 = ranks[..na].iter().sum();
    let u = rank_sum - (na * (na + 1)) as f64 / 2.0;

    if ties.is_empty() && n <= EXACT_LIMIT {
        let counts = rank_sum_counts(n, na);
        let total: f64 = counts.iter().map(|&c| c as f64).sum();
        let w = rank_sum.round() as usize;
        let lower: f64 = counts[..=w].iter().map(|&c| c as f64).sum::<f64>() / total;
        let upper: f64 = counts[w..].iter().map(|&c| c as f64).sum::<f64>() / total;
        return RankSumResult {
            u_statistic: u,
            rank_sum,
            p_value: (2.0 * lower.min(upper)).min(1.0),
            method: RankSumMethod::Exact,
        };
    }

    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let mu = naf * nbf / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let dev = ((u - mu).abs() - 0.5).max(0.0);
        (2.0 * normal_sf(dev / var.sqrt())).min(1.0)
    };
    RankSumResult {
        u_statistic: u,
        rank_sum,
        p_value,
        method: RankSumMethod::Normal,
    }
}
