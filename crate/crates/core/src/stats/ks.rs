use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1).
///
/// The p-value uses the asymptotic Kolmogorov series with Stephens'
/// small-sample scaling of the statistic.
pub fn ks_uniform(values: &[f64]) -> KsResult {
    let n = values.len();
    assert!(n > 0, "KS test needs at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        let u = u.clamp(0.0, 1.0);
        let above = (i + 1) as f64 / nf - u;
        let below = u - i as f64 / nf;
        d = d.max(above).max(below);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n,
    }
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev = 0.0f64;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * 2.0 * (a2 * jf * jf).exp();
        sum += term;
        if term.abs() <= 1e-12 * prev.abs() || term.abs() <= 1e-16 * sum.abs() {
            return sum.clamp(0.0, 1.0);
        }
        sign = -sign;
        prev = term;
    }
    // series did not converge: lambda is tiny
    1.0
}
