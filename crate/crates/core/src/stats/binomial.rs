//! Exact binomial probabilities.
//!
//! Point masses use Loader's saddle-point decomposition (Stirling remainder plus
//! the deviance term `bd0`), which keeps the relative error near machine
//! precision far into the tails where `exp(ln C + k ln p + ...)` loses digits.
//! Tails are plain sums of point masses, smallest terms first.

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n == 0 {
        return 0.0;
    }
    if n <= 15 {
        // n! is exact in f64 up to 15! (1.3e12).
        let fact: f64 = (1..=n).map(|v| v as f64).product();
        let nf = n as f64;
        return fact.ln() - (nf + 0.5) * nf.ln() + nf - 0.5 * LN_2PI;
    }
    let nf = n as f64;
    let nn = nf * nf;
    if n > 500 {
        (S0 - S1 / nn) / nf
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / nf
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x/np) + np - x`, evaluated without cancellation near x = np.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        let mut j = 1;
        loop {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1;
            if j > 1000 {
                return s;
            }
        }
    }
    x * (x / np).ln() + np - x
}

/// P(X = k) for X ~ Binomial(n, p).
pub fn binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if k == 0 {
        if n == 0 {
            return 1.0;
        }
        let lc = if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * q.ln() };
        return lc.exp();
    }
    if k == n {
        let lc = if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * p.ln() };
        return lc.exp();
    }
    let kf = k as f64;
    let lc = stirlerr(n)
        - stirlerr(k)
        - stirlerr(n - k)
        - bd0(kf, nf * p)
        - bd0(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

fn neumaier_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// P(X >= k).
pub fn binomial_sf_ge(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    neumaier_sum((k..=n).rev().map(|j| binomial_pmf(j, n, p))).min(1.0)
}

/// P(X <= k).
pub fn binomial_tail_le(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    neumaier_sum((0..=k).map(|j| binomial_pmf(j, n, p))).min(1.0)
}

pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    binomial_tail_le(k, n, p)
}

/// Central interval `[lo, hi]` holding at least `level` mass, with at most
/// `(1 - level) / 2` of the mass strictly outside on each side.
pub fn binomial_central_interval(n: u64, p: f64, level: f64) -> (u64, u64) {
    let tail = 0.5 * (1.0 - level);
    let mut cdf = 0.0;
    let mut lo = None;
    let mut hi = n;
    for k in 0..=n {
        cdf += binomial_pmf(k, n, p);
        if lo.is_none() && cdf > tail {
            lo = Some(k);
        }
        if cdf >= 1.0 - tail {
            hi = k;
            break;
        }
    }
    (lo.unwrap_or(0), hi)
}
