//! Numerical building blocks shared by the detectors.

mod binomial;
mod ks;
mod rank;

pub use binomial::{
    binomial_central_interval, binomial_cdf, binomial_pmf, binomial_sf_ge, binomial_tail_le,
};
pub use ks::{ks_uniform, KsResult};
pub use rank::{rank_sum_test, RankSumMethod, RankSumResult};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, df: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("degrees of freedom must be positive");
    dist.sf(statistic).clamp(0.0, 1.0)
}

pub fn normal_sf(z: f64) -> f64 {
    Normal::standard().sf(z)
}

pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df must be positive");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Direction of the alternative hypothesis for correlation-type tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    Greater,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 || x.iter().all(|&a| a == x[0]) || y.iter().all(|&b| b == y[0]) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Analytic p-value for a Pearson correlation.
///
/// Fisher's z transform for n > 3; with three observations the exact
/// t-distribution form (df = 1) is used since the z standard error is undefined.
pub fn correlation_pvalue(r: f64, n: usize, alternative: Alternative) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return match alternative {
            Alternative::TwoSided => 0.0,
            Alternative::Greater if r > 0.0 => 0.0,
            Alternative::Greater => 1.0,
        };
    }
    let z = if n > 3 {
        r.atanh() * ((n - 3) as f64).sqrt()
    } else {
        let t = r * ((n - 2) as f64 / (1.0 - r * r)).sqrt();
        let p_two = student_t_two_sided(t, (n - 2) as f64);
        return match alternative {
            Alternative::TwoSided => p_two,
            Alternative::Greater if t >= 0.0 => 0.5 * p_two,
            Alternative::Greater => 1.0 - 0.5 * p_two,
        };
    };
    match alternative {
        Alternative::TwoSided => (2.0 * normal_sf(z.abs())).min(1.0),
        Alternative::Greater => normal_sf(z),
    }
}

/// Simple least-squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    /// Standard error of the slope; 0 for a perfect fit.
    pub slope_se: f64,
}

impl LinearFit {
    /// Two-sided t-test of slope = 0 with n - 2 degrees of freedom.
    pub fn slope_pvalue(&self) -> f64 {
        let n = self.residuals.len();
        if n < 3 {
            return 1.0;
        }
        if self.slope_se == 0.0 {
            return if self.slope == 0.0 { 1.0 } else { 0.0 };
        }
        student_t_two_sided(self.slope / self.slope_se, (n - 2) as f64)
    }
}

/// OLS with intercept. `None` when `x` has zero variance or fewer than two points.
pub fn ols(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || x.iter().all(|&a| a == x[0]) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my) - slope * (a - mx))
        .collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let slope_se = if n > 2 {
        (sse / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        residuals,
        slope_se,
    })
}

/// Fisher's method: `-2 Σ ln p` against chi-square with `2k` degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherCombination {
    pub statistic: f64,
    pub df: u64,
    pub p_value: f64,
}

pub fn fisher_combination(p_values: &[f64]) -> Option<FisherCombination> {
    if p_values.is_empty() {
        return None;
    }
    let statistic: f64 = p_values
        .iter()
        .map(|p| -2.0 * p.clamp(f64::MIN_POSITIVE, 1.0).ln())
        .sum();
    let df = 2 * p_values.len() as u64;
    Some(FisherCombination {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
    })
}

/// Add-one Monte-Carlo p-value `(1 + exceed) / (reps + 1)`.
pub fn monte_carlo_pvalue(exceed: u64, reps: u64) -> f64 {
    (1 + exceed) as f64 / (reps + 1) as f64
}

/// `candidate >= observed` with a relative tolerance, so replicates that
/// reproduce the observed configuration count as ties despite rounding.
#[inline]
pub fn at_least(candidate: f64, observed: f64) -> bool {
    candidate >= observed - 1e-10 * observed.abs().max(1e-12)
}
