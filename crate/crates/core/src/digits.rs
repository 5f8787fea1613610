//! Newcomb–Benford significant-digit tests.
//!
//! Theoretical references use the closed forms
//! `P1(d) = log10(1 + 1/d)` and `P2(d) = Σ_{j=1..9} log10(1 + 1/(10j + d))`.
//! When counts are capped (precincts of similar size) the law no longer
//! applies, so [`bounded_reference_pmf`] builds a seeded Monte-Carlo
//! reference under an explicit generative model instead.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ElectionDataset;
use crate::error::{ForensicsError, Result};
use crate::rng::{derive_seed_indexed, rng_from_seed};
use crate::stats::chi_square_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DigitPosition {
    First,
    Second,
}

impl DigitPosition {
    pub fn index(self) -> u8 {
        match self {
            DigitPosition::First => 1,
            DigitPosition::Second => 2,
        }
    }

    /// Smallest digit value in the support (1 for the first digit, 0 for the second).
    pub fn min_digit(self) -> u8 {
        match self {
            DigitPosition::First => 1,
            DigitPosition::Second => 0,
        }
    }

    pub fn support_len(self) -> usize {
        match self {
            DigitPosition::First => 9,
            DigitPosition::Second => 10,
        }
    }

    pub fn digits(self) -> impl Iterator<Item = u8> {
        self.min_digit()..=9
    }
}

impl TryFrom<u8> for DigitPosition {
    type Error = ForensicsError;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(DigitPosition::First),
            2 => Ok(DigitPosition::Second),
            other => Err(ForensicsError::param(format!("digit position must be 1 or 2, got {other}"))),
        }
    }
}

impl From<DigitPosition> for u8 {
    fn from(p: DigitPosition) -> u8 {
        p.index()
    }
}

impl fmt::Display for DigitPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Theoretical,
    Observed,
    Simulated,
}

/// Frequencies over the support of one significant digit.
///
/// `weights[i]` belongs to digit `position.min_digit() + i`. Observed
/// distributions hold raw counts; the other kinds hold probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitDistribution {
    pub position: DigitPosition,
    pub kind: DistributionKind,
    pub weights: Vec<f64>,
    /// Values skipped because they had fewer significant digits than requested.
    pub dropped: u64,
}

impl DigitDistribution {
    pub fn weight(&self, digit: u8) -> f64 {
        digit
            .checked_sub(self.position.min_digit())
            .and_then(|i| self.weights.get(i as usize))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Builds an observed distribution from per-digit counts.
    pub fn observed(position: DigitPosition, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != position.support_len() {
            return Err(ForensicsError::param(format!(
                "position {position} needs {} counts, got {}",
                position.support_len(),
                counts.len()
            )));
        }
        Ok(DigitDistribution {
            position,
            kind: DistributionKind::Observed,
            weights: counts.into_iter().map(|c| c as f64).collect(),
            dropped: 0,
        })
    }
}

/// Closed-form Newcomb–Benford distribution for the given digit position.
pub fn benford_pmf(position: u8) -> Result<DigitDistribution> {
    let position = DigitPosition::try_from(position)?;
    let weights = position
        .digits()
        .map(|d| {
            let d = f64::from(d);
            match position {
                DigitPosition::First => (1.0 + 1.0 / d).log10(),
                DigitPosition::Second => (1..=9).map(|j| (1.0 + 1.0 / (10.0 * f64::from(j) + d)).log10()).sum(),
            }
        })
        .collect();
    Ok(DigitDistribution {
        position,
        kind: DistributionKind::Theoretical,
        weights,
        dropped: 0,
    })
}

/// The requested significant digit of `value`, or `None` when it has too few digits.
pub fn significant_digit(value: u64, position: DigitPosition) -> Option<u8> {
    if value == 0 {
        return None;
    }
    let mut scale = 1u64;
    while value / scale >= 10 {
        scale *= 10;
    }
    match position {
        DigitPosition::First => Some((value / scale) as u8),
        DigitPosition::Second if scale >= 10 => Some(((value / (scale / 10)) % 10) as u8),
        DigitPosition::Second => None,
    }
}

fn count_digits(values: impl Iterator<Item = u64>, position: DigitPosition) -> (Vec<u64>, u64) {
    let mut counts = vec![0u64; position.support_len()];
    let mut dropped = 0;
    for v in values {
        match significant_digit(v, position) {
            Some(d) => counts[(d - position.min_digit()) as usize] += 1,
            None => dropped += 1,
        }
    }
    (counts, dropped)
}

/// Counts of the requested significant digit. Values with too few digits are
/// dropped (and counted in `dropped`), never zero-padded.
pub fn digit_histogram(values: &[u64], position: u8) -> Result<DigitDistribution> {
    let position = DigitPosition::try_from(position)?;
    let (counts, dropped) = count_digits(values.iter().copied(), position);
    if counts.iter().all(|&c| c == 0) {
        return Err(ForensicsError::insufficient(format!(
            "no value has a significant digit at position {position} ({dropped} dropped)"
        )));
    }
    let mut dist = DigitDistribution::observed(position, counts)?;
    dist.dropped = dropped;
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitTestResult {
    pub position: DigitPosition,
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
    pub log_bayes_factor: f64,
    pub sample_size: u64,
    pub low_information: bool,
    pub bayes_factor_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorResult {
    /// Log Bayes factor of the fixed-probability null against the saturated
    /// multinomial; positive values favour the null.
    pub log_bayes_factor: f64,
    pub sample_size: u64,
    /// Set when some expected cell count is below 5.
    pub low_information: bool,
    pub method: String,
}

pub const BAYES_FACTOR_METHOD: &str = "BIC (Schwarz) approximation: fixed-probability null vs saturated multinomial";

fn check_pair(observed: &DigitDistribution, expected: &DigitDistribution) -> Result<u64> {
    if observed.position != expected.position || observed.weights.len() != expected.weights.len() {
        return Err(ForensicsError::param(format!(
            "support mismatch: observed position {} vs expected position {}",
            observed.position, expected.position
        )));
    }
    if observed.kind != DistributionKind::Observed {
        return Err(ForensicsError::param("observed distribution must hold counts"));
    }
    if expected.kind == DistributionKind::Observed {
        return Err(ForensicsError::param("expected distribution must be theoretical or simulated"));
    }
    if let Some(i) = expected.weights.iter().position(|&w| w <= 0.0) {
        return Err(ForensicsError::param(format!(
            "zero expected cell for digit {}",
            expected.position.min_digit() as usize + i
        )));
    }
    let n = observed.total();
    if n < 1.0 {
        return Err(ForensicsError::insufficient("observed distribution is empty"));
    }
    Ok(n.round() as u64)
}

fn low_information(expected: &DigitDistribution, n: u64) -> bool {
    expected.weights.iter().any(|&p| p * (n as f64) < 5.0)
}

/// Pearson chi-square goodness of fit with `|support| - 1` degrees of freedom.
pub fn chi_square_digit_test(observed: &DigitDistribution, expected: &DigitDistribution) -> Result<DigitTestResult> {
    let n = check_pair(observed, expected)?;
    let nf = n as f64;
    let statistic: f64 = observed
        .weights
        .iter()
        .zip(&expected.weights)
        .map(|(&o, &p)| {
            let e = nf * p;
            (o - e) * (o - e) / e
        })
        .sum();
    let df = observed.weights.len() - 1;
    let bf = bayes_factor_digit_test(observed, expected)?;
    Ok(DigitTestResult {
        position: observed.position,
        chi_square: statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
        log_bayes_factor: bf.log_bayes_factor,
        sample_size: n,
        low_information: bf.low_information,
        bayes_factor_method: bf.method,
    })
}

/// `log BF = l_null - l_sat + ((K - 1) / 2) ln N`.
pub fn bayes_factor_digit_test(observed: &DigitDistribution, expected: &DigitDistribution) -> Result<BayesFactorResult> {
    let n = check_pair(observed, expected)?;
    let nf = n as f64;
    let mut ll_null = 0.0;
    let mut ll_sat = 0.0;
    for (&o, &p) in observed.weights.iter().zip(&expected.weights) {
        if o > 0.0 {
            ll_null += o * p.ln();
            ll_sat += o * (o / nf).ln();
        }
    }
    let k = observed.weights.len() as f64;
    Ok(BayesFactorResult {
        log_bayes_factor: ll_null - ll_sat + 0.5 * (k - 1.0) * nf.ln(),
        sample_size: n,
        low_information: low_information(expected, n),
        method: BAYES_FACTOR_METHOD.to_string(),
    })
}

/// Generative model for capped counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GenerativeModel {
    /// Counts uniform on `0..=cap`.
    UniformZeroCap,
    /// Counts ~ Binomial(nu, p) with `nu <= cap`.
    Binomial { nu: u64, p: f64 },
}

pub const MIN_REFERENCE_REPS: u64 = 10_000;
const SHARD_SIZE: u64 = 1 << 16;

/// Monte-Carlo digit distribution of counts drawn from `model`.
///
/// Draws are split into fixed-size shards, each seeded from `(seed, shard)`,
/// and the counts are summed, so the result does not depend on scheduling.
pub fn bounded_reference_pmf(
    position: u8,
    cap: u64,
    model: GenerativeModel,
    reps: u64,
    seed: u64,
) -> Result<DigitDistribution> {
    let position = DigitPosition::try_from(position)?;
    if cap < 10 {
        return Err(ForensicsError::param(format!("cap must be at least 10, got {cap}")));
    }
    if reps < MIN_REFERENCE_REPS {
        return Err(ForensicsError::param(format!(
            "reference needs at least {MIN_REFERENCE_REPS} replicates, got {reps}"
        )));
    }
    let binomial = match model {
        GenerativeModel::UniformZeroCap => None,
        GenerativeModel::Binomial { nu, p } => {
            if nu > cap {
                return Err(ForensicsError::param(format!("binomial nu {nu} exceeds cap {cap}")));
            }
            Some(Binomial::new(nu, p).map_err(|e| ForensicsError::param(format!("binomial model: {e}")))?)
        }
    };

    let shards = reps.div_ceil(SHARD_SIZE);
    let (counts, dropped) = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = rng_from_seed(derive_seed_indexed(seed, "bounded-reference", shard));
            let len = SHARD_SIZE.min(reps - shard * SHARD_SIZE);
            let draws = (0..len).map(|_| match &binomial {
                None => rng.random_range(0..=cap),
                Some(b) => b.sample(&mut rng),
            });
            count_digits(draws.collect::<Vec<_>>().into_iter(), position)
        })
        .reduce(
            || (vec![0u64; position.support_len()], 0u64),
            |(mut a, da), (b, db)| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                (a, da + db)
            },
        );
    let valid: u64 = counts.iter().sum();
    if valid == 0 {
        return Err(ForensicsError::insufficient("generative model never produced the requested digit"));
    }
    Ok(DigitDistribution {
        position,
        kind: DistributionKind::Simulated,
        weights: counts.iter().map(|&c| c as f64 / valid as f64).collect(),
        dropped,
    })
}

/// Which tally column feeds the digit test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TallySource {
    MachineYes,
    MachineNo,
    MachineNu,
}

impl TallySource {
    pub fn values(self, dataset: &ElectionDataset) -> Vec<u64> {
        dataset
            .machines
            .iter()
            .map(|m| match self {
                TallySource::MachineYes => m.yes,
                TallySource::MachineNo => m.no,
                TallySource::MachineNu => m.nu,
            })
            .collect()
    }
}

/// Reference distribution for a dataset-level digit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reference", rename_all = "snake_case")]
pub enum DigitReference {
    Benford,
    Bounded { cap: u64, model: GenerativeModel, reps: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitReport {
    pub source: TallySource,
    pub observed: DigitDistribution,
    pub expected: DigitDistribution,
    pub result: DigitTestResult,
}

/// Runs the chi-square and Bayes-factor tests on one tally column.
pub fn digit_test(
    dataset: &ElectionDataset,
    position: u8,
    source: TallySource,
    reference: DigitReference,
    seed: u64,
) -> Result<DigitReport> {
    dataset.ensure_valid()?;
    let observed = digit_histogram(&source.values(dataset), position)?;
    let expected = match reference {
        DigitReference::Benford => benford_pmf(position)?,
        DigitReference::Bounded { cap, model, reps } => bounded_reference_pmf(position, cap, model, reps, seed)?,
    };
    let result = chi_square_digit_test(&observed, &expected)?;
    Ok(DigitReport {
        source,
        observed,
        expected,
        result,
    })
}
