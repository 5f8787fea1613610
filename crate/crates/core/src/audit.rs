//! Post-election audit planning and audited-sample representativeness.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::dataset::ElectionDataset;
use crate::error::{ForensicsError, Result};
use crate::rng::{count_sharded, derive_seed};
use crate::stats::{at_least, mean, monte_carlo_pvalue};

/// The fixed-percentage rule audits this fraction of precincts.
pub const BASELINE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FlipBound {
    /// Smallest number of corrupted precincts that can overturn the margin.
    Flip { k: usize },
    /// Even corrupting every precinct cannot overturn the margin.
    AuditUnnecessary,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(ForensicsError::param(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    Ok(())
}

/// Greedy largest-first bound: a fully corrupted precinct shifts the margin by at most `2·λ·ballots`.
pub fn min_flip_precincts(margin: u64, ballots: &[u64], lambda: f64) -> Result<FlipBound> {
    if margin == 0 {
        return Err(ForensicsError::param("margin must be positive"));
    }
    check_lambda(lambda)?;
    // cumulative ballots must reach M / (2λ), with λ read as the decimal it prints as
    let lambda_exact = decimal_rational(lambda, "lambda")?;
    let needed = (BigRational::from_integer(BigInt::from(margin)) / (lambda_exact * BigInt::from(2))).ceil().to_integer();
    let mut sorted = ballots.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut cumulative = BigInt::zero();
    for (i, &b) in sorted.iter().enumerate() {
        cumulative += b;
        if cumulative >= needed {
            return Ok(FlipBound::Flip { k: i + 1 });
        }
    }
    Ok(FlipBound::AuditUnnecessary)
}

fn check_counts(n_precincts: u64, k: u64, n: u64) -> Result<()> {
    if k == 0 || k > n_precincts {
        return Err(ForensicsError::param(format!(
            "tainted count k={k} must satisfy 1 <= k <= N={n_precincts}"
        )));
    }
    if n > n_precincts {
        return Err(ForensicsError::param(format!("sample size n={n} exceeds N={n_precincts}")));
    }
    Ok(())
}

/// Probability that a uniform sample of `n` of `N` precincts contains at least one of `k` tainted ones.
///
/// Evaluates `1 - C(N-k, n)/C(N, n)` as the product `Π (N-k-i)/(N-i)`.
pub fn detection_probability(n_precincts: u64, k: u64, n: u64) -> Result<f64> {
    check_counts(n_precincts, k, n)?;
    if n > n_precincts - k {
        return Ok(1.0);
    }
    let mut miss = 1.0f64;
    for i in 0..n {
        miss *= (n_precincts - k - i) as f64 / (n_precincts - i) as f64;
    }
    Ok((1.0 - miss).clamp(0.0, 1.0))
}

/// Exact miss probability `C(N-k, n)/C(N, n)`.
pub fn miss_probability_exact(n_precincts: u64, k: u64, n: u64) -> Result<BigRational> {
    check_counts(n_precincts, k, n)?;
    let mut q = BigRational::one();
    for i in 0..n {
        if n_precincts - k < i + 1 {
            return Ok(BigRational::zero());
        }
        q *= BigRational::new(BigInt::from(n_precincts - k - i), BigInt::from(n_precincts - i));
    }
    Ok(q)
}

/// The decimal value a float prints as, e.g. `0.9` becomes exactly 9/10.
fn decimal_rational(x: f64, name: &str) -> Result<BigRational> {
    let text = format!("{x}");
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let digits: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|_| ForensicsError::param(format!("{name} {x} is not a plain decimal")))?;
    let scale = num_traits::pow(BigInt::from(10), frac_part.len());
    Ok(BigRational::new(digits, scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub fraction: f64,
    pub sample_size: u64,
    pub detection_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPlan {
    pub precincts: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ballots: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub min_flip: u64,
    pub confidence: f64,
    pub sample_size: u64,
    pub detection_probability: f64,
    /// What auditing a fixed 1% of precincts (rounded up) would achieve.
    pub baseline: BaselineComparison,
}

/// Smallest `n` whose detection probability reaches `confidence`, by exact rational search.
pub fn plan_sample_size(n_precincts: u64, k: u64, confidence: f64) -> Result<AuditPlan> {
    check_counts(n_precincts, k, 0)?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(ForensicsError::param(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let alpha = BigRational::one() - decimal_rational(confidence, "confidence")?;
    let mut miss = BigRational::one();
    let mut n = 0u64;
    while miss > alpha {
        if n >= n_precincts - k {
            miss = BigRational::zero();
        } else {
            miss *= BigRational::new(BigInt::from(n_precincts - k - n), BigInt::from(n_precincts - n));
        }
        n += 1;
    }
    let baseline_n = ((n_precincts as f64 * BASELINE_FRACTION).ceil() as u64).min(n_precincts);
    Ok(AuditPlan {
        precincts: n_precincts,
        ballots: None,
        margin: None,
        lambda: None,
        min_flip: k,
        confidence,
        sample_size: n,
        detection_probability: detection_probability(n_precincts, k, n)?,
        baseline: BaselineComparison {
            fraction: BASELINE_FRACTION,
            sample_size: baseline_n,
            detection_probability: detection_probability(n_precincts, k, baseline_n)?,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum AuditOutcome {
    Planned(AuditPlan),
    AuditUnnecessary {
        precincts: u64,
        margin: u64,
        lambda: f64,
        /// Largest margin shift achievable by corrupting every precinct.
        max_shift: f64,
    },
}

/// Full planner: minimum flip count from the margin, then the sample size.
pub fn plan_audit(margin: u64, ballots: &[u64], lambda: f64, confidence: f64) -> Result<AuditOutcome> {
    if ballots.is_empty() {
        return Err(ForensicsError::param("no precincts supplied"));
    }
    let n_precincts = ballots.len() as u64;
    match min_flip_precincts(margin, ballots, lambda)? {
        FlipBound::AuditUnnecessary => Ok(AuditOutcome::AuditUnnecessary {
            precincts: n_precincts,
            margin,
            lambda,
            max_shift: 2.0 * lambda * ballots.iter().map(|&b| b as f64).sum::<f64>(),
        }),
        FlipBound::Flip { k } => {
            let mut plan = plan_sample_size(n_precincts, k as u64, confidence)?;
            plan.ballots = Some(ballots.to_vec());
            plan.margin = Some(margin);
            plan.lambda = Some(lambda);
            Ok(AuditOutcome::Planned(plan))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Covariate {
    /// Registered voters.
    Size,
    /// Fraction of computerized centers.
    Computerized,
    /// Region frequencies, as a chi-square distance from the population mix.
    Region,
    /// YES share of votes cast.
    YesShare,
}

impl Covariate {
    pub const ALL: [Covariate; 4] = [Covariate::Size, Covariate::Computerized, Covariate::Region, Covariate::YesShare];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Size => "size",
            Covariate::Computerized => "computerized",
            Covariate::Region => "region",
            Covariate::YesShare => "yes-share",
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = ForensicsError;

    fn from_str(s: &str) -> Result<Self> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ForensicsError::param(format!("unknown covariate {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateResult {
    pub covariate: Covariate,
    pub audited_n: usize,
    pub population_n: usize,
    /// Mean over the audited centers, or the chi-square distance for regions.
    pub audited_value: f64,
    /// Population mean; 0 for regions.
    pub population_value: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomnessReport {
    pub audited: usize,
    pub centers: usize,
    pub results: Vec<CovariateResult>,
    pub notes: Vec<String>,
}

/// Distance of a subset's category mix from the population mix.
fn region_distance(codes: &[usize], subset: &[usize], population_share: &[f64]) -> f64 {
    let mut counts = vec![0.0; population_share.len()];
    for &i in subset {
        counts[codes[i]] += 1.0;
    }
    let m = subset.len() as f64;
    counts
        .iter()
        .zip(population_share)
        .map(|(&c, &p)| {
            let e = m * p;
            (c - e) * (c - e) / e
        })
        .sum()
}

enum Values {
    Numeric(Vec<f64>),
    Categorical { codes: Vec<usize>, shares: Vec<f64> },
}

impl Values {
    fn statistic(&self, subset: &[usize]) -> (f64, f64) {
        match self {
            Values::Numeric(v) => {
                let sub = subset.iter().map(|&i| v[i]).sum::<f64>() / subset.len() as f64;
                (sub, (sub - mean(v)).abs())
            }
            Values::Categorical { codes, shares } => {
                let d = region_distance(codes, subset, shares);
                (d, d)
            }
        }
    }
}

/// Permutation test per covariate: is the audited subset typical of random subsets of its size?
pub fn sample_randomness_check(
    dataset: &ElectionDataset,
    audited: &BTreeSet<String>,
    covariates: &[Covariate],
    reps: u64,
    seed: u64,
) -> Result<RandomnessReport> {
    dataset.ensure_valid()?;
    if audited.is_empty() {
        return Err(ForensicsError::param("audited set is empty"));
    }
    let index = dataset.center_index();
    if let Some(missing) = audited.iter().find(|id| !index.contains_key(id.as_str())) {
        return Err(ForensicsError::param(format!("audited center {missing:?} is not in the dataset")));
    }
    if audited.len() >= dataset.centers.len() {
        return Err(ForensicsError::param("audited set covers every center; nothing to compare against"));
    }
    let totals = dataset.center_totals();
    let centers = dataset.sorted_centers();
    let mut notes = Vec::new();
    let mut results = Vec::new();
    for &cov in covariates {
        let mut ids: Vec<&str> = Vec::new();
        let values = match cov {
            Covariate::Size | Covariate::Computerized | Covariate::YesShare => {
                let mut v = Vec::new();
                for c in &centers {
                    let x = match cov {
                        Covariate::Size => Some(c.registered as f64),
                        Covariate::Computerized => Some(if c.computerized { 1.0 } else { 0.0 }),
                        _ => totals.get(c.center_id.as_str()).and_then(|t| t.yes_share_of_cast()),
                    };
                    if let Some(x) = x {
                        ids.push(&c.center_id);
                        v.push(x);
                    }
                }
                Values::Numeric(v)
            }
            Covariate::Region => {
                let mut levels: BTreeMap<&str, usize> = BTreeMap::new();
                for c in &centers {
                    let next = levels.len();
                    levels.entry(c.region.as_str()).or_insert(next);
                }
                let mut codes = Vec::new();
                let mut counts = vec![0.0; levels.len()];
                for c in &centers {
                    ids.push(&c.center_id);
                    let code = levels[c.region.as_str()];
                    codes.push(code);
                    counts[code] += 1.0;
                }
                let n = codes.len() as f64;
                Values::Categorical {
                    codes,
                    shares: counts.iter().map(|c| c / n).collect(),
                }
            }
        };
        let position: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let subset: Vec<usize> = audited.iter().filter_map(|id| position.get(id.as_str()).copied()).collect();
        let population_n = ids.len();
        if subset.is_empty() || subset.len() == population_n {
            notes.push(format!("{cov}: audited centers with this covariate do not form a proper subset; skipped"));
            continue;
        }
        let (audited_value, statistic) = values.statistic(&subset);
        let population_value = match &values {
            Values::Numeric(v) => mean(v),
            Values::Categorical { .. } => 0.0,
        };
        let cov_seed = derive_seed(seed, cov.name());
        let m = subset.len();
        let exceed = count_sharded(
            reps,
            cov_seed,
            "audit-subset",
            || (),
            |rng, _| {
                let draw = sample_indices(rng, population_n, m).into_vec();
                at_least(values.statistic(&draw).1, statistic)
            },
        );
        results.push(CovariateResult {
            covariate: cov,
            audited_n: m,
            population_n,
            audited_value,
            population_value,
            statistic,
            p_value: monte_carlo_pvalue(exceed, reps),
            reps,
            seed: cov_seed,
        });
    }
    Ok(RandomnessReport {
        audited: audited.len(),
        centers: dataset.centers.len(),
        results,
        notes,
    })
}

/// Reads the `ballots` column of a precinct CSV; other columns are ignored.
pub fn read_ballots(path: &std::path::Path) -> Result<Vec<u64>> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| ForensicsError::MalformedRow {
        file: file.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    let headers = reader.headers().map_err(|e| ForensicsError::MalformedRow {
        file: file.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    let column = headers.iter().position(|h| h.trim() == "ballots").ok_or_else(|| ForensicsError::MalformedRow {
        file: file.clone(),
        line: 1,
        message: "missing `ballots` column".into(),
    })?;
    let mut ballots = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| ForensicsError::MalformedRow {
            file: file.clone(),
            line,
            message: e.to_string(),
        })?;
        let cell = record.get(column).unwrap_or("").trim();
        ballots.push(cell.parse::<u64>().map_err(|_| ForensicsError::MalformedRow {
            file: file.clone(),
            line,
            message: format!("ballots {cell:?} is not a non-negative integer"),
        })?);
    }
    Ok(ballots)
}

/// One center id per line; blank lines and `#` comments are skipped.
pub fn parse_audited_ids(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
