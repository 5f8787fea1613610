//! Signature-share correlations and the residual-correlation test.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::ElectionDataset;
use crate::error::{ForensicsError, Result};
use crate::rng::{count_sharded, derive_seed};
use crate::stats::{
    at_least, correlation_pvalue, median, monte_carlo_pvalue, ols, pearson, Alternative,
};

pub const MIN_GROUP_SIZE: usize = 3;
pub const MIN_RESIDUAL_CENTERS: usize = 10;
/// Correlation above which a group counts as "high" in cross-election tables.
pub const HIGH_CORRELATION: f64 = 0.8;

pub const ASSOCIATION_CAVEAT: &str = "correlations describe association only; they do not establish tampering";
pub const RESIDUAL_SPECIFICATION: &str = "signature share and exit-poll YES share each regressed on the official YES share of valid votes (unweighted OLS with intercept); residuals correlated";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grouping {
    /// Low/high signature share; threshold defaults to the dataset median.
    SignatureSplit(Option<f64>),
    ComputerizedVsManual,
    /// `k` groups of near-equal size by registered voters.
    SizeQuantiles(usize),
    None,
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grouping::SignatureSplit(None) => f.write_str("sig-split"),
            Grouping::SignatureSplit(Some(t)) => write!(f, "sig-split:{t}"),
            Grouping::ComputerizedVsManual => f.write_str("comp-manual"),
            Grouping::SizeQuantiles(k) => write!(f, "size-q:{k}"),
            Grouping::None => f.write_str("none"),
        }
    }
}

impl FromStr for Grouping {
    type Err = ForensicsError;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let bad = || ForensicsError::param(format!("unrecognised grouping {s:?}"));
        match (head, arg) {
            ("sig-split", None) => Ok(Grouping::SignatureSplit(None)),
            ("sig-split", Some(t)) => {
                let t: f64 = t.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&t) {
                    return Err(ForensicsError::param(format!("signature threshold {t} outside [0, 1]")));
                }
                Ok(Grouping::SignatureSplit(Some(t)))
            }
            ("comp-manual", None) => Ok(Grouping::ComputerizedVsManual),
            ("size-q", Some(k)) => match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Grouping::SizeQuantiles(k)),
                _ => Err(bad()),
            },
            ("none", None) => Ok(Grouping::None),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Grouping {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Grouping {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub group: String,
    pub n: usize,
    pub r: f64,
    /// Two-sided Fisher-z p-value.
    pub analytic_p: f64,
    /// Two-sided permutation p-value with add-one correction.
    pub permutation_p: f64,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GroupOutcome {
    Tested(CorrelationResult),
    Untestable { group: String, n: usize, reason: String },
}

impl GroupOutcome {
    pub fn group(&self) -> &str {
        match self {
            GroupOutcome::Tested(r) => &r.group,
            GroupOutcome::Untestable { group, .. } => group,
        }
    }

    pub fn tested(&self) -> Option<&CorrelationResult> {
        match self {
            GroupOutcome::Tested(r) => Some(r),
            GroupOutcome::Untestable { .. } => None,
        }
    }
}

/// Per-center inputs for the signature correlation.
#[derive(Debug, Clone)]
struct CenterShares<'a> {
    center_id: &'a str,
    computerized: bool,
    registered: u64,
    signature_share: f64,
    yes_share: f64,
}

fn center_shares(dataset: &ElectionDataset) -> Vec<CenterShares<'_>> {
    let totals = dataset.center_totals();
    dataset
        .sorted_centers()
        .into_iter()
        .filter_map(|c| {
            let t = totals.get(c.center_id.as_str())?;
            Some(CenterShares {
                center_id: &c.center_id,
                computerized: c.computerized,
                registered: c.registered,
                signature_share: c.signature_share()?,
                yes_share: t.yes_share_of_cast()?,
            })
        })
        .collect()
}

/// Permutation p-value of a correlation by shuffling `y`.
fn permutation_correlation_p(x: &[f64], y: &[f64], observed: f64, alternative: Alternative, reps: u64, seed: u64) -> f64 {
    let signed = |r: f64| match alternative {
        Alternative::TwoSided => r.abs(),
        Alternative::Greater => r,
    };
    let target = signed(observed);
    let exceed = count_sharded(
        reps,
        seed,
        "correlation",
        || y.to_vec(),
        |rng, shuffled| {
            shuffled.shuffle(rng);
            at_least(signed(pearson(x, shuffled).unwrap_or(0.0)), target)
        },
    );
    monte_carlo_pvalue(exceed, reps)
}

fn correlate_group(group: String, x: &[f64], y: &[f64], reps: u64, seed: u64) -> GroupOutcome {
    let n = x.len();
    if n < MIN_GROUP_SIZE {
        return GroupOutcome::Untestable {
            group,
            n,
            reason: format!("fewer than {MIN_GROUP_SIZE} centers"),
        };
    }
    let Some(r) = pearson(x, y) else {
        return GroupOutcome::Untestable {
            group,
            n,
            reason: "zero variance in signature share or YES share".to_string(),
        };
    };
    let group_seed = derive_seed(seed, &group);
    GroupOutcome::Tested(CorrelationResult {
        n,
        r,
        analytic_p: correlation_pvalue(r, n, Alternative::TwoSided),
        permutation_p: permutation_correlation_p(x, y, r, Alternative::TwoSided, reps, group_seed),
        reps,
        seed: group_seed,
        group,
    })
}

fn format_threshold(t: f64) -> String {
    format!("{t:.4}")
}

/// Pearson correlation between YES share (of votes cast) and signature share, per group.
pub fn signature_share_correlation(
    dataset: &ElectionDataset,
    grouping: Grouping,
    reps: u64,
    seed: u64,
) -> Result<Vec<GroupOutcome>> {
    dataset.ensure_valid()?;
    let shares = center_shares(dataset);
    if shares.is_empty() {
        return Err(ForensicsError::insufficient(
            "no center has both registered voters and votes cast",
        ));
    }
    let mut groups: Vec<(String, Vec<&CenterShares>)> = match grouping {
        Grouping::None => vec![("all".to_string(), shares.iter().collect())],
        Grouping::ComputerizedVsManual => vec![
            ("computerized".to_string(), shares.iter().filter(|s| s.computerized).collect()),
            ("manual".to_string(), shares.iter().filter(|s| !s.computerized).collect()),
        ],
        Grouping::SignatureSplit(threshold) => {
            let t = threshold.unwrap_or_else(|| {
                median(&shares.iter().map(|s| s.signature_share).collect::<Vec<_>>())
            });
            vec![
                (
                    format!("signature<{}", format_threshold(t)),
                    shares.iter().filter(|s| s.signature_share < t).collect(),
                ),
                (
                    format!("signature>={}", format_threshold(t)),
                    shares.iter().filter(|s| s.signature_share >= t).collect(),
                ),
            ]
        }
        Grouping::SizeQuantiles(k) => {
            let mut sorted: Vec<&CenterShares> = shares.iter().collect();
            sorted.sort_by(|a, b| a.registered.cmp(&b.registered).then(a.center_id.cmp(b.center_id)));
            let n = sorted.len();
            (0..k)
                .map(|q| {
                    let lo = q * n / k;
                    let hi = (q + 1) * n / k;
                    (format!("size-q{}", q + 1), sorted[lo..hi].to_vec())
                })
                .collect()
        }
    };
    Ok(groups
        .drain(..)
        .map(|(label, members)| {
            let x: Vec<f64> = members.iter().map(|s| s.signature_share).collect();
            let y: Vec<f64> = members.iter().map(|s| s.yes_share).collect();
            correlate_group(label, &x, &y, reps, seed)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionRow {
    pub election: String,
    pub groups: Vec<GroupOutcome>,
    /// Every group tested and every r >= [`HIGH_CORRELATION`] (at least two groups).
    pub all_groups_high: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossElectionTable {
    pub grouping: Grouping,
    pub shared_centers: usize,
    pub high_threshold: f64,
    pub rows: Vec<ElectionRow>,
    /// Elections whose groups are all highly correlated while some other election's are not.
    pub flagged: Vec<String>,
    pub caveats: Vec<String>,
}

/// The signature correlation table across several elections held in the same centers.
pub fn cross_election_correlation(
    datasets: &[&ElectionDataset],
    grouping: Grouping,
    reps: u64,
    seed: u64,
) -> Result<CrossElectionTable> {
    if datasets.len() < 2 {
        return Err(ForensicsError::param("cross-election comparison needs at least two datasets"));
    }
    let mut shared: HashSet<&str> = datasets[0].centers.iter().map(|c| c.center_id.as_str()).collect();
    for d in &datasets[1..] {
        let ids: HashSet<&str> = d.centers.iter().map(|c| c.center_id.as_str()).collect();
        shared.retain(|id| ids.contains(id));
    }
    if shared.len() < MIN_GROUP_SIZE {
        return Err(ForensicsError::insufficient(format!(
            "datasets share {} center(s); at least {MIN_GROUP_SIZE} required",
            shared.len()
        )));
    }
    let mut rows = Vec::with_capacity(datasets.len());
    for d in datasets {
        let groups = signature_share_correlation(&d.restricted_to(&shared), grouping, reps, seed)?;
        let tested: Vec<&CorrelationResult> = groups.iter().filter_map(GroupOutcome::tested).collect();
        let all_groups_high = tested.len() >= 2
            && tested.len() == groups.len()
            && tested.iter().all(|r| r.r >= HIGH_CORRELATION);
        rows.push(ElectionRow {
            election: d.label.clone(),
            groups,
            all_groups_high,
        });
    }
    let any_not_high = rows.iter().any(|r| !r.all_groups_high);
    let flagged = if any_not_high {
        rows.iter().filter(|r| r.all_groups_high).map(|r| r.election.clone()).collect()
    } else {
        Vec::new()
    };
    Ok(CrossElectionTable {
        grouping,
        shared_centers: shared.len(),
        high_threshold: HIGH_CORRELATION,
        rows,
        flagged,
        caveats: vec![ASSOCIATION_CAVEAT.to_string()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCorrelationResult {
    pub n: usize,
    pub signature_fit: FitSummary,
    pub poll_fit: FitSummary,
    pub r: f64,
    pub alternative: Alternative,
    pub analytic_p: f64,
    pub permutation_p: f64,
    pub reps: u64,
    pub seed: u64,
    pub specification: String,
    pub caveats: Vec<String>,
    #[serde(skip)]
    pub signature_residuals: Vec<f64>,
    #[serde(skip)]
    pub poll_residuals: Vec<f64>,
}

/// Residual correlation on explicit share vectors.
///
/// Each intent measurement is regressed on the official share; under honest
/// counting the two residual vectors carry independent measurement errors, and
/// a shock common to the recorded count shows up in both.
pub fn residual_correlation_from_shares(
    official: &[f64],
    signature: &[f64],
    poll: &[f64],
    reps: u64,
    seed: u64,
    alternative: Alternative,
) -> Result<ResidualCorrelationResult> {
    let n = official.len();
    if signature.len() != n || poll.len() != n {
        return Err(ForensicsError::param("share vectors differ in length"));
    }
    if n < MIN_RESIDUAL_CENTERS {
        return Err(ForensicsError::insufficient(format!(
            "{n} centers have signatures, tallies and exit polls; at least {MIN_RESIDUAL_CENTERS} required"
        )));
    }
    let zero_var = || ForensicsError::insufficient("official YES share has zero variance across centers");
    let sig_fit = ols(official, signature).ok_or_else(zero_var)?;
    let poll_fit = ols(official, poll).ok_or_else(zero_var)?;
    let r = pearson(&sig_fit.residuals, &poll_fit.residuals)
        .ok_or_else(|| ForensicsError::insufficient("a residual vector has zero variance"))?;
    let permutation_p =
        permutation_correlation_p(&sig_fit.residuals, &poll_fit.residuals, r, alternative, reps, seed);
    Ok(ResidualCorrelationResult {
        n,
        signature_fit: FitSummary {
            slope: sig_fit.slope,
            intercept: sig_fit.intercept,
        },
        poll_fit: FitSummary {
            slope: poll_fit.slope,
            intercept: poll_fit.intercept,
        },
        r,
        alternative,
        analytic_p: correlation_pvalue(r, n, alternative),
        permutation_p,
        reps,
        seed,
        specification: RESIDUAL_SPECIFICATION.to_string(),
        caveats: vec![ASSOCIATION_CAVEAT.to_string()],
        signature_residuals: sig_fit.residuals,
        poll_residuals: poll_fit.residuals,
    })
}

/// Share vectors `(official, signature, poll)` for centers with all three measurements.
pub fn residual_inputs(dataset: &ElectionDataset) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let totals = dataset.center_totals();
    let polls = dataset.polls_by_center(None);
    let mut official = Vec::new();
    let mut signature = Vec::new();
    let mut poll = Vec::new();
    for c in dataset.sorted_centers() {
        let id = c.center_id.as_str();
        let (Some(sig), Some(off), Some(&(m, k))) = (
            c.signature_share(),
            totals.get(id).and_then(|t| t.yes_share_of_valid()),
            polls.get(id),
        ) else {
            continue;
        };
        if m == 0 {
            continue;
        }
        official.push(off);
        signature.push(sig);
        poll.push(k as f64 / m as f64);
    }
    (official, signature, poll)
}

/// Residual-correlation test over the centers with signatures, tallies and exit polls.
pub fn residual_correlation_test(
    dataset: &ElectionDataset,
    reps: u64,
    seed: u64,
    alternative: Alternative,
) -> Result<ResidualCorrelationResult> {
    dataset.ensure_valid()?;
    let (official, signature, poll) = residual_inputs(dataset);
    residual_correlation_from_shares(&official, &signature, &poll, reps, seed, alternative)
}
