//! Conditional permutation tests of machine-level tallies.
//!
//! Given a center's totals `(Y, N, OUT)` and its machine sizes, the null
//! "voters were randomly assigned to machines" makes every arrangement of the
//! center's vote cards equally likely, i.e. per-machine tallies follow the
//! multivariate hypergeometric law. Replicates are drawn by shuffling the
//! card vector and dealing it into machines in order.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ElectionDataset, MachineTally};
use crate::error::{ForensicsError, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{at_least, fisher_combination, monte_carlo_pvalue, FisherCombination};

pub const MIN_REPS: u64 = 999;

pub const RANDOM_ASSIGNMENT_CAVEAT: &str =
    "assumes voters were randomly assigned to machines within a center; this cannot be checked from tallies";
pub const INDEPENDENCE_CAVEAT: &str = "cross-center combination assumes independent centers";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionKind {
    #[serde(rename = "yes-var")]
    YesShareVariance,
    #[serde(rename = "max-dev")]
    MaxAbsShareDeviation,
    #[serde(rename = "out-var")]
    OutShareVariance,
}

impl DispersionKind {
    pub const ALL: [DispersionKind; 3] = [
        DispersionKind::YesShareVariance,
        DispersionKind::OutShareVariance,
        DispersionKind::MaxAbsShareDeviation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DispersionKind::YesShareVariance => "yes-var",
            DispersionKind::MaxAbsShareDeviation => "max-dev",
            DispersionKind::OutShareVariance => "out-var",
        }
    }
}

impl fmt::Display for DispersionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteCategory {
    Yes,
    No,
    Out,
}

impl VoteCategory {
    fn index(self) -> usize {
        match self {
            VoteCategory::Yes => 0,
            VoteCategory::No => 1,
            VoteCategory::Out => 2,
        }
    }
}

/// YES / NO / OUT counts of one machine or one center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteCounts {
    pub yes: u64,
    pub no: u64,
    pub out: u64,
}

impl VoteCounts {
    pub fn new(yes: u64, no: u64, out: u64) -> Self {
        VoteCounts { yes, no, out }
    }

    pub fn total(&self) -> u64 {
        self.yes + self.no + self.out
    }

    pub fn get(&self, category: VoteCategory) -> u64 {
        self.as_array()[category.index()]
    }

    fn as_array(&self) -> [u64; 3] {
        [self.yes, self.no, self.out]
    }

    fn from_array(a: [u64; 3]) -> Self {
        VoteCounts::new(a[0], a[1], a[2])
    }

    /// YES and NO exchanged.
    pub fn swap_yes_no(&self) -> Self {
        VoteCounts::new(self.no, self.yes, self.out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CenterAllocation {
    pub center_id: String,
    pub machine_ids: Vec<String>,
    pub machines: Vec<VoteCounts>,
}

impl CenterAllocation {
    pub fn new(center_id: impl Into<String>, machines: Vec<VoteCounts>) -> Self {
        let machine_ids = (1..=machines.len()).map(|i| format!("M{i}")).collect();
        CenterAllocation {
            center_id: center_id.into(),
            machine_ids,
            machines,
        }
    }

    pub fn from_tallies(center_id: &str, tallies: &[&MachineTally]) -> Self {
        CenterAllocation {
            center_id: center_id.to_string(),
            machine_ids: tallies.iter().map(|m| m.machine_id.clone()).collect(),
            machines: tallies.iter().map(|m| VoteCounts::new(m.yes, m.no, m.out)).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<u64> {
        self.machines.iter().map(VoteCounts::total).collect()
    }

    pub fn totals(&self) -> VoteCounts {
        self.machines.iter().fold(VoteCounts::default(), |acc, m| {
            VoteCounts::new(acc.yes + m.yes, acc.no + m.no, acc.out + m.out)
        })
    }
}

/// Reusable card deck for one center.
struct Dealer {
    cards: Vec<u8>,
    sizes: Vec<u64>,
    totals: [u64; 3],
}

impl Dealer {
    fn new(sizes: &[u64], totals: VoteCounts) -> Result<Self> {
        let sum: u64 = sizes.iter().sum();
        if sum != totals.total() {
            return Err(ForensicsError::param(format!(
                "machine sizes sum to {sum} but center totals sum to {}",
                totals.total()
            )));
        }
        let mut cards = Vec::with_capacity(sum as usize);
        for (label, &count) in totals.as_array().iter().enumerate() {
            cards.extend(std::iter::repeat_n(label as u8, count as usize));
        }
        Ok(Dealer {
            cards,
            sizes: sizes.to_vec(),
            totals: totals.as_array(),
        })
    }

    /// Shuffles and deals; the last machine takes whatever remains, so only
    /// the cards of the other machines need to be drawn.
    fn deal(&mut self, rng: &mut ChaCha8Rng, out: &mut [[u64; 3]]) {
        let n = self.cards.len();
        let mut pos = 0usize;
        let last = self.sizes.len() - 1;
        let mut dealt = [0u64; 3];
        for (m, &size) in self.sizes[..last].iter().enumerate() {
            let mut counts = [0u64; 3];
            for _ in 0..size {
                let j = rng.random_range(pos..n);
                self.cards.swap(pos, j);
                counts[self.cards[pos] as usize] += 1;
                pos += 1;
            }
            for c in 0..3 {
                dealt[c] += counts[c];
            }
            out[m] = counts;
        }
        out[last] = [
            self.totals[0] - dealt[0],
            self.totals[1] - dealt[1],
            self.totals[2] - dealt[2],
        ];
    }
}

/// One draw from the conditional law of per-machine tallies given `sizes` and `totals`.
pub fn sample_allocation(sizes: &[u64], totals: VoteCounts, seed: u64) -> Result<Vec<VoteCounts>> {
    if sizes.is_empty() {
        return Err(ForensicsError::param("a center needs at least one machine"));
    }
    let mut dealer = Dealer::new(sizes, totals)?;
    let mut rng = rng_from_seed(seed);
    let mut out = vec![[0u64; 3]; sizes.len()];
    dealer.deal(&mut rng, &mut out);
    Ok(out.into_iter().map(VoteCounts::from_array).collect())
}

fn share_dispersion(counts: &[[u64; 3]], category: usize, max_dev: bool) -> f64 {
    let size = |c: &[u64; 3]| c[0] + c[1] + c[2];
    let total: u64 = counts.iter().map(size).sum();
    let in_category: u64 = counts.iter().map(|c| c[category]).sum();
    let center_share = in_category as f64 / total as f64;
    let deviations = counts.iter().map(|c| {
        let nu = size(c) as f64;
        (nu, c[category] as f64 / nu - center_share)
    });
    if max_dev {
        deviations.map(|(_, d)| d.abs()).fold(0.0, f64::max)
    } else {
        deviations.map(|(nu, d)| nu * d * d).sum::<f64>() / total as f64
    }
}

fn statistic_of(kind: DispersionKind, counts: &[[u64; 3]]) -> f64 {
    match kind {
        DispersionKind::YesShareVariance => share_dispersion(counts, 0, false),
        DispersionKind::OutShareVariance => share_dispersion(counts, 2, false),
        DispersionKind::MaxAbsShareDeviation => share_dispersion(counts, 0, true),
    }
}

fn check_dispersion_input(machines: &[VoteCounts]) -> Result<()> {
    if machines.len() < 2 {
        return Err(ForensicsError::param("dispersion needs at least two machines"));
    }
    if machines.iter().any(|m| m.total() == 0) {
        return Err(ForensicsError::param("every machine needs at least one vote"));
    }
    Ok(())
}

/// Size-weighted dispersion of per-machine shares around the center share.
pub fn dispersion_statistic(allocation: &CenterAllocation, kind: DispersionKind) -> Result<f64> {
    check_dispersion_input(&allocation.machines)?;
    let counts: Vec<[u64; 3]> = allocation.machines.iter().map(VoteCounts::as_array).collect();
    Ok(statistic_of(kind, &counts))
}

/// ν-weighted variance of the per-machine share of any category.
pub fn category_share_variance(machines: &[VoteCounts], category: VoteCategory) -> Result<f64> {
    check_dispersion_input(machines)?;
    let counts: Vec<[u64; 3]> = machines.iter().map(VoteCounts::as_array).collect();
    Ok(share_dispersion(&counts, category.index(), false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub center_id: String,
    pub statistic: DispersionKind,
    pub observed: f64,
    pub reps: u64,
    /// Replicates with statistic >= observed.
    pub exceed: u64,
    /// `(1 + exceed) / (reps + 1)`.
    pub p_value: f64,
    pub seed: u64,
}

/// Monte-Carlo conditional p-value for one center.
pub fn center_permutation_test(
    allocation: &CenterAllocation,
    kind: DispersionKind,
    reps: u64,
    seed: u64,
) -> Result<PermutationTestResult> {
    let observed = dispersion_statistic(allocation, kind)?;
    let sizes = allocation.sizes();
    let mut dealer = Dealer::new(&sizes, allocation.totals())?;
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![[0u64; 3]; sizes.len()];
    let mut exceed = 0u64;
    for _ in 0..reps {
        dealer.deal(&mut rng, &mut buf);
        if at_least(statistic_of(kind, &buf), observed) {
            exceed += 1;
        }
    }
    Ok(PermutationTestResult {
        center_id: allocation.center_id.clone(),
        statistic: kind,
        observed,
        reps,
        exceed,
        p_value: monte_carlo_pvalue(exceed, reps),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCenter {
    pub center_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    pub count: usize,
    pub fraction: f64,
}

pub fn threshold_counts(p_values: &[f64], thresholds: &[f64]) -> Vec<ThresholdCount> {
    thresholds
        .iter()
        .map(|&t| {
            let count = p_values.iter().filter(|&&p| p < t).count();
            ThresholdCount {
                threshold: t,
                count,
                fraction: if p_values.is_empty() { 0.0 } else { count as f64 / p_values.len() as f64 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSummary {
    pub tested: usize,
    pub excluded: usize,
    pub below_thresholds: Vec<ThresholdCount>,
    pub fisher: FisherCombination,
    pub assumptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub statistic: DispersionKind,
    pub reps: u64,
    pub seed: u64,
    pub results: Vec<PermutationTestResult>,
    pub excluded: Vec<ExcludedCenter>,
    pub summary: PermutationSummary,
    pub caveats: Vec<String>,
}

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.05, 0.01];

pub(crate) fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    match thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        Some(t) => Err(ForensicsError::param(format!("threshold {t} outside (0, 1)"))),
        None => Ok(()),
    }
}

/// Per-center conditional tests over every center with two or more voting machines.
///
/// Machines with zero votes carry no cards and are ignored. Each center's
/// replicate stream is seeded from `(seed, center_id)`, so results do not
/// depend on scheduling.
pub fn permutation_test(
    dataset: &ElectionDataset,
    kind: DispersionKind,
    reps: u64,
    seed: u64,
    thresholds: &[f64],
) -> Result<PermutationReport> {
    dataset.ensure_valid()?;
    if reps < MIN_REPS {
        return Err(ForensicsError::param(format!("need at least {MIN_REPS} replicates, got {reps}")));
    }
    check_thresholds(thresholds)?;

    let mut eligible = Vec::new();
    let mut excluded = Vec::new();
    for (center_id, machines) in dataset.machines_by_center() {
        let voting: Vec<&MachineTally> = machines.into_iter().filter(|m| m.nu > 0).collect();
        if voting.len() < 2 {
            excluded.push(ExcludedCenter {
                center_id: center_id.to_string(),
                reason: "fewer than two machines with votes".to_string(),
            });
        } else {
            eligible.push(CenterAllocation::from_tallies(center_id, &voting));
        }
    }
    if eligible.is_empty() {
        return Err(ForensicsError::insufficient("no center has two or more machines with votes"));
    }

    let results = eligible
        .par_iter()
        .map(|alloc| center_permutation_test(alloc, kind, reps, derive_seed(seed, &alloc.center_id)))
        .collect::<Result<Vec<_>>>()?;

    let p_values: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let summary = PermutationSummary {
        tested: results.len(),
        excluded: excluded.len(),
        below_thresholds: threshold_counts(&p_values, thresholds),
        fisher: fisher_combination(&p_values).expect("at least one center"),
        assumptions: vec![INDEPENDENCE_CAVEAT.to_string()],
    };
    Ok(PermutationReport {
        statistic: kind,
        reps,
        seed,
        results,
        excluded,
        summary,
        caveats: vec![RANDOM_ASSIGNMENT_CAVEAT.to_string()],
    })
}
