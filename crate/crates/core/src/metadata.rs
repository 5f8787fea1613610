//! Transmission-metadata forensics: traffic-class comparisons and bytes versus votes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{ElectionDataset, TrafficClass};
use crate::error::{ForensicsError, Result};
use crate::rng::count_sharded;
use crate::stats::{at_least, median, monte_carlo_pvalue, ols, rank_sum_test, RankSumMethod};

pub const MIN_CLASS_SIZE: usize = 5;
pub const MIN_REGRESSION_CENTERS: usize = 10;

pub const ASSOCIATION_ONLY_CAVEAT: &str =
    "an association between transmitted data and votes does not establish tampering";
pub const AUTO_CLASSIFY_NOTE: &str =
    "traffic classes assigned by byte-total terciles (LOW / UNCLASSIFIED / HIGH), not taken from the input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficMeasure {
    #[default]
    BytesOut,
    BytesIn,
    PacketsOut,
    BytesPerSession,
}

impl TrafficMeasure {
    pub fn name(self) -> &'static str {
        match self {
            TrafficMeasure::BytesOut => "bytes-out",
            TrafficMeasure::BytesIn => "bytes-in",
            TrafficMeasure::PacketsOut => "packets-out",
            TrafficMeasure::BytesPerSession => "bytes-per-session",
        }
    }
}

impl fmt::Display for TrafficMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrafficMeasure {
    type Err = ForensicsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bytes-out" => Ok(TrafficMeasure::BytesOut),
            "bytes-in" => Ok(TrafficMeasure::BytesIn),
            "packets-out" => Ok(TrafficMeasure::PacketsOut),
            "bytes-per-session" => Ok(TrafficMeasure::BytesPerSession),
            _ => Err(ForensicsError::param(format!("unknown traffic measure {s:?}"))),
        }
    }
}

/// Aggregated transmission records of one center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSummary {
    pub center_id: String,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub packets_in: u64,
    pub packets_out: u64,
    pub sessions: u64,
    pub connected_seconds: i64,
    /// Votes cast, joined from the machine tallies; `None` without tallies.
    pub votes: Option<u64>,
    pub traffic_class: TrafficClass,
}

impl TrafficSummary {
    pub fn measure(&self, measure: TrafficMeasure) -> f64 {
        match measure {
            TrafficMeasure::BytesOut => self.bytes_out as f64,
            TrafficMeasure::BytesIn => self.bytes_in as f64,
            TrafficMeasure::PacketsOut => self.packets_out as f64,
            TrafficMeasure::BytesPerSession => {
                (self.bytes_in + self.bytes_out) as f64 / self.sessions.max(1) as f64
            }
        }
    }
}

/// Most frequent classified label among a center's records; ties resolve HIGH, LOW, CELLULAR.
fn modal_class(counts: &BTreeMap<TrafficClass, usize>) -> TrafficClass {
    let mut best = TrafficClass::Unclassified;
    let mut best_count = 0;
    for class in [TrafficClass::High, TrafficClass::Low, TrafficClass::Cellular] {
        let c = counts.get(&class).copied().unwrap_or(0);
        if c > best_count {
            best = class;
            best_count = c;
        }
    }
    best
}

/// One summary per center with at least one transmission record, sorted by center id.
pub fn traffic_summaries(dataset: &ElectionDataset) -> Vec<TrafficSummary> {
    let totals = dataset.center_totals();
    let mut acc: BTreeMap<&str, (TrafficSummary, BTreeMap<TrafficClass, usize>)> = BTreeMap::new();
    for t in &dataset.transmissions {
        let (s, classes) = acc.entry(t.center_id.as_str()).or_insert_with(|| {
            (
                TrafficSummary {
                    center_id: t.center_id.clone(),
                    bytes_in: 0,
                    bytes_out: 0,
                    packets_in: 0,
                    packets_out: 0,
                    sessions: 0,
                    connected_seconds: 0,
                    votes: totals.get(t.center_id.as_str()).map(|c| c.nu),
                    traffic_class: TrafficClass::Unclassified,
                },
                BTreeMap::new(),
            )
        });
        s.bytes_in += t.bytes_in;
        s.bytes_out += t.bytes_out;
        s.packets_in += t.packets_in;
        s.packets_out += t.packets_out;
        s.sessions += 1;
        s.connected_seconds += (t.session_end - t.session_start).num_seconds();
        *classes.entry(t.traffic_class).or_default() += 1;
    }
    acc.into_values()
        .map(|(mut s, classes)| {
            s.traffic_class = modal_class(&classes);
            s
        })
        .collect()
}

/// Reassigns classes by total-byte terciles: bottom LOW, middle UNCLASSIFIED, top HIGH.
pub fn classify_by_terciles(summaries: &mut [TrafficSummary]) {
    let n = summaries.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ta = summaries[a].bytes_in + summaries[a].bytes_out;
        let tb = summaries[b].bytes_in + summaries[b].bytes_out;
        ta.cmp(&tb).then_with(|| summaries[a].center_id.cmp(&summaries[b].center_id))
    });
    for (rank, &i) in order.iter().enumerate() {
        summaries[i].traffic_class = match 3 * rank / n.max(1) {
            0 => TrafficClass::Low,
            1 => TrafficClass::Unclassified,
            _ => TrafficClass::High,
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: TrafficClass,
    pub n: usize,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PairOutcome {
    Tested {
        first: TrafficClass,
        second: TrafficClass,
        n_first: usize,
        n_second: usize,
        median_first: f64,
        median_second: f64,
        u_statistic: f64,
        p_value: f64,
        method: RankSumMethod,
    },
    Untestable {
        first: TrafficClass,
        second: TrafficClass,
        n_first: usize,
        n_second: usize,
        reason: String,
    },
}

impl PairOutcome {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            PairOutcome::Tested { p_value, .. } => Some(*p_value),
            PairOutcome::Untestable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficComparison {
    pub measure: TrafficMeasure,
    pub auto_classified: bool,
    pub classes: Vec<ClassSummary>,
    pub pairs: Vec<PairOutcome>,
    pub notes: Vec<String>,
    pub caveats: Vec<String>,
}

const COMPARED_CLASSES: [TrafficClass; 3] = [TrafficClass::High, TrafficClass::Low, TrafficClass::Cellular];

/// Two-sided rank-sum comparison of `values` between every pair of classes.
pub fn compare_classes(groups: &BTreeMap<TrafficClass, Vec<f64>>) -> (Vec<ClassSummary>, Vec<PairOutcome>) {
    let present: Vec<TrafficClass> = COMPARED_CLASSES
        .into_iter()
        .filter(|c| groups.get(c).is_some_and(|v| !v.is_empty()))
        .collect();
    let classes = present
        .iter()
        .map(|&c| ClassSummary {
            class: c,
            n: groups[&c].len(),
            median: median(&groups[&c]),
        })
        .collect();
    let mut pairs = Vec::new();
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            let (va, vb) = (&groups[&a], &groups[&b]);
            if va.len() < MIN_CLASS_SIZE || vb.len() < MIN_CLASS_SIZE {
                pairs.push(PairOutcome::Untestable {
                    first: a,
                    second: b,
                    n_first: va.len(),
                    n_second: vb.len(),
                    reason: format!("each class needs at least {MIN_CLASS_SIZE} centers"),
                });
                continue;
            }
            let r = rank_sum_test(va, vb);
            pairs.push(PairOutcome::Tested {
                first: a,
                second: b,
                n_first: va.len(),
                n_second: vb.len(),
                median_first: median(va),
                median_second: median(vb),
                u_statistic: r.u_statistic,
                p_value: r.p_value,
                method: r.method,
            });
        }
    }
    (classes, pairs)
}

/// Rank-sum comparisons of a traffic measure between HIGH, LOW and CELLULAR centers.
pub fn traffic_class_compare(
    dataset: &ElectionDataset,
    measure: TrafficMeasure,
    auto_classify: bool,
) -> Result<TrafficComparison> {
    dataset.ensure_valid()?;
    let mut summaries = traffic_summaries(dataset);
    if summaries.is_empty() {
        return Err(ForensicsError::insufficient("dataset has no transmission records"));
    }
    let mut notes = Vec::new();
    if auto_classify {
        classify_by_terciles(&mut summaries);
        notes.push(AUTO_CLASSIFY_NOTE.to_string());
    }
    let mut groups: BTreeMap<TrafficClass, Vec<f64>> = BTreeMap::new();
    for s in &summaries {
        if s.traffic_class != TrafficClass::Unclassified {
            groups.entry(s.traffic_class).or_default().push(s.measure(measure));
        }
    }
    if groups.is_empty() {
        return Err(ForensicsError::insufficient(
            "no center carries a traffic class; pass --auto-classify terciles to derive one",
        ));
    }
    let (classes, pairs) = compare_classes(&groups);
    Ok(TrafficComparison {
        measure,
        auto_classified: auto_classify,
        classes,
        pairs,
        notes,
        caveats: vec![ASSOCIATION_ONLY_CAVEAT.to_string()],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BytesVotesResult {
    pub measure: TrafficMeasure,
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided t-test of slope = 0.
    pub analytic_p: f64,
    /// Two-sided permutation p-value from shuffling votes.
    pub permutation_p: f64,
    pub reps: u64,
    pub seed: u64,
    pub caveats: Vec<String>,
}

/// Regression of a measure on votes cast with analytic and permutation p-values.
pub fn bytes_votes_regression(
    votes: &[f64],
    response: &[f64],
    reps: u64,
    seed: u64,
    measure: TrafficMeasure,
) -> Result<BytesVotesResult> {
    let n = votes.len();
    if n < MIN_REGRESSION_CENTERS {
        return Err(ForensicsError::insufficient(format!(
            "{n} centers have both tallies and transmissions; at least {MIN_REGRESSION_CENTERS} required"
        )));
    }
    let fit = ols(votes, response)
        .ok_or_else(|| ForensicsError::insufficient("votes cast have zero variance across centers"))?;
    let caveats = vec![ASSOCIATION_ONLY_CAVEAT.to_string()];
    if response.iter().all(|&v| v == response[0]) {
        return Ok(BytesVotesResult {
            measure,
            n,
            slope: 0.0,
            intercept: response[0],
            analytic_p: 1.0,
            permutation_p: 1.0,
            reps,
            seed,
            caveats,
        });
    }
    let observed = fit.slope.abs();
    let exceed = count_sharded(
        reps,
        seed,
        "bytes-vs-votes",
        || votes.to_vec(),
        |rng, shuffled| {
            shuffled.shuffle(rng);
            let slope = ols(shuffled, response).map_or(0.0, |f| f.slope);
            at_least(slope.abs(), observed)
        },
    );
    Ok(BytesVotesResult {
        measure,
        n,
        slope: fit.slope,
        intercept: fit.intercept,
        analytic_p: fit.slope_pvalue(),
        permutation_p: monte_carlo_pvalue(exceed, reps),
        reps,
        seed,
        caveats,
    })
}

/// OLS of the traffic measure on votes cast across centers.
pub fn bytes_vs_votes_test(
    dataset: &ElectionDataset,
    measure: TrafficMeasure,
    reps: u64,
    seed: u64,
) -> Result<BytesVotesResult> {
    dataset.ensure_valid()?;
    let (votes, response): (Vec<f64>, Vec<f64>) = traffic_summaries(dataset)
        .iter()
        .filter_map(|s| Some((s.votes? as f64, s.measure(measure))))
        .unzip();
    bytes_votes_regression(&votes, &response, reps, seed, measure)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_names_round_trip() {
        for m in [
            TrafficMeasure::BytesOut,
            TrafficMeasure::BytesIn,
            TrafficMeasure::PacketsOut,
            TrafficMeasure::BytesPerSession,
        ] {
            assert_eq!(m.name().parse::<TrafficMeasure>().unwrap(), m);
        }
    }

    #[test]
    fn separated_classes_hit_exact_minimum() {
        let mut groups = BTreeMap::new();
        groups.insert(TrafficClass::High, (11..=20).map(f64::from).collect());
        groups.insert(TrafficClass::Low, (1..=10).map(f64::from).collect());
        let (_, pairs) = compare_classes(&groups);
        assert_eq!(pairs.len(), 1);
        let p = pairs[0].p_value().unwrap();
        assert!((p - 2.0 / 184_756.0).abs() < 1e-15);
    }

    #[test]
    fn small_class_is_untestable() {
        let mut groups = BTreeMap::new();
        groups.insert(TrafficClass::High, vec![1.0, 2.0, 3.0]);
        groups.insert(TrafficClass::Low, (1..=10).map(f64::from).collect());
        let (_, pairs) = compare_classes(&groups);
        assert!(matches!(pairs[0], PairOutcome::Untestable { .. }));
    }

    #[test]
    fn exact_linear_bytes() {
        let votes: Vec<f64> = (0..40).map(|i| 100.0 + 7.0 * i as f64 + (i % 3) as f64).collect();
        let bytes: Vec<f64> = votes.iter().map(|v| 512.0 + 8.0 * v).collect();
        let r = bytes_votes_regression(&votes, &bytes, 999, 3, TrafficMeasure::BytesOut).unwrap();
        assert!((r.slope - 8.0).abs() < 1e-9);
        assert!(r.permutation_p < 0.01);
    }

    #[test]
    fn constant_bytes_give_unit_pvalue() {
        let votes: Vec<f64> = (0..12).map(f64::from).collect();
        let r = bytes_votes_regression(&votes, &[1000.0; 12], 99, 3, TrafficMeasure::BytesOut).unwrap();
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.permutation_p, 1.0);
    }

    #[test]
    fn terciles_split_evenly() {
        let mut s: Vec<TrafficSummary> = (0..9)
            .map(|i| TrafficSummary {
                center_id: format!("C{i}"),
                bytes_in: 0,
                bytes_out: 100 * i,
                packets_in: 0,
                packets_out: 0,
                sessions: 1,
                connected_seconds: 0,
                votes: None,
                traffic_class: TrafficClass::Unclassified,
            })
            .collect();
        classify_by_terciles(&mut s);
        let lows = s.iter().filter(|x| x.traffic_class == TrafficClass::Low).count();
        let highs = s.iter().filter(|x| x.traffic_class == TrafficClass::High).count();
        assert_eq!((lows, highs), (3, 3));
        assert_eq!(s[8].traffic_class, TrafficClass::High);
    }
}
