//! Exit-poll consistency with the official result.
//!
//! For each poll sample of size `m` with `k` YES responses, the p-value is the
//! exact binomial tail probability of a result at least as extreme under the
//! official YES share. Per-center values are then aggregated across centers.

use serde::{Deserialize, Serialize};

use crate::dataset::ElectionDataset;
use crate::error::{ForensicsError, Result};
use crate::permutation::ExcludedCenter;
use crate::stats::{binomial_sf_ge, binomial_tail_le, fisher_combination};

pub const SRS_CAVEAT: &str =
    "respondents treated as a simple random sample of the center's voters; stratified designs are adequate only under proportional allocation";
pub const NONRESPONSE_CAVEAT: &str = "nonresponse is not modeled: refusal rates are unknown";
pub const INDEPENDENCE_ASSUMPTION: &str = "aggregation assumes independent centers";

/// Exit polls with fewer respondents than this are flagged.
pub const SMALL_SAMPLE: u64 = 30;
/// Reporting threshold used when none is configured.
pub const DEFAULT_TAU: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TailDirection {
    /// P(X >= k): poll shows more YES than the official share allows.
    #[default]
    Ge,
    /// P(X <= k).
    Le,
    /// `2 min(GE, LE)`, capped at 1.
    #[serde(rename = "two")]
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollPValue {
    pub official_yes_share: f64,
    pub sample_size: u64,
    pub yes_responses: u64,
    pub direction: TailDirection,
    pub p_value: f64,
    pub small_sample: bool,
}

/// Exact binomial p-value of an exit-poll outcome under official share `p`.
pub fn center_poll_pvalue(p: f64, sample_size: u64, yes_responses: u64, direction: TailDirection) -> Result<PollPValue> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ForensicsError::param(format!("official share {p} outside [0, 1]")));
    }
    if sample_size == 0 {
        return Err(ForensicsError::param("exit-poll sample size must be at least 1"));
    }
    if yes_responses > sample_size {
        return Err(ForensicsError::param(format!(
            "yes_responses {yes_responses} exceed sample size {sample_size}"
        )));
    }
    let ge = || binomial_sf_ge(yes_responses, sample_size, p);
    let le = || binomial_tail_le(yes_responses, sample_size, p);
    let p_value = match direction {
        TailDirection::Ge => ge(),
        TailDirection::Le => le(),
        TailDirection::TwoSided => (2.0 * ge().min(le())).min(1.0),
    };
    Ok(PollPValue {
        official_yes_share: p,
        sample_size,
        yes_responses,
        direction,
        p_value: p_value.clamp(0.0, 1.0),
        small_sample: sample_size < SMALL_SAMPLE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AggregationMethod {
    CountBelow { tau: f64 },
    Fisher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PollAggregate {
    /// Centers with p < tau, and P(at least that many) when p-values are uniform.
    CountBelow {
        tau: f64,
        centers: usize,
        count: usize,
        fraction: f64,
        p_value: f64,
    },
    Fisher {
        centers: usize,
        statistic: f64,
        df: u64,
        p_value: f64,
    },
}

impl PollAggregate {
    pub fn p_value(&self) -> f64 {
        match self {
            PollAggregate::CountBelow { p_value, .. } | PollAggregate::Fisher { p_value, .. } => *p_value,
        }
    }
}

pub fn aggregate_poll_pvalues(p_values: &[f64], method: AggregationMethod) -> Result<PollAggregate> {
    if p_values.is_empty() {
        return Err(ForensicsError::insufficient("no exit-poll p-values to aggregate"));
    }
    match method {
        AggregationMethod::CountBelow { tau } => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(ForensicsError::param(format!("tau {tau} outside (0, 1)")));
            }
            let count = p_values.iter().filter(|&&p| p < tau).count();
            let centers = p_values.len();
            Ok(PollAggregate::CountBelow {
                tau,
                centers,
                count,
                fraction: count as f64 / centers as f64,
                p_value: binomial_sf_ge(count as u64, centers as u64, tau),
            })
        }
        AggregationMethod::Fisher => {
            let f = fisher_combination(p_values).expect("non-empty");
            Ok(PollAggregate::Fisher {
                centers: p_values.len(),
                statistic: f.statistic,
                df: f.df,
                p_value: f.p_value,
            })
        }
    }
}

/// Which official share each center's poll is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PollReference {
    /// The center's own recorded YES share of valid votes.
    #[default]
    Center,
    /// The dataset's single official YES share.
    National,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitPollOptions {
    pub direction: TailDirection,
    pub tau: f64,
    pub pollster: Option<String>,
    pub reference: PollReference,
}

impl Default for ExitPollOptions {
    fn default() -> Self {
        ExitPollOptions {
            direction: TailDirection::Ge,
            tau: DEFAULT_TAU,
            pollster: None,
            reference: PollReference::Center,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollConsistencyResult {
    pub center_id: String,
    pub pollster: String,
    #[serde(flatten)]
    pub test: PollPValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitPollReport {
    pub reference: PollReference,
    pub results: Vec<PollConsistencyResult>,
    pub skipped: Vec<ExcludedCenter>,
    pub count_below: PollAggregate,
    pub fisher: PollAggregate,
    pub assumptions: Vec<String>,
    pub caveats: Vec<String>,
}

/// Tests every exit-poll sample of the dataset (one result per center and pollster).
pub fn exit_poll_test(dataset: &ElectionDataset, options: &ExitPollOptions) -> Result<ExitPollReport> {
    dataset.ensure_valid()?;
    let totals = dataset.center_totals();
    let mut samples: Vec<_> = dataset
        .exit_polls
        .iter()
        .filter(|p| options.pollster.as_deref().is_none_or(|name| name == p.pollster))
        .collect();
    samples.sort_by(|a, b| (&a.center_id, &a.pollster).cmp(&(&b.center_id, &b.pollster)));

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for s in samples {
        let skip = |reason: &str| ExcludedCenter {
            center_id: s.center_id.clone(),
            reason: format!("{}: {reason}", s.pollster),
        };
        if s.sample_size == 0 {
            skipped.push(skip("empty poll sample"));
            continue;
        }
        let share = match options.reference {
            PollReference::National => dataset.official_yes_share,
            PollReference::Center => match totals.get(s.center_id.as_str()).and_then(|t| t.yes_share_of_valid()) {
                Some(share) => share,
                None => {
                    skipped.push(skip("center has no valid votes in the machine tallies"));
                    continue;
                }
            },
        };
        results.push(PollConsistencyResult {
            center_id: s.center_id.clone(),
            pollster: s.pollster.clone(),
            test: center_poll_pvalue(share, s.sample_size, s.yes_responses, options.direction)?,
        });
    }
    let p_values: Vec<f64> = results.iter().map(|r| r.test.p_value).collect();
    let count_below = aggregate_poll_pvalues(&p_values, AggregationMethod::CountBelow { tau: options.tau })?;
    let fisher = aggregate_poll_pvalues(&p_values, AggregationMethod::Fisher)?;
    Ok(ExitPollReport {
        reference: options.reference,
        results,
        skipped,
        count_below,
        fisher,
        assumptions: vec![INDEPENDENCE_ASSUMPTION.to_string()],
        caveats: vec![SRS_CAVEAT.to_string(), NONRESPONSE_CAVEAT.to_string()],
    })
}
