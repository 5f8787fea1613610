//! Test-battery orchestration and report rendering.
//!
//! Each selected test gets the seed `derive_seed(master_seed, test_name)`, so
//! adding or removing a test never changes another test's result. Tests run
//! concurrently; entries are merged in test-name order.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{residual_correlation_test, signature_share_correlation, GroupOutcome, Grouping};
use crate::audit::{sample_randomness_check, Covariate};
use crate::dataset::{write_records, ElectionDataset};
use crate::digits::{digit_test, DigitReference, GenerativeModel, TallySource, MIN_REFERENCE_REPS};
use crate::error::{ForensicsError, Result};
use crate::metadata::{bytes_vs_votes_test, traffic_class_compare, PairOutcome, TrafficMeasure};
use crate::permutation::{
    check_thresholds, permutation_test, threshold_counts, DispersionKind, ThresholdCount, DEFAULT_THRESHOLDS,
};
use crate::polling::{exit_poll_test, ExitPollOptions, PollReference, TailDirection, DEFAULT_TAU};
use crate::rng::derive_seed;
use crate::stats::Alternative;

/// Bumped on any breaking change to the JSON layout.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DIGIT_CAVEAT: &str =
    "digit laws are reference distributions; honest counts need not follow them";

/// One p-value attached to a center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterValue {
    pub center_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
}

/// One p-value attached to a group, class pair or covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupValue {
    pub group: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub method: String,
    pub module: String,
    pub statistic_name: String,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_bayes_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub caveats: Vec<String>,
    pub input_fingerprint: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_center: Vec<CenterValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_group: Vec<GroupValue>,
    pub details: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

impl TestResult {
    /// The p-values the summary counts: per center, else per group, else the headline.
    pub fn component_p_values(&self) -> Vec<f64> {
        if !self.per_center.is_empty() {
            self.per_center.iter().map(|c| c.p_value).collect()
        } else if !self.per_group.is_empty() {
            self.per_group.iter().map(|g| g.p_value).collect()
        } else {
            self.p_value.into_iter().collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BatteryEntry {
    Completed(TestResult),
    Skipped { test: String, reason: String },
}

impl BatteryEntry {
    pub fn test(&self) -> &str {
        match self {
            BatteryEntry::Completed(r) => &r.test,
            BatteryEntry::Skipped { test, .. } => test,
        }
    }

    pub fn result(&self) -> Option<&TestResult> {
        match self {
            BatteryEntry::Completed(r) => Some(r),
            BatteryEntry::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub test: String,
    pub p_values: usize,
    pub below: Vec<ThresholdCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub dataset_label: String,
    pub dataset_fingerprint: String,
    pub master_seed: u64,
    pub thresholds: Vec<f64>,
    pub entries: Vec<BatteryEntry>,
    pub summary: Vec<SummaryRow>,
}

impl BatteryReport {
    pub fn entry(&self, test: &str) -> Option<&BatteryEntry> {
        self.entries.iter().find(|e| e.test() == test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DigitReferenceKind {
    #[default]
    Benford,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundedModel {
    #[default]
    Uniform,
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DigitsSection {
    pub position: u8,
    pub source: TallySource,
    pub reference: DigitReferenceKind,
    pub cap: Option<u64>,
    pub model: BoundedModel,
    pub nu: Option<u64>,
    pub p: Option<f64>,
    pub reps: u64,
}

impl Default for DigitsSection {
    fn default() -> Self {
        DigitsSection {
            position: 2,
            source: TallySource::MachineYes,
            reference: DigitReferenceKind::Benford,
            cap: None,
            model: BoundedModel::Uniform,
            nu: None,
            p: None,
            reps: 100_000,
        }
    }
}

impl DigitsSection {
    pub fn reference(&self) -> Result<DigitReference> {
        match self.reference {
            DigitReferenceKind::Benford => Ok(DigitReference::Benford),
            DigitReferenceKind::Bounded => {
                let cap = self
                    .cap
                    .ok_or_else(|| ForensicsError::Config("bounded digit reference needs cap".into()))?;
                let model = match self.model {
                    BoundedModel::Uniform => GenerativeModel::UniformZeroCap,
                    BoundedModel::Binomial => GenerativeModel::Binomial {
                        nu: self
                            .nu
                            .ok_or_else(|| ForensicsError::Config("binomial digit model needs nu".into()))?,
                        p: self
                            .p
                            .ok_or_else(|| ForensicsError::Config("binomial digit model needs p".into()))?,
                    },
                };
                Ok(DigitReference::Bounded {
                    cap,
                    model,
                    reps: self.reps.max(MIN_REFERENCE_REPS),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationSection {
    pub statistic: DispersionKind,
    pub reps: u64,
}

impl Default for PermutationSection {
    fn default() -> Self {
        PermutationSection {
            statistic: DispersionKind::YesShareVariance,
            reps: 999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitPollSection {
    pub direction: TailDirection,
    pub tau: f64,
    pub pollster: Option<String>,
    pub reference: PollReference,
}

impl Default for ExitPollSection {
    fn default() -> Self {
        ExitPollSection {
            direction: TailDirection::Ge,
            tau: DEFAULT_TAU,
            pollster: None,
            reference: PollReference::Center,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationSection {
    pub grouping: Grouping,
    pub reps: u64,
}

impl Default for AssociationSection {
    fn default() -> Self {
        AssociationSection {
            grouping: Grouping::SignatureSplit(None),
            reps: 999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualsSection {
    pub reps: u64,
    pub alternative: Alternative,
}

impl Default for ResidualsSection {
    fn default() -> Self {
        ResidualsSection {
            reps: 999,
            alternative: Alternative::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetadataSection {
    pub measure: TrafficMeasure,
    pub reps: u64,
    pub auto_classify: bool,
}

impl Default for MetadataSection {
    fn default() -> Self {
        MetadataSection {
            measure: TrafficMeasure::BytesOut,
            reps: 999,
            auto_classify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditRandomnessSection {
    pub audited: Vec<String>,
    pub covariates: Vec<Covariate>,
    pub reps: u64,
}

impl Default for AuditRandomnessSection {
    fn default() -> Self {
        AuditRandomnessSection {
            audited: Vec::new(),
            covariates: Covariate::ALL.to_vec(),
            reps: 999,
        }
    }
}

/// Battery selection. Each present section enables its test(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub thresholds: Vec<f64>,
    /// Adds per-test wall-clock times; reports are then no longer byte-reproducible.
    pub record_timing: bool,
    pub digits: Option<DigitsSection>,
    pub permutation: Option<PermutationSection>,
    pub exitpoll: Option<ExitPollSection>,
    pub association: Option<AssociationSection>,
    pub residuals: Option<ResidualsSection>,
    pub metadata: Option<MetadataSection>,
    pub audit_randomness: Option<AuditRandomnessSection>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            record_timing: false,
            digits: None,
            permutation: None,
            exitpoll: None,
            association: None,
            residuals: None,
            metadata: None,
            audit_randomness: None,
        }
    }
}

impl BatteryConfig {
    /// Every test except audit randomness (which needs an audited set).
    pub fn full() -> Self {
        BatteryConfig {
            digits: Some(DigitsSection::default()),
            permutation: Some(PermutationSection::default()),
            exitpoll: Some(ExitPollSection::default()),
            association: Some(AssociationSection::default()),
            residuals: Some(ResidualsSection::default()),
            metadata: Some(MetadataSection::default()),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: BatteryConfig =
            toml::from_str(text).map_err(|e| ForensicsError::Config(format!("battery config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ForensicsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected_tests().is_empty() {
            return Err(ForensicsError::Config("battery config selects no tests".into()));
        }
        check_thresholds(&self.thresholds).map_err(|e| ForensicsError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn selected_tests(&self) -> Vec<&'static str> {
        let mut tests = Vec::new();
        if self.digits.is_some() {
            tests.push("digits");
        }
        if self.permutation.is_some() {
            tests.push("permutation");
        }
        if self.exitpoll.is_some() {
            tests.push("exitpoll");
        }
        if self.association.is_some() {
            tests.push("association");
        }
        if self.residuals.is_some() {
            tests.push("residuals");
        }
        if self.metadata.is_some() {
            tests.push("metadata-classes");
            tests.push("metadata-bytes-votes");
        }
        if self.audit_randomness.is_some() {
            tests.push("audit-randomness");
        }
        tests
    }
}

fn to_details<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("report values serialize")
}

struct Ctx<'a> {
    dataset: &'a ElectionDataset,
    fingerprint: &'a str,
}

impl Ctx<'_> {
    fn result(&self, test: &str, module: &str, method: String) -> TestResult {
        TestResult {
            test: test.to_string(),
            method,
            module: module.to_string(),
            statistic_name: String::new(),
            statistic: 0.0,
            p_value: None,
            log_bayes_factor: None,
            reps: None,
            seed: None,
            caveats: Vec::new(),
            input_fingerprint: self.fingerprint.to_string(),
            per_center: Vec::new(),
            per_group: Vec::new(),
            details: serde_json::Value::Null,
            elapsed_ms: None,
        }
    }
}

fn run_test(test: &str, config: &BatteryConfig, ctx: &Ctx, seed: u64) -> Result<TestResult> {
    let dataset = ctx.dataset;
    match test {
        "digits" => {
            let section = config.digits.as_ref().expect("selected");
            let reference = section.reference()?;
            let report = digit_test(dataset, section.position, section.source, reference, seed)?;
            let mut r = ctx.result(
                test,
                "digits",
                format!(
                    "digit {} chi-square and Bayes factor vs {}",
                    section.position,
                    match reference {
                        DigitReference::Benford => "Benford",
                        DigitReference::Bounded { .. } => "bounded Monte-Carlo reference",
                    }
                ),
            );
            r.statistic_name = "chi_square".into();
            r.statistic = report.result.chi_square;
            r.p_value = Some(report.result.p_value);
            r.log_bayes_factor = Some(report.result.log_bayes_factor);
            if let DigitReference::Bounded { reps, .. } = reference {
                r.reps = Some(reps);
                r.seed = Some(seed);
            }
            r.caveats.push(DIGIT_CAVEAT.to_string());
            r.details = to_details(&report);
            Ok(r)
        }
        "permutation" => {
            let section = config.permutation.as_ref().expect("selected");
            let report = permutation_test(dataset, section.statistic, section.reps, seed, &config.thresholds)?;
            let mut r = ctx.result(
                test,
                "permutation",
                format!("within-center hypergeometric permutation ({})", section.statistic),
            );
            r.statistic_name = "fisher_chi_square".into();
            r.statistic = report.summary.fisher.statistic;
            r.p_value = Some(report.summary.fisher.p_value);
            r.reps = Some(section.reps);
            r.seed = Some(seed);
            r.caveats = report.caveats.clone();
            r.per_center = report
                .results
                .iter()
                .map(|c| CenterValue {
                    center_id: c.center_id.clone(),
                    group: None,
                    p_value: c.p_value,
                    share: None,
                })
                .collect();
            r.details = serde_json::json!({
                "statistic": report.statistic,
                "summary": report.summary,
                "excluded": report.excluded,
            });
            Ok(r)
        }
        "exitpoll" => {
            let section = config.exitpoll.as_ref().expect("selected");
            let options = ExitPollOptions {
                direction: section.direction,
                tau: section.tau,
                pollster: section.pollster.clone(),
                reference: section.reference,
            };
            let report = exit_poll_test(dataset, &options)?;
            let mut r = ctx.result(test, "polling", "exact binomial exit-poll consistency".into());
            let PollAggregateSummary { count, p } = PollAggregateSummary::from(&report.count_below);
            r.statistic_name = "centers_below_tau".into();
            r.statistic = count as f64;
            r.p_value = Some(p);
            r.caveats = report.caveats.clone();
            r.per_center = report
                .results
                .iter()
                .map(|c| CenterValue {
                    center_id: c.center_id.clone(),
                    group: Some(c.pollster.clone()),
                    p_value: c.test.p_value,
                    share: Some(c.test.yes_responses as f64 / c.test.sample_size as f64),
                })
                .collect();
            r.details = serde_json::json!({
                "reference": report.reference,
                "direction": section.direction,
                "count_below": report.count_below,
                "fisher": report.fisher,
                "skipped": report.skipped,
                "assumptions": report.assumptions,
            });
            Ok(r)
        }
        "association" => {
            let section = config.association.as_ref().expect("selected");
            let groups = signature_share_correlation(dataset, section.grouping, section.reps, seed)?;
            let mut r = ctx.result(
                test,
                "association",
                format!("signature-share correlation by {}", section.grouping),
            );
            r.statistic_name = "groups_tested".into();
            r.per_group = groups
                .iter()
                .filter_map(GroupOutcome::tested)
                .map(|g| GroupValue {
                    group: g.group.clone(),
                    statistic: g.r,
                    p_value: g.permutation_p,
                })
                .collect();
            r.statistic = r.per_group.len() as f64;
            r.reps = Some(section.reps);
            r.seed = Some(seed);
            r.caveats.push(crate::association::ASSOCIATION_CAVEAT.to_string());
            r.details = serde_json::json!({ "grouping": section.grouping, "groups": groups });
            Ok(r)
        }
        "residuals" => {
            let section = config.residuals.as_ref().expect("selected");
            let res = residual_correlation_test(dataset, section.reps, seed, section.alternative)?;
            let mut r = ctx.result(test, "association", "residual correlation of intent measurements".into());
            r.statistic_name = "pearson_r".into();
            r.statistic = res.r;
            r.p_value = Some(res.permutation_p);
            r.reps = Some(section.reps);
            r.seed = Some(seed);
            r.caveats = res.caveats.clone();
            r.details = to_details(&res);
            Ok(r)
        }
        "metadata-classes" => {
            let section = config.metadata.as_ref().expect("selected");
            let cmp = traffic_class_compare(dataset, section.measure, section.auto_classify)?;
            let mut r = ctx.result(
                test,
                "metadata",
                format!("rank-sum comparison of {} between traffic classes", section.measure),
            );
            r.statistic_name = "pairs_tested".into();
            r.per_group = cmp
                .pairs
                .iter()
                .filter_map(|p| match p {
                    PairOutcome::Tested {
                        first,
                        second,
                        u_statistic,
                        p_value,
                        ..
                    } => Some(GroupValue {
                        group: format!("{first}-{second}"),
                        statistic: *u_statistic,
                        p_value: *p_value,
                    }),
                    PairOutcome::Untestable { .. } => None,
                })
                .collect();
            r.statistic = r.per_group.len() as f64;
            r.caveats = cmp.caveats.clone();
            r.details = to_details(&cmp);
            Ok(r)
        }
        "metadata-bytes-votes" => {
            let section = config.metadata.as_ref().expect("selected");
            let res = bytes_vs_votes_test(dataset, section.measure, section.reps, seed)?;
            let mut r = ctx.result(test, "metadata", format!("OLS of {} on votes cast", section.measure));
            r.statistic_name = "slope".into();
            r.statistic = res.slope;
            r.p_value = Some(res.permutation_p);
            r.reps = Some(section.reps);
            r.seed = Some(seed);
            r.caveats = res.caveats.clone();
            r.details = to_details(&res);
            Ok(r)
        }
        "audit-randomness" => {
            let section = config.audit_randomness.as_ref().expect("selected");
            let audited: BTreeSet<String> = section.audited.iter().cloned().collect();
            let report = sample_randomness_check(dataset, &audited, &section.covariates, section.reps, seed)?;
            let mut r = ctx.result(test, "audit", "audited-sample representativeness".into());
            r.statistic_name = "covariates_tested".into();
            r.per_group = report
                .results
                .iter()
                .map(|c| GroupValue {
                    group: c.covariate.to_string(),
                    statistic: c.statistic,
                    p_value: c.p_value,
                })
                .collect();
            r.statistic = r.per_group.len() as f64;
            r.reps = Some(section.reps);
            r.seed = Some(seed);
            r.details = to_details(&report);
            Ok(r)
        }
        other => Err(ForensicsError::Config(format!("unknown battery test {other:?}"))),
    }
}

struct PollAggregateSummary {
    count: usize,
    p: f64,
}

impl From<&crate::polling::PollAggregate> for PollAggregateSummary {
    fn from(a: &crate::polling::PollAggregate) -> Self {
        match a {
            crate::polling::PollAggregate::CountBelow { count, p_value, .. } => PollAggregateSummary {
                count: *count,
                p: *p_value,
            },
            crate::polling::PollAggregate::Fisher { p_value, .. } => PollAggregateSummary { count: 0, p: *p_value },
        }
    }
}

/// Runs every selected test. Detector failures become skipped entries.
pub fn run_battery(dataset: &ElectionDataset, config: &BatteryConfig, master_seed: u64) -> Result<BatteryReport> {
    config.validate()?;
    dataset.ensure_valid()?;
    let fingerprint = dataset.fingerprint();
    let ctx = Ctx {
        dataset,
        fingerprint: &fingerprint,
    };
    let mut entries: Vec<BatteryEntry> = config
        .selected_tests()
        .into_par_iter()
        .map(|test| {
            let started = Instant::now();
            match run_test(test, config, &ctx, derive_seed(master_seed, test)) {
                Ok(mut r) => {
                    if config.record_timing {
                        r.elapsed_ms = Some(started.elapsed().as_millis() as u64);
                    }
                    BatteryEntry::Completed(r)
                }
                Err(e) => BatteryEntry::Skipped {
                    test: test.to_string(),
                    reason: e.to_string(),
                },
            }
        })
        .collect();
    entries.sort_by(|a, b| a.test().cmp(b.test()));
    let summary = entries
        .iter()
        .filter_map(BatteryEntry::result)
        .map(|r| {
            let ps = r.component_p_values();
            SummaryRow {
                test: r.test.clone(),
                p_values: ps.len(),
                below: threshold_counts(&ps, &config.thresholds),
            }
        })
        .collect();
    Ok(BatteryReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        dataset_label: dataset.label.clone(),
        dataset_fingerprint: fingerprint,
        master_seed,
        thresholds: config.thresholds.clone(),
        entries,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Text,
    PlotCsv,
}

impl FromStr for ReportFormat {
    type Err = ForensicsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            "plotcsv" => Ok(ReportFormat::PlotCsv),
            _ => Err(ForensicsError::param(format!("unknown report format {s:?} (json, text, plotcsv)"))),
        }
    }
}

/// One row of the plot-data CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub test: String,
    pub center_id: String,
    pub group: Option<String>,
    pub p_value: f64,
    pub share: Option<f64>,
}

pub fn plot_rows(report: &BatteryReport) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for r in report.entries.iter().filter_map(BatteryEntry::result) {
        for c in &r.per_center {
            rows.push(PlotRow {
                test: r.test.clone(),
                center_id: c.center_id.clone(),
                group: c.group.clone(),
                p_value: c.p_value,
                share: c.share,
            });
        }
    }
    rows
}

fn format_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => format!("{p:.3e}"),
        Some(p) => format!("{p:.4}"),
        None => "-".to_string(),
    }
}

fn text_summary(report: &BatteryReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "forensics battery report (schema {}, tool {})", report.schema_version, report.tool_version);
    let _ = writeln!(out, "dataset: {} [{}]", report.dataset_label, report.dataset_fingerprint);
    let _ = writeln!(out, "master seed: {}", report.master_seed);
    if report.entries.is_empty() {
        out.push_str("no tests run\n");
        return out;
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<22} {:<22} {:>14} {:>11} {:>8}  below thresholds",
        "test", "statistic", "value", "p-value", "p-count"
    );
    for entry in &report.entries {
        match entry {
            BatteryEntry::Completed(r) => {
                let row = report.summary.iter().find(|s| s.test == r.test);
                let below = row
                    .map(|s| {
                        s.below
                            .iter()
                            .map(|b| format!("<{}: {}", b.threshold, b.count))
                            .collect::<Vec<_>>()
                            .join(", ")
                    })
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{:<22} {:<22} {:>14.6} {:>11} {:>8}  {}",
                    r.test,
                    r.statistic_name,
                    r.statistic,
                    format_p(r.p_value),
                    row.map_or(0, |s| s.p_values),
                    below
                );
            }
            BatteryEntry::Skipped { test, reason } => {
                let _ = writeln!(out, "{test:<22} skipped: {reason}");
            }
        }
    }
    out
}

pub fn render_report(report: &BatteryReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| ForensicsError::param(format!("report serialization: {e}")))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Text => Ok(text_summary(report)),
        ReportFormat::PlotCsv => write_records(&plot_rows(report)),
    }
}
