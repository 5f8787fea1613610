//! Canonical data model for center-level election data.
//!
//! One CSV file per entity type; see [`load_dataset`] for the schemas. A
//! dataset is never mutated after loading; detectors borrow it.

mod csvio;
mod validate;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use csvio::{
    load_dataset, read_records, write_dataset, write_records, DatasetManifest, DatasetPaths,
    CENTERS_HEADER, EXITPOLL_HEADER, MACHINES_HEADER, TRANSMISSIONS_HEADER,
};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

use crate::error::{ForensicsError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotingCenter {
    pub center_id: String,
    pub region: String,
    /// Touch-screen machines (true) or manual counting (false).
    pub computerized: bool,
    pub registered: u64,
    /// Registered voters who signed the recall petition.
    pub signatures: u64,
}

impl VotingCenter {
    pub fn signature_share(&self) -> Option<f64> {
        (self.registered > 0).then(|| self.signatures as f64 / self.registered as f64)
    }
}

/// Per-machine tally. `out` (invalid/other votes) is carried explicitly so a
/// corrupt row surfaces in validation instead of being silently recomputed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineTally {
    pub center_id: String,
    pub machine_id: String,
    pub nu: u64,
    pub yes: u64,
    pub no: u64,
    pub out: u64,
}

impl MachineTally {
    /// Builds a tally and derives `out = nu - yes - no`.
    pub fn new(
        center_id: impl Into<String>,
        machine_id: impl Into<String>,
        nu: u64,
        yes: u64,
        no: u64,
    ) -> Result<Self> {
        let valid = yes
            .checked_add(no)
            .filter(|&v| v <= nu)
            .ok_or_else(|| ForensicsError::param(format!("yes ({yes}) + no ({no}) exceeds nu ({nu})")))?;
        Ok(MachineTally {
            center_id: center_id.into(),
            machine_id: machine_id.into(),
            nu,
            yes,
            no,
            out: nu - valid,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitPollSample {
    pub center_id: String,
    pub pollster: String,
    pub sample_size: u64,
    pub yes_responses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrafficClass {
    High,
    Low,
    Cellular,
    Unclassified,
}

impl TrafficClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::High => "HIGH",
            TrafficClass::Low => "LOW",
            TrafficClass::Cellular => "CELLULAR",
            TrafficClass::Unclassified => "UNCLASSIFIED",
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HIGH" => Ok(TrafficClass::High),
            "LOW" => Ok(TrafficClass::Low),
            "CELLULAR" => Ok(TrafficClass::Cellular),
            "UNCLASSIFIED" | "" => Ok(TrafficClass::Unclassified),
            other => Err(format!("unknown traffic_class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub center_id: String,
    pub session_start: DateTime<Utc>,
    pub session_end: DateTime<Utc>,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub packets_in: u64,
    pub packets_out: u64,
    pub traffic_class: TrafficClass,
}

/// Vote totals of one center aggregated over its machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CenterTotals {
    pub machines: usize,
    pub nu: u64,
    pub yes: u64,
    pub no: u64,
    pub out: u64,
}

impl CenterTotals {
    /// YES over all votes cast (including OUT).
    pub fn yes_share_of_cast(&self) -> Option<f64> {
        (self.nu > 0).then(|| self.yes as f64 / self.nu as f64)
    }

    /// YES over valid (YES + NO) votes.
    pub fn yes_share_of_valid(&self) -> Option<f64> {
        let valid = self.yes + self.no;
        (valid > 0).then(|| self.yes as f64 / valid as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionDataset {
    pub label: String,
    /// Authoritative official YES share (of valid votes) for the whole election.
    pub official_yes_share: f64,
    pub centers: Vec<VotingCenter>,
    pub machines: Vec<MachineTally>,
    pub exit_polls: Vec<ExitPollSample>,
    pub transmissions: Vec<TransmissionRecord>,
}

impl ElectionDataset {
    pub fn center_index(&self) -> HashMap<&str, &VotingCenter> {
        self.centers.iter().map(|c| (c.center_id.as_str(), c)).collect()
    }

    /// Centers in `center_id` order, so results never depend on row order.
    pub fn sorted_centers(&self) -> Vec<&VotingCenter> {
        let mut centers: Vec<&VotingCenter> = self.centers.iter().collect();
        centers.sort_by(|a, b| a.center_id.cmp(&b.center_id));
        centers
    }

    pub fn machines_by_center(&self) -> BTreeMap<&str, Vec<&MachineTally>> {
        let mut map: BTreeMap<&str, Vec<&MachineTally>> = BTreeMap::new();
        for m in &self.machines {
            map.entry(m.center_id.as_str()).or_default().push(m);
        }
        for list in map.values_mut() {
            list.sort_by(|a, b| a.machine_id.cmp(&b.machine_id));
        }
        map
    }

    pub fn center_totals(&self) -> BTreeMap<&str, CenterTotals> {
        let mut map: BTreeMap<&str, CenterTotals> = BTreeMap::new();
        for m in &self.machines {
            let t = map.entry(m.center_id.as_str()).or_default();
            t.machines += 1;
            t.nu += m.nu;
            t.yes += m.yes;
            t.no += m.no;
            t.out += m.out;
        }
        map
    }

    /// Exit-poll samples pooled per center, optionally restricted to one pollster.
    /// Values are `(sample_size, yes_responses)`.
    pub fn polls_by_center(&self, pollster: Option<&str>) -> BTreeMap<&str, (u64, u64)> {
        let mut map: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        for p in &self.exit_polls {
            if pollster.is_some_and(|name| name != p.pollster) {
                continue;
            }
            let e = map.entry(p.center_id.as_str()).or_default();
            e.0 += p.sample_size;
            e.1 += p.yes_responses;
        }
        map
    }

    /// Pooled YES share of valid votes across all machines.
    pub fn pooled_yes_share(&self) -> Option<f64> {
        let (yes, valid) = self
            .machines
            .iter()
            .fold((0u64, 0u64), |(y, v), m| (y + m.yes, v + m.yes + m.no));
        (valid > 0).then(|| yes as f64 / valid as f64)
    }

    /// Refuses the dataset with a single uniform error when validation fails.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        match report.violations.first() {
            None => Ok(()),
            Some(first) => Err(ForensicsError::InvalidDataset {
                count: report.violations.len(),
                first: first.to_string(),
            }),
        }
    }

    /// SHA-256 over the canonical CSV serialisation of every table, rows
    /// sorted, so the value depends on content and not on file row order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.label.as_bytes());
        hasher.update(b"\n");
        hasher.update(format!("{}", self.official_yes_share).as_bytes());
        for table in csvio::canonical_tables(self) {
            let mut lines = table.lines();
            let header = lines.next().unwrap_or("");
            let mut rows: Vec<&str> = lines.collect();
            rows.sort_unstable();
            hasher.update(b"\n--\n");
            hasher.update(header.as_bytes());
            for row in rows {
                hasher.update(b"\n");
                hasher.update(row.as_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn machine_tally_derives_out() {
        let m = MachineTally::new("C1", "M1", 10, 4, 5).unwrap();
        assert_eq!(m.out, 1);
        assert!(MachineTally::new("C1", "M1", 10, 6, 5).is_err());
    }

    #[test]
    fn traffic_class_parses_case_insensitively() {
        assert_eq!("high".parse::<TrafficClass>().unwrap(), TrafficClass::High);
        assert_eq!("Cellular".parse::<TrafficClass>().unwrap(), TrafficClass::Cellular);
        assert!("medium".parse::<TrafficClass>().is_err());
    }

    #[test]
    fn center_share_helpers() {
        let t = CenterTotals { machines: 1, nu: 10, yes: 4, no: 4, out: 2 };
        assert_eq!(t.yes_share_of_cast(), Some(0.4));
        assert_eq!(t.yes_share_of_valid(), Some(0.5));
        assert_eq!(CenterTotals::default().yes_share_of_valid(), None);
    }
}

impl ElectionDataset {
    /// Copy keeping only the listed centers and the rows that reference them.
    pub fn restricted_to(&self, ids: &std::collections::HashSet<&str>) -> ElectionDataset {
        ElectionDataset {
            label: self.label.clone(),
            official_yes_share: self.official_yes_share,
            centers: self.centers.iter().filter(|c| ids.contains(c.center_id.as_str())).cloned().collect(),
            machines: self.machines.iter().filter(|m| ids.contains(m.center_id.as_str())).cloned().collect(),
            exit_polls: self.exit_polls.iter().filter(|p| ids.contains(p.center_id.as_str())).cloned().collect(),
            transmissions: self
                .transmissions
                .iter()
                .filter(|t| ids.contains(t.center_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}
