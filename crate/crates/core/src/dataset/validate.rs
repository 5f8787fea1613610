use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ElectionDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateCenter,
    DuplicateMachine,
    DuplicatePoll,
    UnresolvedCenter,
    SignaturesExceedRegistered,
    VotesExceedTotal,
    OutMismatch,
    ResponsesExceedSample,
    SessionEndsBeforeStart,
    OfficialShareOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub table: String,
    /// Key of the offending row (center id, `center/machine`, or row index).
    pub location: String,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.table, self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, table: &str, location: impl Into<String>, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            table: table.to_string(),
            location: location.into(),
            kind,
            message: message.into(),
        });
    }
}

/// Checks every type invariant. Pure: never mutates, and repeated calls agree.
pub fn validate(dataset: &ElectionDataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !(0.0..=1.0).contains(&dataset.official_yes_share) {
        report.push(
            "dataset",
            dataset.label.clone(),
            ViolationKind::OfficialShareOutOfRange,
            format!("official_yes_share {} outside [0, 1]", dataset.official_yes_share),
        );
    }

    let mut known = HashSet::new();
    for c in &dataset.centers {
        if !known.insert(c.center_id.as_str()) {
            report.push(
                "centers",
                c.center_id.clone(),
                ViolationKind::DuplicateCenter,
                format!("center_id {} appears more than once", c.center_id),
            );
        }
        if c.signatures > c.registered {
            report.push(
                "centers",
                c.center_id.clone(),
                ViolationKind::SignaturesExceedRegistered,
                format!("signatures {} exceed registered {}", c.signatures, c.registered),
            );
        }
    }

    let unresolved = |table: &str, location: String, id: &str, report: &mut ValidationReport| {
        if !known.contains(id) {
            report.push(
                table,
                location,
                ViolationKind::UnresolvedCenter,
                format!("unresolved center_id {id}"),
            );
        }
    };

    let mut machine_keys = HashSet::new();
    for m in &dataset.machines {
        let key = format!("{}/{}", m.center_id, m.machine_id);
        unresolved("machines", key.clone(), &m.center_id, &mut report);
        if !machine_keys.insert((m.center_id.as_str(), m.machine_id.as_str())) {
            report.push(
                "machines",
                key.clone(),
                ViolationKind::DuplicateMachine,
                "duplicate (center_id, machine_id)",
            );
        }
        match m.yes.checked_add(m.no).filter(|&v| v <= m.nu) {
            None => report.push(
                "machines",
                key,
                ViolationKind::VotesExceedTotal,
                format!("yes {} + no {} exceed nu {}", m.yes, m.no, m.nu),
            ),
            Some(valid) if m.out != m.nu - valid => report.push(
                "machines",
                key,
                ViolationKind::OutMismatch,
                format!("out {} differs from nu - yes - no = {}", m.out, m.nu - valid),
            ),
            Some(_) => {}
        }
    }

    let mut poll_keys = HashSet::new();
    for p in &dataset.exit_polls {
        let key = format!("{}/{}", p.center_id, p.pollster);
        unresolved("exitpoll", key.clone(), &p.center_id, &mut report);
        if !poll_keys.insert((p.center_id.as_str(), p.pollster.as_str())) {
            report.push("exitpoll", key.clone(), ViolationKind::DuplicatePoll, "duplicate (center_id, pollster)");
        }
        if p.yes_responses > p.sample_size {
            report.push(
                "exitpoll",
                key,
                ViolationKind::ResponsesExceedSample,
                format!("yes_responses {} exceed sample_size {}", p.yes_responses, p.sample_size),
            );
        }
    }

    for (i, t) in dataset.transmissions.iter().enumerate() {
        let loc = format!("row {} ({})", i + 1, t.center_id);
        unresolved("transmissions", loc.clone(), &t.center_id, &mut report);
        if t.session_end < t.session_start {
            report.push(
                "transmissions",
                loc,
                ViolationKind::SessionEndsBeforeStart,
                "session_end precedes session_start",
            );
        }
    }

    report
}
