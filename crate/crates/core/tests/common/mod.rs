#![allow(dead_code)]

use chrono::{Duration, TimeZone, Utc};
use forensics_core::{ElectionDataset, ExitPollSample, MachineTally, TrafficClass, TransmissionRecord, VotingCenter};

pub const REGISTERED: u64 = 2000;
pub const MACHINE_VOTES: u64 = 1000;

pub fn center_id(i: usize) -> String {
    format!("C{i:03}")
}

/// One single-machine center per entry: signature share and YES share of votes cast.
pub fn shares_dataset(label: &str, signature: &[f64], yes: &[f64]) -> ElectionDataset {
    assert_eq!(signature.len(), yes.len());
    let mut centers = Vec::new();
    let mut machines = Vec::new();
    for (i, (&s, &y)) in signature.iter().zip(yes).enumerate() {
        centers.push(VotingCenter {
            center_id: center_id(i),
            region: format!("R{}", i % 3),
            computerized: i % 2 == 0,
            registered: REGISTERED,
            signatures: (s.clamp(0.0, 1.0) * REGISTERED as f64).round() as u64,
        });
        let yes_votes = (y.clamp(0.0, 1.0) * MACHINE_VOTES as f64).round() as u64;
        machines.push(MachineTally::new(center_id(i), "M1", MACHINE_VOTES, yes_votes, MACHINE_VOTES - yes_votes).unwrap());
    }
    let total_yes: u64 = machines.iter().map(|m| m.yes).sum();
    ElectionDataset {
        label: label.to_string(),
        official_yes_share: total_yes as f64 / (MACHINE_VOTES * machines.len() as u64) as f64,
        centers,
        machines,
        exit_polls: Vec::new(),
        transmissions: Vec::new(),
    }
}

pub fn poll(center: &str, sample_size: u64, yes_responses: u64) -> ExitPollSample {
    ExitPollSample {
        center_id: center.to_string(),
        pollster: "P1".to_string(),
        sample_size,
        yes_responses,
    }
}

/// Centers with one session each; `votes[i]` votes on one machine, `bytes_out[i]` sent.
pub fn traffic_dataset(classes: &[TrafficClass], votes: &[u64], bytes_out: &[u64]) -> ElectionDataset {
    let start = Utc.with_ymd_and_hms(2004, 8, 15, 18, 0, 0).unwrap();
    let mut centers = Vec::new();
    let mut machines = Vec::new();
    let mut transmissions = Vec::new();
    for i in 0..classes.len() {
        let id = center_id(i);
        centers.push(VotingCenter {
            center_id: id.clone(),
            region: "R0".into(),
            computerized: true,
            registered: votes[i] * 2,
            signatures: 0,
        });
        let yes = votes[i] / 2;
        machines.push(MachineTally::new(id.clone(), "M1", votes[i], yes, votes[i] - yes).unwrap());
        transmissions.push(TransmissionRecord {
            center_id: id,
            session_start: start,
            session_end: start + Duration::seconds(60),
            bytes_in: 1000,
            bytes_out: bytes_out[i],
            packets_in: 10,
            packets_out: 10,
            traffic_class: classes[i],
        });
    }
    ElectionDataset {
        label: "traffic".into(),
        official_yes_share: 0.5,
        centers,
        machines,
        exit_polls: Vec::new(),
        transmissions,
    }
}
