//! Statistical forensics for post-election data.
//!
//! The crate is organised around one immutable [`ElectionDataset`] (centers,
//! machine tallies, exit-poll samples, transmission records) and a set of
//! independent detectors that read it:
//!
//! * [`digits`]: first/second significant-digit tests (chi-square and a
//!   BIC-approximated Bayes factor) with Monte-Carlo references for capped counts.
//! * [`permutation`]: conditional multivariate-hypergeometric permutation tests
//!   of machine-level dispersion within a center.
//! * [`polling`]: exact binomial exit-poll consistency p-values and their
//!   cross-center aggregation.
//! * [`association`]: signature-share correlations and the residual-correlation
//!   test on two independent intent measurements.
//! * [`metadata`]: transmission-metadata comparisons.
//! * [`audit`]: margin-driven audit planning and audit-sample representativeness.
//!
//! [`synth`] generates seeded synthetic elections with fraud injection and
//! [`report`] runs the detectors as a reproducible battery.

pub mod association;
pub mod audit;
pub mod dataset;
pub mod digits;
pub mod error;
pub mod metadata;
pub mod permutation;
pub mod polling;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;

pub use dataset::{
    load_dataset, validate, DatasetPaths, ElectionDataset, ExitPollSample, MachineTally,
    TrafficClass, TransmissionRecord, ValidationReport, Violation, VotingCenter,
};
pub use error::{ForensicsError, Result};

/// Official NO/YES split of the 2004 recall referendum, used as fixture defaults.
pub const OFFICIAL_YES_SHARE_2004: f64 = 0.41;
/// YES share forecast by both exit polls of the same referendum.
pub const EXIT_POLL_YES_SHARE_2004: f64 = 0.60;
