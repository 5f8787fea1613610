//! Seeded synthetic elections and fraud injection.
//!
//! The generator draws a latent YES propensity per center, then machine
//! tallies, a monotone noisy signature share, a simple random exit-poll sample
//! of the valid ballots and transmission sessions. Fraud schemes alter
//! recorded tallies (or transmissions) only; signatures and polls keep
//! measuring intent.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, Hypergeometric, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    ElectionDataset, ExitPollSample, MachineTally, TrafficClass, TransmissionRecord, VotingCenter,
};
use crate::error::{ForensicsError, Result};
use crate::rng::{derive_seed_indexed, rng_from_seed, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub label: String,
    pub centers: usize,
    pub machines_min: u32,
    pub machines_max: u32,
    /// Votes per machine, uniform on `[votes_min, votes_max]`.
    pub votes_min: u64,
    pub votes_max: u64,
    /// Optional ceiling applied after drawing votes per machine.
    pub votes_cap: Option<u64>,
    /// Center YES propensity ~ Beta with this mean and sd (constant when sd = 0).
    pub propensity_mean: f64,
    pub propensity_sd: f64,
    /// Probability a ballot is null or blank.
    pub out_rate: f64,
    /// Signature share = clamp(intercept + slope·propensity + N(0, noise_sd)).
    pub signature_intercept: f64,
    pub signature_slope: f64,
    pub signature_noise_sd: f64,
    /// Votes cast over registered voters.
    pub turnout: f64,
    /// Fraction of centers with an exit poll.
    pub exit_poll_coverage: f64,
    /// Fraction of a polled center's valid ballots sampled.
    pub exit_poll_fraction: f64,
    pub pollster: String,
    pub transmissions: bool,
    pub sessions_max: u32,
    /// Median bytes per session before vote-dependent traffic.
    pub bytes_base: f64,
    /// Log-scale sd of the per-session byte multiplier.
    pub bytes_noise_sigma: f64,
    /// Bytes added per vote cast at the center.
    pub bytes_per_vote: f64,
    pub computerized_fraction: f64,
    pub high_traffic_fraction: f64,
    pub cellular_fraction: f64,
    pub regions: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            label: "synthetic".to_string(),
            centers: 200,
            machines_min: 1,
            machines_max: 6,
            votes_min: 100,
            votes_max: 600,
            votes_cap: None,
            propensity_mean: 0.41,
            propensity_sd: 0.08,
            out_rate: 0.01,
            signature_intercept: -0.1,
            signature_slope: 0.8,
            signature_noise_sd: 0.03,
            turnout: 0.7,
            exit_poll_coverage: 1.0,
            exit_poll_fraction: 0.1,
            pollster: "P1".to_string(),
            transmissions: true,
            sessions_max: 3,
            bytes_base: 4096.0,
            bytes_noise_sigma: 0.3,
            bytes_per_vote: 0.0,
            computerized_fraction: 0.6,
            high_traffic_fraction: 0.4,
            cellular_fraction: 0.2,
            regions: 5,
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(ForensicsError::Config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn finite_non_negative(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(ForensicsError::Config(format!("{name} must be finite and non-negative, got {v}")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SynthConfig =
            toml::from_str(text).map_err(|e| ForensicsError::Config(format!("synth config: {e}")))?;
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
        if self.centers == 0 {
            return Err(ForensicsError::Config("centers must be at least 1".into()));
        }
        if self.machines_min == 0 || self.machines_min > self.machines_max {
            return Err(ForensicsError::Config("need 1 <= machines_min <= machines_max".into()));
        }
        if self.votes_min > self.votes_max {
            return Err(ForensicsError::Config("need votes_min <= votes_max".into()));
        }
        for (name, v) in [
            ("propensity_mean", self.propensity_mean),
            ("out_rate", self.out_rate),
            ("turnout", self.turnout),
            ("exit_poll_coverage", self.exit_poll_coverage),
            ("exit_poll_fraction", self.exit_poll_fraction),
            ("computerized_fraction", self.computerized_fraction),
            ("high_traffic_fraction", self.high_traffic_fraction),
            ("cellular_fraction", self.cellular_fraction),
        ] {
            unit_interval(name, v)?;
        }
        if self.turnout == 0.0 {
            return Err(ForensicsError::Config("turnout must be positive".into()));
        }
        for (name, v) in [
            ("propensity_sd", self.propensity_sd),
            ("signature_noise_sd", self.signature_noise_sd),
            ("bytes_base", self.bytes_base),
            ("bytes_noise_sigma", self.bytes_noise_sigma),
            ("bytes_per_vote", self.bytes_per_vote),
        ] {
            finite_non_negative(name, v)?;
        }
        if !self.signature_intercept.is_finite() || !self.signature_slope.is_finite() {
            return Err(ForensicsError::Config("signature model coefficients must be finite".into()));
        }
        let m = self.propensity_mean;
        if self.propensity_sd > 0.0 && self.propensity_sd * self.propensity_sd >= m * (1.0 - m) {
            return Err(ForensicsError::Config(format!(
                "propensity_sd {} too large for a Beta with mean {m}",
                self.propensity_sd
            )));
        }
        if self.transmissions && self.sessions_max == 0 {
            return Err(ForensicsError::Config("sessions_max must be at least 1".into()));
        }
        if self.regions == 0 {
            return Err(ForensicsError::Config("regions must be at least 1".into()));
        }
        Ok(())
    }

    fn propensity(&self) -> Option<Beta<f64>> {
        if self.propensity_sd == 0.0 || self.propensity_mean == 0.0 || self.propensity_mean == 1.0 {
            return None;
        }
        let m = self.propensity_mean;
        let kappa = m * (1.0 - m) / (self.propensity_sd * self.propensity_sd) - 1.0;
        Beta::new(m * kappa, (1.0 - m) * kappa).ok()
    }
}

pub fn center_id(index: usize) -> String {
    format!("C{index:05}")
}

/// Election-day transmission window start.
fn window_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2004, 8, 15, 18, 0, 0).single().expect("valid timestamp")
}

struct CenterDraw {
    center: VotingCenter,
    machines: Vec<MachineTally>,
    poll: Option<ExitPollSample>,
    transmissions: Vec<TransmissionRecord>,
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

fn draw_center(config: &SynthConfig, beta: Option<&Beta<f64>>, index: usize, rng: &mut ChaCha8Rng) -> CenterDraw {
    let id = center_id(index);
    let computerized = rng.random::<f64>() < config.computerized_fraction;
    let region = format!("R{}", rng.random_range(1..=config.regions));
    let propensity = beta.map_or(config.propensity_mean, |b| b.sample(rng));
    let n_machines = rng.random_range(config.machines_min..=config.machines_max);

    let mut machines = Vec::with_capacity(n_machines as usize);
    let (mut valid_total, mut yes_total, mut cast_total) = (0u64, 0u64, 0u64);
    for j in 0..n_machines {
        let mut nu = rng.random_range(config.votes_min..=config.votes_max);
        if let Some(cap) = config.votes_cap {
            nu = nu.min(cap);
        }
        let out = binomial(rng, nu, config.out_rate);
        let valid = nu - out;
        let yes = binomial(rng, valid, propensity);
        let no = valid - yes;
        valid_total += valid;
        yes_total += yes;
        cast_total += nu;
        machines.push(MachineTally {
            center_id: id.clone(),
            machine_id: format!("M{:02}", j + 1),
            nu,
            yes,
            no,
            out,
        });
    }

    let registered = ((cast_total as f64 / config.turnout).ceil() as u64).max(cast_total).max(1);
    let noise = if config.signature_noise_sd > 0.0 {
        Normal::new(0.0, config.signature_noise_sd).expect("valid sd").sample(rng)
    } else {
        0.0
    };
    let share = (config.signature_intercept + config.signature_slope * propensity + noise).clamp(0.0, 1.0);
    let signatures = ((share * registered as f64).round() as u64).min(registered);

    let polled = rng.random::<f64>() < config.exit_poll_coverage;
    let m = (config.exit_poll_fraction * valid_total as f64).round() as u64;
    let poll = (polled && m > 0).then(|| {
        let k = Hypergeometric::new(valid_total, yes_total, m).expect("valid hypergeometric").sample(rng);
        ExitPollSample {
            center_id: id.clone(),
            pollster: config.pollster.clone(),
            sample_size: m,
            yes_responses: k,
        }
    });

    let mut transmissions = Vec::new();
    if config.transmissions {
        let u: f64 = rng.random();
        let class = if u < config.cellular_fraction {
            TrafficClass::Cellular
        } else if u < config.cellular_fraction + (1.0 - config.cellular_fraction) * config.high_traffic_fraction {
            TrafficClass::High
        } else {
            TrafficClass::Low
        };
        let sessions = rng.random_range(1..=config.sessions_max);
        let multiplier = LogNormal::new(0.0, config.bytes_noise_sigma).expect("valid sigma");
        let per_session_votes = config.bytes_per_vote * cast_total as f64 / sessions as f64;
        let mut start = window_start() + Duration::seconds(rng.random_range(0..3600));
        for _ in 0..sessions {
            let bytes_out = (config.bytes_base * multiplier.sample(rng) + per_session_votes).round() as u64;
            let bytes_in = (0.25 * config.bytes_base * multiplier.sample(rng)).round() as u64;
            let end = start + Duration::seconds(rng.random_range(30..=900));
            transmissions.push(TransmissionRecord {
                center_id: id.clone(),
                session_start: start,
                session_end: end,
                bytes_in,
                bytes_out,
                packets_in: bytes_in.div_ceil(1460),
                packets_out: bytes_out.div_ceil(1460),
                traffic_class: class,
            });
            start = end + Duration::seconds(rng.random_range(60..=1800));
        }
    }

    CenterDraw {
        center: VotingCenter {
            center_id: id,
            region,
            computerized,
            registered,
            signatures,
        },
        machines,
        poll,
        transmissions,
    }
}

fn pooled_share(machines: &[MachineTally]) -> f64 {
    let (y, n) = machines.iter().fold((0u64, 0u64), |(y, n), m| (y + m.yes, n + m.no));
    if y + n == 0 {
        0.0
    } else {
        y as f64 / (y + n) as f64
    }
}

/// A clean synthetic election. Each center uses substream `(seed, center#i)`.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<ElectionDataset> {
    config.validate()?;
    let beta = config.propensity();
    let draws: Vec<CenterDraw> = (0..config.centers)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed_indexed(seed, "center", i as u64));
            draw_center(config, beta.as_ref(), i, &mut rng)
        })
        .collect();
    let mut dataset = ElectionDataset {
        label: config.label.clone(),
        official_yes_share: 0.0,
        centers: Vec::with_capacity(draws.len()),
        machines: Vec::new(),
        exit_polls: Vec::new(),
        transmissions: Vec::new(),
    };
    for d in draws {
        dataset.centers.push(d.center);
        dataset.machines.extend(d.machines);
        dataset.exit_polls.extend(d.poll);
        dataset.transmissions.extend(d.transmissions);
    }
    dataset.official_yes_share = pooled_share(&dataset.machines);
    Ok(dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FraudKind {
    #[default]
    None,
    /// Relabel `floor(δ·yes)` YES ballots as NO on every machine of an affected center.
    ProportionalShave,
    /// Relabel YES ballots above `cap` as NO on each machine.
    CapYes,
    /// Shave `δ` on a random fraction of machines in computerized centers.
    MachineReprogram,
    /// Add `β·votes` bytes to an affected center's outgoing transmissions.
    MetadataLeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FraudScope {
    #[default]
    All,
    Computerized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FraudScheme {
    pub kind: FraudKind,
    pub delta: f64,
    pub cap: u64,
    pub beta: f64,
    pub scope: FraudScope,
    /// Fraction of eligible centers (machines, for reprogramming) affected.
    pub affected_fraction: f64,
}

impl Default for FraudScheme {
    fn default() -> Self {
        FraudScheme {
            kind: FraudKind::None,
            delta: 0.0,
            cap: 0,
            beta: 0.0,
            scope: FraudScope::All,
            affected_fraction: 1.0,
        }
    }
}

impl FraudScheme {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn proportional_shave(delta: f64, scope: FraudScope, affected_fraction: f64) -> Self {
        FraudScheme {
            kind: FraudKind::ProportionalShave,
            delta,
            scope,
            affected_fraction,
            ..Self::default()
        }
    }

    pub fn cap_yes(cap: u64) -> Self {
        FraudScheme {
            kind: FraudKind::CapYes,
            cap,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scheme: FraudScheme =
            toml::from_str(text).map_err(|e| ForensicsError::Config(format!("fraud scheme: {e}")))?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ForensicsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("delta", self.delta)?;
        unit_interval("affected_fraction", self.affected_fraction)?;
        finite_non_negative("beta", self.beta)?;
        Ok(())
    }

    fn scope(&self) -> FraudScope {
        match self.kind {
            FraudKind::MachineReprogram => FraudScope::Computerized,
            _ => self.scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    pub center_id: String,
    /// Machine id for tally changes, session start (RFC 3339) for transmissions.
    pub unit: String,
    pub field: String,
    pub before: u64,
    pub after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FraudManifest {
    pub scheme: FraudScheme,
    pub seed: u64,
    pub affected_centers: Vec<String>,
    pub affected_machines: Vec<String>,
    pub modifications: Vec<Modification>,
}

fn choose_fraction<T: Clone>(items: &[T], fraction: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let count = (fraction * items.len() as f64).round() as usize;
    let mut shuffled = items.to_vec();
    let (chosen, _) = shuffled.partial_shuffle(rng, count);
    chosen.to_vec()
}

fn relabel_yes(m: &mut MachineTally, moved: u64, mods: &mut Vec<Modification>) {
    if moved == 0 {
        return;
    }
    mods.push(Modification {
        center_id: m.center_id.clone(),
        unit: m.machine_id.clone(),
        field: "yes".into(),
        before: m.yes,
        after: m.yes - moved,
    });
    mods.push(Modification {
        center_id: m.center_id.clone(),
        unit: m.machine_id.clone(),
        field: "no".into(),
        before: m.no,
        after: m.no + moved,
    });
    m.yes -= moved;
    m.no += moved;
}

/// Applies `scheme` and returns the tampered dataset with its ground-truth manifest.
///
/// Signatures and exit polls are never modified. For tally schemes the
/// official YES share is recomputed from the tampered tallies.
pub fn inject_fraud(
    dataset: &ElectionDataset,
    scheme: &FraudScheme,
    seed: u64,
) -> Result<(ElectionDataset, FraudManifest)> {
    scheme.validate()?;
    let mut out = dataset.clone();
    let mut manifest = FraudManifest {
        scheme: scheme.clone(),
        seed,
        affected_centers: Vec::new(),
        affected_machines: Vec::new(),
        modifications: Vec::new(),
    };
    if scheme.kind == FraudKind::None {
        return Ok((out, manifest));
    }
    let eligible: Vec<String> = dataset
        .centers
        .iter()
        .filter(|c| scheme.scope() == FraudScope::All || c.computerized)
        .map(|c| c.center_id.clone())
        .collect();
    if eligible.is_empty() {
        return Err(ForensicsError::param(match scheme.scope() {
            FraudScope::Computerized => "scheme targets computerized centers but the dataset has none",
            FraudScope::All => "dataset has no centers",
        }));
    }
    let mut rng = substream(seed, "fraud");
    let mods = &mut manifest.modifications;
    let mut affected_machines: Vec<String> = Vec::new();

    let affected: Vec<String> = if scheme.kind == FraudKind::MachineReprogram {
        let eligible_set: std::collections::HashSet<&str> = eligible.iter().map(String::as_str).collect();
        let candidates: Vec<usize> = (0..out.machines.len())
            .filter(|&i| eligible_set.contains(out.machines[i].center_id.as_str()))
            .collect();
        let chosen = choose_fraction(&candidates, scheme.affected_fraction, &mut rng);
        let mut centers = std::collections::BTreeSet::new();
        for i in chosen {
            let m = &mut out.machines[i];
            let moved = (scheme.delta * m.yes as f64).floor() as u64;
            relabel_yes(m, moved, mods);
            centers.insert(m.center_id.clone());
            affected_machines.push(format!("{}/{}", m.center_id, m.machine_id));
        }
        centers.into_iter().collect()
    } else {
        let mut chosen = choose_fraction(&eligible, scheme.affected_fraction, &mut rng);
        chosen.sort();
        let set: std::collections::HashSet<&str> = chosen.iter().map(String::as_str).collect();
        match scheme.kind {
            FraudKind::ProportionalShave | FraudKind::CapYes => {
                for m in out.machines.iter_mut().filter(|m| set.contains(m.center_id.as_str())) {
                    let moved = match scheme.kind {
                        FraudKind::ProportionalShave => (scheme.delta * m.yes as f64).floor() as u64,
                        _ => m.yes.saturating_sub(scheme.cap),
                    };
                    if moved > 0 {
                        affected_machines.push(format!("{}/{}", m.center_id, m.machine_id));
                    }
                    relabel_yes(m, moved, mods);
                }
            }
            FraudKind::MetadataLeak => {
                let votes: BTreeMap<&str, u64> =
                    dataset.center_totals().into_iter().map(|(id, t)| (id, t.nu)).collect();
                let mut seen = std::collections::HashSet::new();
                for t in out.transmissions.iter_mut().filter(|t| set.contains(t.center_id.as_str())) {
                    // the whole vote-dependent payload rides on the first session
                    if !seen.insert(t.center_id.clone()) {
                        continue;
                    }
                    let extra = (scheme.beta * votes.get(t.center_id.as_str()).copied().unwrap_or(0) as f64)
                        .round() as u64;
                    mods.push(Modification {
                        center_id: t.center_id.clone(),
                        unit: t.session_start.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
                        field: "bytes_out".into(),
                        before: t.bytes_out,
                        after: t.bytes_out + extra,
                    });
                    t.bytes_out += extra;
                    t.packets_out = t.bytes_out.div_ceil(1460);
                }
            }
            FraudKind::None | FraudKind::MachineReprogram => unreachable!(),
        }
        chosen
    };

    manifest.affected_centers = affected;
    manifest.affected_machines = affected_machines;
    if scheme.kind != FraudKind::MetadataLeak {
        out.official_yes_share = pooled_share(&out.machines);
    }
    Ok((out, manifest))
}
