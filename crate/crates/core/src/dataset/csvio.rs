//! CSV ingestion and emission.
//!
//! Schemas (UTF-8, comma separated, one header row):
//!
//! | file | header |
//! |------|--------|
//! | centers.csv | `center_id,region,computerized,registered,signatures` |
//! | machines.csv | `center_id,machine_id,nu,yes,no` |
//! | exitpoll.csv | `center_id,pollster,sample_size,yes_responses` |
//! | transmissions.csv | `center_id,session_start,session_end,bytes_in,bytes_out,packets_in,packets_out,traffic_class` |
//!
//! `exitpoll.csv` and `transmissions.csv` are optional; an absent file loads
//! as an empty table. Election-level metadata (label, official YES share) lives
//! in an optional `dataset.toml` next to the tables.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ElectionDataset, ExitPollSample, MachineTally, TrafficClass, TransmissionRecord, VotingCenter};
use crate::error::{ForensicsError, Result};

pub const CENTERS_HEADER: [&str; 5] = ["center_id", "region", "computerized", "registered", "signatures"];
pub const MACHINES_HEADER: [&str; 5] = ["center_id", "machine_id", "nu", "yes", "no"];
pub const EXITPOLL_HEADER: [&str; 4] = ["center_id", "pollster", "sample_size", "yes_responses"];
pub const TRANSMISSIONS_HEADER: [&str; 8] = [
    "center_id",
    "session_start",
    "session_end",
    "bytes_in",
    "bytes_out",
    "packets_in",
    "packets_out",
    "traffic_class",
];

const MANIFEST_FILE: &str = "dataset.toml";

/// `dataset.toml`: election metadata plus optional table locations relative to the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub label: Option<String>,
    pub official_yes_share: Option<f64>,
    pub centers: Option<String>,
    pub machines: Option<String>,
    pub exitpoll: Option<String>,
    pub transmissions: Option<String>,
}

/// Resolved table locations for [`load_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub label: String,
    /// `None` means: use the pooled YES share of the machine tallies.
    pub official_yes_share: Option<f64>,
    pub centers: PathBuf,
    pub machines: PathBuf,
    pub exit_polls: Option<PathBuf>,
    pub transmissions: Option<PathBuf>,
}

impl DatasetPaths {
    /// A directory holding the four CSVs and, optionally, `dataset.toml`;
    /// or the path of a manifest file.
    pub fn resolve(path: &Path) -> Result<Self> {
        if path.is_dir() {
            let manifest = path.join(MANIFEST_FILE);
            if manifest.is_file() {
                Self::from_manifest(&manifest)
            } else {
                Ok(Self::from_parts(path, DatasetManifest::default(), dir_label(path)))
            }
        } else {
            Self::from_manifest(path)
        }
    }

    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ForensicsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: DatasetManifest =
            toml::from_str(&text).map_err(|e| ForensicsError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let label = dir_label(base);
        Ok(Self::from_parts(base, manifest, label))
    }

    fn from_parts(base: &Path, manifest: DatasetManifest, default_label: String) -> Self {
        let pick = |name: &Option<String>, default: &str| base.join(name.as_deref().unwrap_or(default));
        let optional = |name: &Option<String>, default: &str| {
            let p = pick(name, default);
            // an explicitly named table must exist; a default one may be absent
            (name.is_some() || p.is_file()).then_some(p)
        };
        DatasetPaths {
            label: manifest.label.clone().unwrap_or(default_label),
            official_yes_share: manifest.official_yes_share,
            centers: pick(&manifest.centers, "centers.csv"),
            machines: pick(&manifest.machines, "machines.csv"),
            exit_polls: optional(&manifest.exitpoll, "exitpoll.csv"),
            transmissions: optional(&manifest.transmissions, "transmissions.csv"),
        }
    }
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "election".to_string())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

struct Table {
    file: String,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path, header: &[&str]) -> Result<Table> {
    let file = file_name(path);
    let bytes = fs::read(path).map_err(|source| ForensicsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let found = reader
        .headers()
        .map_err(|e| malformed(&file, 1, e.to_string()))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(malformed(
            &file,
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(&file, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, record));
    }
    Ok(Table { file, rows })
}

fn malformed(file: &str, line: u64, message: impl Into<String>) -> ForensicsError {
    ForensicsError::MalformedRow {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn count(file: &str, line: u64, record: &csv::StringRecord, idx: usize, name: &str) -> Result<u64> {
    let raw = record.get(idx).unwrap_or("");
    if raw.starts_with('-') {
        return Err(malformed(file, line, format!("negative count in {name}: {raw}")));
    }
    raw.parse::<u64>()
        .map_err(|_| malformed(file, line, format!("{name} is not an unsigned integer: {raw:?}")))
}

fn text(file: &str, line: u64, record: &csv::StringRecord, idx: usize, name: &str) -> Result<String> {
    match record.get(idx) {
        Some(s) if !s.is_empty() => Ok(s.to_string()),
        _ => Err(malformed(file, line, format!("missing {name}"))),
    }
}

fn timestamp(file: &str, line: u64, record: &csv::StringRecord, idx: usize, name: &str) -> Result<DateTime<Utc>> {
    let raw = record.get(idx).unwrap_or("");
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| malformed(file, line, format!("{name} is not an ISO-8601 timestamp ({raw:?}): {e}")))
}

fn parse_centers(path: &Path) -> Result<Vec<VotingCenter>> {
    let table = read_table(path, &CENTERS_HEADER)?;
    let f = &table.file;
    let mut seen = HashSet::new();
    let mut centers = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let line = *line;
        let center_id = text(f, line, r, 0, "center_id")?;
        let computerized = match r.get(2).unwrap_or("") {
            "0" => false,
            "1" => true,
            other => return Err(malformed(f, line, format!("computerized must be 0 or 1, found {other:?}"))),
        };
        let registered = count(f, line, r, 3, "registered")?;
        let signatures = count(f, line, r, 4, "signatures")?;
        if signatures > registered {
            return Err(malformed(
                f,
                line,
                format!("signatures ({signatures}) exceed registered ({registered}) for center {center_id}"),
            ));
        }
        if !seen.insert(center_id.clone()) {
            return Err(ForensicsError::DuplicateKey { file: f.clone(), key: center_id });
        }
        centers.push(VotingCenter {
            center_id,
            region: r.get(1).unwrap_or("").to_string(),
            computerized,
            registered,
            signatures,
        });
    }
    Ok(centers)
}

fn check_center(file: &str, known: &HashSet<&str>, id: &str) -> Result<()> {
    if known.contains(id) {
        Ok(())
    } else {
        Err(ForensicsError::UnresolvedCenter {
            file: file.to_string(),
            center_id: id.to_string(),
        })
    }
}

fn parse_machines(path: &Path, known: &HashSet<&str>) -> Result<Vec<MachineTally>> {
    let table = read_table(path, &MACHINES_HEADER)?;
    let f = &table.file;
    let mut seen = HashSet::new();
    let mut machines = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let line = *line;
        let center_id = text(f, line, r, 0, "center_id")?;
        let machine_id = text(f, line, r, 1, "machine_id")?;
        let nu = count(f, line, r, 2, "nu")?;
        let yes = count(f, line, r, 3, "yes")?;
        let no = count(f, line, r, 4, "no")?;
        check_center(f, known, &center_id)?;
        if !seen.insert((center_id.clone(), machine_id.clone())) {
            return Err(ForensicsError::DuplicateKey {
                file: f.clone(),
                key: format!("{center_id}/{machine_id}"),
            });
        }
        let tally = MachineTally::new(center_id, machine_id, nu, yes, no).map_err(|_| {
            malformed(f, line, format!("invariant yes + no <= nu violated: yes={yes} no={no} nu={nu}"))
        })?;
        machines.push(tally);
    }
    Ok(machines)
}

fn parse_polls(path: &Path, known: &HashSet<&str>) -> Result<Vec<ExitPollSample>> {
    let table = read_table(path, &EXITPOLL_HEADER)?;
    let f = &table.file;
    let mut seen = HashSet::new();
    let mut polls = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let line = *line;
        let center_id = text(f, line, r, 0, "center_id")?;
        let pollster = text(f, line, r, 1, "pollster")?;
        let sample_size = count(f, line, r, 2, "sample_size")?;
        let yes_responses = count(f, line, r, 3, "yes_responses")?;
        check_center(f, known, &center_id)?;
        if yes_responses > sample_size {
            return Err(malformed(
                f,
                line,
                format!("yes_responses ({yes_responses}) exceed sample_size ({sample_size})"),
            ));
        }
        if !seen.insert((center_id.clone(), pollster.clone())) {
            return Err(ForensicsError::DuplicateKey {
                file: f.clone(),
                key: format!("{center_id}/{pollster}"),
            });
        }
        polls.push(ExitPollSample {
            center_id,
            pollster,
            sample_size,
            yes_responses,
        });
    }
    Ok(polls)
}

fn parse_transmissions(path: &Path, known: &HashSet<&str>) -> Result<Vec<TransmissionRecord>> {
    let table = read_table(path, &TRANSMISSIONS_HEADER)?;
    let f = &table.file;
    let mut records = Vec::with_capacity(table.rows.len());
    for (line, r) in &table.rows {
        let line = *line;
        let center_id = text(f, line, r, 0, "center_id")?;
        let session_start = timestamp(f, line, r, 1, "session_start")?;
        let session_end = timestamp(f, line, r, 2, "session_end")?;
        let bytes_in = count(f, line, r, 3, "bytes_in")?;
        let bytes_out = count(f, line, r, 4, "bytes_out")?;
        let packets_in = count(f, line, r, 5, "packets_in")?;
        let packets_out = count(f, line, r, 6, "packets_out")?;
        let traffic_class: TrafficClass = r
            .get(7)
            .unwrap_or("")
            .parse()
            .map_err(|e: String| malformed(f, line, e))?;
        check_center(f, known, &center_id)?;
        if session_end < session_start {
            return Err(malformed(f, line, "session_end precedes session_start"));
        }
        records.push(TransmissionRecord {
            center_id,
            session_start,
            session_end,
            bytes_in,
            bytes_out,
            packets_in,
            packets_out,
            traffic_class,
        });
    }
    Ok(records)
}

/// Loads and joins the tables named by `paths`.
///
/// Fails on the first malformed row (with its line number), duplicate key,
/// negative count, row-level invariant violation, or center_id that does not
/// resolve to `centers.csv`.
pub fn load_dataset(paths: &DatasetPaths) -> Result<ElectionDataset> {
    let centers = parse_centers(&paths.centers)?;
    let known: HashSet<&str> = centers.iter().map(|c| c.center_id.as_str()).collect();
    let machines = parse_machines(&paths.machines, &known)?;
    let exit_polls = match &paths.exit_polls {
        Some(p) => parse_polls(p, &known)?,
        None => Vec::new(),
    };
    let transmissions = match &paths.transmissions {
        Some(p) => parse_transmissions(p, &known)?,
        None => Vec::new(),
    };
    drop(known);
    let mut dataset = ElectionDataset {
        label: paths.label.clone(),
        official_yes_share: 0.0,
        centers,
        machines,
        exit_polls,
        transmissions,
    };
    dataset.official_yes_share = match paths.official_yes_share {
        Some(share) => {
            if !(0.0..=1.0).contains(&share) {
                return Err(ForensicsError::Config(format!(
                    "official_yes_share must lie in [0, 1], found {share}"
                )));
            }
            share
        }
        None => dataset.pooled_yes_share().unwrap_or(0.0),
    };
    Ok(dataset)
}

fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Canonical text of the four tables, in schema order.
pub(crate) fn canonical_tables(d: &ElectionDataset) -> [String; 4] {
    let centers = to_csv(
        CENTERS_HEADER,
        d.centers.iter().map(|c| {
            [
                c.center_id.clone(),
                c.region.clone(),
                if c.computerized { "1" } else { "0" }.to_string(),
                c.registered.to_string(),
                c.signatures.to_string(),
            ]
        }),
    );
    let machines = to_csv(
        MACHINES_HEADER,
        d.machines.iter().map(|m| {
            [
                m.center_id.clone(),
                m.machine_id.clone(),
                m.nu.to_string(),
                m.yes.to_string(),
                m.no.to_string(),
            ]
        }),
    );
    let polls = to_csv(
        EXITPOLL_HEADER,
        d.exit_polls.iter().map(|p| {
            [
                p.center_id.clone(),
                p.pollster.clone(),
                p.sample_size.to_string(),
                p.yes_responses.to_string(),
            ]
        }),
    );
    let transmissions = to_csv(
        TRANSMISSIONS_HEADER,
        d.transmissions.iter().map(|t| {
            [
                t.center_id.clone(),
                format_timestamp(&t.session_start),
                format_timestamp(&t.session_end),
                t.bytes_in.to_string(),
                t.bytes_out.to_string(),
                t.packets_in.to_string(),
                t.packets_out.to_string(),
                t.traffic_class.to_string(),
            ]
        }),
    );
    [centers, machines, polls, transmissions]
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| ForensicsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the four CSVs plus `dataset.toml` into `dir` (created if needed).
pub fn write_dataset(dataset: &ElectionDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ForensicsError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let [centers, machines, polls, transmissions] = canonical_tables(dataset);
    write_file(&dir.join("centers.csv"), &centers)?;
    write_file(&dir.join("machines.csv"), &machines)?;
    write_file(&dir.join("exitpoll.csv"), &polls)?;
    write_file(&dir.join("transmissions.csv"), &transmissions)?;
    let manifest = DatasetManifest {
        label: Some(dataset.label.clone()),
        official_yes_share: Some(dataset.official_yes_share),
        ..Default::default()
    };
    let text = toml::to_string(&manifest).map_err(|e| ForensicsError::Config(e.to_string()))?;
    write_file(&dir.join(MANIFEST_FILE), &text)
}

/// Reads any headed CSV into serde records (used for plot-data and precinct files).
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = file_name(path);
    let bytes = fs::read(path).map_err(|source| ForensicsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records_from(&file, bytes.as_slice())
}

pub(crate) fn read_records_from<T: DeserializeOwned>(file: &str, input: &[u8]) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: T = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(file, line, e.to_string())
        })?;
        out.push(row);
    }
    Ok(out)
}

/// Serialises records as a headed CSV string.
pub fn write_records<T: Serialize>(records: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)
            .map_err(|e| ForensicsError::Config(format!("csv serialisation failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ForensicsError::Config(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
