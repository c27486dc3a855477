//! Association and query log parsing, per-device sessionization and the
//! association-duration CDF.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{timestamp, AssociationRecord, Hop, QueryRecord, Reject, Trajectory};

pub const AL_HEADER: [&str; 6] = ["device_id", "ap_id", "start_ts", "duration_s", "bytes_down", "bytes_up"];
pub const QL_HEADER: [&str; 4] = ["device_id", "ap_id", "ts", "query"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionizationConfig {
    pub dwell_threshold_s: u64,
    pub session_gap_s: u64,
    pub sampling_interval_s: u64,
    /// Apply the dwell threshold to per-visit sums (true) or to single
    /// associations before summing (false).
    pub filter_after_aggregation: bool,
}

impl Default for SessionizationConfig {
    fn default() -> Self {
        SessionizationConfig {
            dwell_threshold_s: 600,
            session_gap_s: 1800,
            sampling_interval_s: 300,
            filter_after_aggregation: true,
        }
    }
}

impl SessionizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.session_gap_s == 0 {
            return Err(Error::Config("session_gap must be positive".into()));
        }
        if self.dwell_threshold_s < self.sampling_interval_s {
            return Err(Error::Config(format!(
                "dwell threshold {} s is below the sampling interval {} s",
                self.dwell_threshold_s, self.sampling_interval_s
            )));
        }
        Ok(())
    }
}

/// Parsed rows with their source line numbers, plus rejected rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog<T> {
    pub records: Vec<T>,
    pub line_nos: Vec<usize>,
    pub rejects: Vec<Reject>,
}

impl<T> ParsedLog<T> {
    /// Wraps in-memory records, numbering them as they would appear in a
    /// file with a header line.
    pub fn from_records(records: Vec<T>) -> Self {
        let line_nos = (0..records.len()).map(|i| i + 2).collect();
        ParsedLog {
            records,
            line_nos,
            rejects: Vec::new(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &T)> {
        self.line_nos.iter().copied().zip(&self.records)
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], file: &str) -> Result<()> {
    let found = rdr.headers()?.clone();
    if found.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::HeaderMismatch {
            file: file.to_string(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).from_reader(input)
}

fn parse_rows<R: Read, T>(
    input: R,
    header: &[&str],
    file: &str,
    parse: impl Fn(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<ParsedLog<T>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, header, file)?;
    let mut out = ParsedLog {
        records: Vec::new(),
        line_nos: Vec::new(),
        rejects: Vec::new(),
    };
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                let line_no = e.position().map(|p| p.line() as usize).unwrap_or(0);
                out.rejects.push(Reject {
                    line_no,
                    reason: format!("unparseable row: {e}"),
                });
                continue;
            }
        };
        let line_no = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != header.len() {
            out.rejects.push(Reject {
                line_no,
                reason: format!("expected {} fields, found {}", header.len(), row.len()),
            });
            continue;
        }
        match parse(&row) {
            Ok(rec) => {
                out.records.push(rec);
                out.line_nos.push(line_no);
            }
            Err(reason) => out.rejects.push(Reject { line_no, reason }),
        }
    }
    Ok(out)
}

fn id_field(row: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<String, String> {
    let v = row[i].trim();
    if v.is_empty() {
        Err(format!("empty {name}"))
    } else {
        Ok(v.to_string())
    }
}

fn ts_field(row: &csv::StringRecord, i: usize) -> std::result::Result<DateTime<Utc>, String> {
    timestamp::parse(row[i].trim()).ok_or_else(|| format!("bad timestamp `{}`", &row[i]))
}

fn count_field(row: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<u64, String> {
    let v = row[i].trim();
    if v.starts_with('-') {
        return Err(format!("negative {name} `{v}`"));
    }
    v.parse().map_err(|_| format!("bad {name} `{v}`"))
}

pub fn read_association_log<R: Read>(input: R) -> Result<ParsedLog<AssociationRecord>> {
    parse_rows(input, &AL_HEADER, "association log", |row| {
        Ok(AssociationRecord {
            device_id: id_field(row, 0, "device_id")?,
            ap_id: id_field(row, 1, "ap_id")?,
            start: ts_field(row, 2)?,
            duration_s: count_field(row, 3, "duration")?,
            bytes_down: count_field(row, 4, "bytes_down")?,
            bytes_up: count_field(row, 5, "bytes_up")?,
        })
    })
}

pub fn read_query_log<R: Read>(input: R) -> Result<ParsedLog<QueryRecord>> {
    parse_rows(input, &QL_HEADER, "query log", |row| {
        let text = row[3].trim();
        if text.is_empty() {
            return Err("empty query text".into());
        }
        Ok(QueryRecord {
            device_id: id_field(row, 0, "device_id")?,
            ap_id: id_field(row, 1, "ap_id")?,
            at: ts_field(row, 2)?,
            text: text.to_string(),
        })
    })
}

pub fn parse_association_log(path: &Path) -> Result<ParsedLog<AssociationRecord>> {
    read_association_log(open(path)?).map_err(|e| relabel(e, path))
}

pub fn parse_query_log(path: &Path) -> Result<ParsedLog<QueryRecord>> {
    read_query_log(open(path)?).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::HeaderMismatch { expected, found, .. } => Error::HeaderMismatch {
            file: path.display().to_string(),
            expected,
            found,
        },
        other => other,
    }
}

pub fn write_association_log<W: Write>(out: W, records: &[AssociationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AL_HEADER)?;
    for r in records {
        w.write_record([
            r.device_id.clone(),
            r.ap_id.clone(),
            timestamp::format(&r.start),
            r.duration_s.to_string(),
            r.bytes_down.to_string(),
            r.bytes_up.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<association log>", e))
}

pub fn write_query_log<W: Write>(out: W, records: &[QueryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(QL_HEADER)?;
    for r in records {
        w.write_record([
            r.device_id.as_str(),
            r.ap_id.as_str(),
            &timestamp::format(&r.at),
            r.text.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<query log>", e))
}

/// Rejects as JSON lines.
pub fn write_rejects<W: Write>(mut out: W, rejects: &[Reject]) -> Result<()> {
    for r in rejects {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<rejects>", e))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sessionized {
    pub trajectories: Vec<Trajectory>,
    pub rejects: Vec<Reject>,
}

struct Session<'a> {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    associations: Vec<&'a AssociationRecord>,
}

fn split_sessions<'a>(mut records: Vec<&'a AssociationRecord>, gap_s: u64) -> Vec<Session<'a>> {
    records.sort_by(|a, b| {
        (a.start, &a.ap_id, a.duration_s, a.bytes_down, a.bytes_up)
            .cmp(&(b.start, &b.ap_id, b.duration_s, b.bytes_down, b.bytes_up))
    });
    let gap = Duration::seconds(gap_s as i64);
    let mut sessions: Vec<Session> = Vec::new();
    for r in records {
        match sessions.last_mut() {
            Some(s) if r.start - s.end <= gap => {
                s.end = s.end.max(r.end());
                s.associations.push(r);
            }
            _ => sessions.push(Session {
                start: r.start,
                end: r.end(),
                associations: vec![r],
            }),
        }
    }
    sessions
}

fn aggregate_hops(session: &Session, config: &SessionizationConfig) -> Vec<Hop> {
    let mut order: Vec<&str> = Vec::new();
    let mut dwell: BTreeMap<&str, u64> = BTreeMap::new();
    for a in &session.associations {
        if !config.filter_after_aggregation && a.duration_s < config.dwell_threshold_s {
            continue;
        }
        let slot = dwell.entry(a.ap_id.as_str()).or_insert_with(|| {
            order.push(a.ap_id.as_str());
            0
        });
        *slot += a.duration_s;
    }
    order
        .into_iter()
        .filter(|ap| dwell[ap] >= config.dwell_threshold_s)
        .map(|ap| Hop {
            ap_id: ap.to_string(),
            dwell_s: dwell[ap],
        })
        .collect()
}

/// Splits each device's associations into visits and builds trajectories.
///
/// Rows naming an AP outside `known_aps` are rejected; so are queries that
/// fall outside every visit of their device. Output is ordered by device
/// then visit start, and does not depend on input row order.
pub fn sessionize(
    associations: &ParsedLog<AssociationRecord>,
    queries: &ParsedLog<QueryRecord>,
    known_aps: &BTreeSet<String>,
    entry_exit_aps: &BTreeSet<String>,
    config: &SessionizationConfig,
) -> Result<Sessionized> {
    config.validate()?;
    let mut rejects = Vec::new();
    let mut by_device: BTreeMap<&str, Vec<&AssociationRecord>> = BTreeMap::new();
    for (line_no, a) in associations.iter() {
        if known_aps.contains(&a.ap_id) {
            by_device.entry(&a.device_id).or_default().push(a);
        } else {
            rejects.push(Reject {
                line_no,
                reason: format!("association log: unknown AP `{}`", a.ap_id),
            });
        }
    }
    let mut queries_by_device: BTreeMap<&str, Vec<(usize, &QueryRecord)>> = BTreeMap::new();
    for (line_no, q) in queries.iter() {
        if known_aps.contains(&q.ap_id) {
            queries_by_device.entry(&q.device_id).or_default().push((line_no, q));
        } else {
            rejects.push(Reject {
                line_no,
                reason: format!("query log: unknown AP `{}`", q.ap_id),
            });
        }
    }

    let mut trajectories = Vec::new();
    let empty = Vec::new();
    let devices: BTreeSet<&str> = by_device.keys().chain(queries_by_device.keys()).copied().collect();
    for device in devices {
        let sessions = split_sessions(by_device.get(device).cloned().unwrap_or_default(), config.session_gap_s);
        let mut attached: Vec<Vec<QueryRecord>> = vec![Vec::new(); sessions.len()];
        let mut device_queries = queries_by_device.get(device).unwrap_or(&empty).clone();
        device_queries.sort_by(|(la, a), (lb, b)| (a.at, &a.ap_id, &a.text, la).cmp(&(b.at, &b.ap_id, &b.text, lb)));
        for (line_no, q) in device_queries {
            match sessions.iter().position(|s| s.start <= q.at && q.at <= s.end) {
                Some(i) => attached[i].push(q.clone()),
                None => rejects.push(Reject {
                    line_no,
                    reason: format!("query log: no visit of `{device}` covers {}", timestamp::format(&q.at)),
                }),
            }
        }
        for (session, qs) in sessions.iter().zip(attached) {
            let hops = aggregate_hops(session, config);
            if hops.is_empty() {
                debug!("visit of {device} at {} dropped: no hop passes the dwell filter", session.start);
                continue;
            }
            let t = Trajectory::new(device, session.start, hops, qs, config.dwell_threshold_s)?;
            trajectories.push(mark_complete(t, entry_exit_aps));
        }
    }
    rejects.sort_by(|a, b| (a.line_no, &a.reason).cmp(&(b.line_no, &b.reason)));
    Ok(Sessionized { trajectories, rejects })
}

/// Complete iff at least three hops and both ends are entry/exit APs.
pub fn mark_complete(mut trajectory: Trajectory, entry_exit_aps: &BTreeSet<String>) -> Trajectory {
    let hops = &trajectory.hops;
    trajectory.complete = hops.len() >= 3
        && entry_exit_aps.contains(&hops[0].ap_id)
        && entry_exit_aps.contains(&hops[hops.len() - 1].ap_id);
    trajectory
}

/// Cumulative share of associations with duration ≤ each bound; bounds
/// are multiples of `bin_width_s` up to the first one covering the maximum.
pub fn association_cdf(records: &[AssociationRecord], bin_width_s: u64) -> Result<Vec<(u64, f64)>> {
    if bin_width_s == 0 {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let mut durations: Vec<u64> = records.iter().map(|r| r.duration_s).collect();
    durations.sort_unstable();
    let max = *durations.last().unwrap();
    let bins = max.div_ceil(bin_width_s).max(1);
    let n = durations.len() as f64;
    Ok((1..=bins)
        .map(|b| {
            let bound = b * bin_width_s;
            let below = durations.partition_point(|&d| d <= bound);
            (bound, below as f64 / n)
        })
        .collect())
}

pub fn write_trajectories<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n").map_err(|e| Error::io("<trajectories>", e))?;
    }
    Ok(())
}

pub fn read_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
