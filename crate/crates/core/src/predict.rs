//! Next-location prediction with item-item and user-user collaborative
//! filtering over binary visit vectors, optionally weighted by the
//! semantic similarity of each candidate AP to the visit's queries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hop, QueryRecord, Trajectory};

/// Jaccard similarity of two binary vectors; 0 when both are empty.
pub fn jaccard(u: &[bool], v: &[bool]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in u.iter().zip(v) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Rows are visits, columns are APs (sorted by id).
#[derive(Clone, Debug, PartialEq)]
pub struct VisitMatrix {
    aps: Vec<String>,
    index: BTreeMap<String, usize>,
    rows: Vec<Vec<bool>>,
}

impl VisitMatrix {
    pub fn new(aps: impl IntoIterator<Item = String>) -> Self {
        let aps: Vec<String> = aps.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = aps.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        VisitMatrix {
            aps,
            index,
            rows: Vec::new(),
        }
    }

    /// Adds a visit. Every AP must be a known column and at least one is required.
    pub fn push_row<'a>(&mut self, visited: impl IntoIterator<Item = &'a str>) -> Result<usize> {
        let row = self.indicator(visited)?;
        if !row.iter().any(|&b| b) {
            return Err(Error::InvalidInput("visit matrix rows need at least one AP".into()));
        }
        self.rows.push(row);
        Ok(self.rows.len() - 1)
    }

    pub fn indicator<'a>(&self, visited: impl IntoIterator<Item = &'a str>) -> Result<Vec<bool>> {
        let mut row = vec![false; self.aps.len()];
        for ap in visited {
            let &i = self.index.get(ap).ok_or_else(|| Error::UnknownAp(ap.to_string()))?;
            row[i] = true;
        }
        Ok(row)
    }

    pub fn aps(&self) -> &[String] {
        &self.aps
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Visits per AP.
    pub fn popularity(&self) -> BTreeMap<String, usize> {
        self.aps
            .iter()
            .enumerate()
            .map(|(j, a)| (a.clone(), self.rows.iter().filter(|r| r[j]).count()))
            .collect()
    }
}

/// Pairwise Jaccard similarity between AP columns.
#[derive(Clone, Debug)]
pub struct ItemSimilarity {
    aps: Vec<String>,
    sim: Vec<Vec<f64>>,
}

impl ItemSimilarity {
    pub fn fit(matrix: &VisitMatrix) -> Self {
        let m = matrix.aps.len();
        let mut co = vec![vec![0usize; m]; m];
        for row in &matrix.rows {
            let on: Vec<usize> = (0..m).filter(|&j| row[j]).collect();
            for &a in &on {
                for &b in &on {
                    co[a][b] += 1;
                }
            }
        }
        let sim = (0..m)
            .map(|a| {
                (0..m)
                    .map(|b| {
                        let union = co[a][a] + co[b][b] - co[a][b];
                        if union == 0 {
                            0.0
                        } else {
                            co[a][b] as f64 / union as f64
                        }
                    })
                    .collect()
            })
            .collect();
        ItemSimilarity {
            aps: matrix.aps.clone(),
            sim,
        }
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        self.sim[a][b]
    }
}

fn prefix_columns(aps: &[String], prefix: &BTreeSet<String>) -> Result<Vec<usize>> {
    prefix
        .iter()
        .map(|p| {
            aps.binary_search(p)
                .map_err(|_| Error::UnknownAp(p.clone()))
        })
        .collect()
}

/// Mean Jaccard between each unvisited AP and the visited ones.
pub fn item_item_scores(sim: &ItemSimilarity, prefix: &BTreeSet<String>) -> Result<BTreeMap<String, f64>> {
    let visited = prefix_columns(&sim.aps, prefix)?;
    if visited.is_empty() {
        return Err(Error::InvalidInput("empty prefix".into()));
    }
    Ok(sim
        .aps
        .iter()
        .enumerate()
        .filter(|(_, a)| !prefix.contains(*a))
        .map(|(j, a)| {
            let s: f64 = visited.iter().map(|&i| sim.similarity(i, j)).sum();
            (a.clone(), s / visited.len() as f64)
        })
        .collect())
}

/// Similarity-weighted vote of the `k_neighbors` rows most similar to the
/// prefix (ties by row index), normalized by total neighbour similarity.
/// `exclude` keeps the target's own row out of its neighbourhood.
pub fn user_user_scores(
    matrix: &VisitMatrix,
    prefix: &BTreeSet<String>,
    k_neighbors: usize,
    exclude: Option<usize>,
) -> Result<BTreeMap<String, f64>> {
    if k_neighbors < 1 {
        return Err(Error::InvalidInput("k_neighbors must be at least 1".into()));
    }
    let target = matrix.indicator(prefix.iter().map(String::as_str))?;
    let mut sims: Vec<(usize, f64)> = matrix
        .rows
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, r)| Ok((i, jaccard(&target, r)?)))
        .collect::<Result<_>>()?;
    sims.sort_by(|a, b| desc(a.1, b.1).then(a.0.cmp(&b.0)));
    sims.truncate(k_neighbors);
    let mass: f64 = sims.iter().map(|s| s.1).sum();
    Ok(matrix
        .aps
        .iter()
        .enumerate()
        .filter(|(_, a)| !prefix.contains(*a))
        .map(|(j, a)| {
            let vote: f64 = sims.iter().filter(|(i, _)| matrix.rows[*i][j]).map(|s| s.1).sum();
            (a.clone(), if mass > 0.0 { vote / mass } else { 0.0 })
        })
        .collect())
}

/// JS × SS per AP; APs without an SS entry weigh 0.
pub fn weighted_scores(scores: &BTreeMap<String, f64>, ss: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    scores
        .iter()
        .map(|(a, s)| (a.clone(), s * ss.get(a).copied().unwrap_or(0.0)))
        .collect()
}

/// Score rounded to 12 significant digits, so that summation-order noise
/// does not decide ties (and -0.0 equals 0.0).
fn rank_key(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x + 0.0;
    }
    let scale = 10f64.powi(11 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

/// Descending order on rounded scores.
pub(crate) fn desc(a: f64, b: f64) -> std::cmp::Ordering {
    rank_key(b).total_cmp(&rank_key(a))
}

/// Highest scores first, ties by AP id.
pub fn top_k(scores: &BTreeMap<String, f64>, k: usize) -> Vec<String> {
    let mut v: Vec<(&String, f64)> = scores.iter().map(|(a, &s)| (a, s)).collect();
    v.sort_by(|a, b| desc(a.1, b.1).then(a.0.cmp(b.0)));
    v.into_iter().take(k).map(|(a, _)| a.clone()).collect()
}

/// Ranks by weighted score, then by the unweighted score, then AP id, so
/// that candidates with equal (often zero) semantic weight keep their CF
/// order.
pub fn top_k_weighted(weighted: &BTreeMap<String, f64>, base: &BTreeMap<String, f64>, k: usize) -> Vec<String> {
    let mut v: Vec<(&String, f64, f64)> = weighted
        .iter()
        .map(|(a, &w)| (a, w, base.get(a).copied().unwrap_or(0.0)))
        .collect();
    v.sort_by(|a, b| desc(a.1, b.1).then(desc(a.2, b.2)).then(a.0.cmp(b.0)));
    v.into_iter().take(k).map(|(a, _, _)| a.clone()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub prefix: Vec<Hop>,
    pub suffix: Vec<Hop>,
    /// The first query's AP was not among the hops; the temporally nearest
    /// hop was used instead.
    pub fallback: bool,
}

/// Splits a visit after the hop where its first query was issued.
/// Hop times are approximated as back-to-back from the visit start.
pub fn partition_at_first_query(trajectory: &Trajectory) -> Result<Partition> {
    let first = first_query(trajectory)
        .ok_or_else(|| Error::InvalidInput(format!("{} has no queries", trajectory.id)))?;
    let (cut, fallback) = match trajectory.hops.iter().position(|h| h.ap_id == first.ap_id) {
        Some(i) => (i, false),
        None => (nearest_hop(trajectory, first), true),
    };
    Ok(Partition {
        prefix: trajectory.hops[..=cut].to_vec(),
        suffix: trajectory.hops[cut + 1..].to_vec(),
        fallback,
    })
}

pub fn first_query(trajectory: &Trajectory) -> Option<&QueryRecord> {
    trajectory.queries.iter().min_by(|a, b| (a.at, &a.ap_id, &a.text).cmp(&(b.at, &b.ap_id, &b.text)))
}

fn nearest_hop(trajectory: &Trajectory, q: &QueryRecord) -> usize {
    let mut start = trajectory.visit_start;
    let mut best = (i64::MAX, 0);
    for (i, h) in trajectory.hops.iter().enumerate() {
        let end = start + Duration::seconds(h.dwell_s as i64);
        let gap = if q.at < start {
            (start - q.at).num_seconds()
        } else if q.at > end {
            (q.at - end).num_seconds()
        } else {
            0
        };
        if gap < best.0 {
            best = (gap, i);
        }
        start = end;
    }
    best.1
}

/// Queries visible at the partition point: those issued at prefix APs plus
/// the partitioning query itself.
pub fn observed_queries<'a>(trajectory: &'a Trajectory, partition: &Partition) -> Vec<&'a str> {
    let prefix: BTreeSet<&str> = partition.prefix.iter().map(|h| h.ap_id.as_str()).collect();
    let first = first_query(trajectory);
    trajectory
        .queries
        .iter()
        .filter(|q| prefix.contains(q.ap_id.as_str()) || Some(*q) == first)
        .map(|q| q.text.as_str())
        .collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "i-i")]
    ItemItem,
    #[serde(rename = "i-i-w")]
    ItemItemWeighted,
    #[serde(rename = "u-u")]
    UserUser,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::ItemItem, Method::ItemItemWeighted, Method::UserUser];

    pub fn name(self) -> &'static str {
        match self {
            Method::ItemItem => "i-i",
            Method::ItemItemWeighted => "i-i-w",
            Method::UserUser => "u-u",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub trajectory_id: String,
    pub method: Method,
    pub k: usize,
    pub predicted: Vec<String>,
    pub actual: Vec<String>,
}

pub fn write_predictions<W: Write>(mut out: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}

pub fn read_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::timestamp;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn matrix(rows: &[&[&str]]) -> VisitMatrix {
        let mut m = VisitMatrix::new(["A", "B", "C", "D", "E"].map(String::from));
        for r in rows {
            m.push_row(r.iter().copied()).unwrap();
        }
        m
    }

    #[test]
    fn jaccard_cases() {
        let a = [true, true, true, false];
        let b = [false, true, true, true];
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard(&a, &b).unwrap(), 0.5);
        assert_eq!(jaccard(&[true, false], &[false, true]).unwrap(), 0.0);
        assert_eq!(jaccard(&[false; 3], &[false; 3]).unwrap(), 0.0);
        assert!(jaccard(&[true], &[true, false]).is_err());
    }

    #[test]
    fn item_item_extremes() {
        let m = matrix(&[&["A", "B", "C"], &["A", "B", "C"], &["D"]]);
        let s = item_item_scores(&ItemSimilarity::fit(&m), &set(&["A", "B"])).unwrap();
        assert_eq!(s["C"], 1.0);
        assert_eq!(s["D"], 0.0);
        assert_eq!(s["E"], 0.0);
        assert!(!s.contains_key("A"));
    }

    #[test]
    fn user_user_cases() {
        let m = matrix(&[&["A", "B", "E"], &["C"]]);
        let s = user_user_scores(&m, &set(&["A", "B"]), 1, None).unwrap();
        assert_eq!(top_k(&s, 1), vec!["E"]);
        let s = user_user_scores(&m, &set(&["D"]), 2, None).unwrap();
        assert!(s.values().all(|&v| v == 0.0));
        assert!(user_user_scores(&m, &set(&["A"]), 0, None).is_err());
    }

    #[test]
    fn weighting() {
        let scores: BTreeMap<String, f64> = [("A".to_string(), 0.4), ("B".to_string(), 0.9)].into();
        let ones: BTreeMap<String, f64> = [("A".to_string(), 1.0), ("B".to_string(), 1.0)].into();
        assert_eq!(weighted_scores(&scores, &ones), scores);
        let ss: BTreeMap<String, f64> = [("A".to_string(), 0.3), ("B".to_string(), 0.0)].into();
        let w = weighted_scores(&scores, &ss);
        assert!((w["A"] - 0.12).abs() < 1e-15);
        assert_eq!(w["B"], 0.0);
        assert_eq!(top_k_weighted(&w, &scores, 2), vec!["A", "B"]);
    }

    #[test]
    fn top_k_rules() {
        let flat: BTreeMap<String, f64> = ["C", "A", "B"].iter().map(|a| (a.to_string(), 0.5)).collect();
        assert_eq!(top_k(&flat, 5), vec!["A", "B", "C"]);
        let mut s = flat.clone();
        s.insert("C".into(), 0.9);
        assert_eq!(top_k(&s, 1), vec!["C"]);
    }

    fn traj(hops: &[&str], query_aps: &[&str]) -> Trajectory {
        let t0 = timestamp::parse("2013-03-01T10:00:00Z").unwrap();
        let hops = hops
            .iter()
            .map(|a| Hop {
                ap_id: a.to_string(),
                dwell_s: 600,
            })
            .collect();
        let queries = query_aps
            .iter()
            .enumerate()
            .map(|(i, a)| QueryRecord {
                device_id: "u".into(),
                ap_id: a.to_string(),
                at: t0 + Duration::seconds(700 * (i as i64 + 1)),
                text: format!("q{i}"),
            })
            .collect();
        Trajectory::new("u", t0, hops, queries, 600).unwrap()
    }

    #[test]
    fn partitions() {
        let ids = |h: &[Hop]| h.iter().map(|h| h.ap_id.clone()).collect::<Vec<_>>();
        let p = partition_at_first_query(&traj(&["A", "B", "C", "D"], &["B"])).unwrap();
        assert_eq!((ids(&p.prefix), ids(&p.suffix)), (vec!["A".to_string(), "B".into()], vec!["C".to_string(), "D".into()]));
        let p = partition_at_first_query(&traj(&["A", "B", "C"], &["C"])).unwrap();
        assert!(p.suffix.is_empty());
        let p = partition_at_first_query(&traj(&["A", "B", "C"], &["A"])).unwrap();
        assert_eq!(p.prefix.len(), 1);
        // query at 10:11:40 from an AP that is not a hop: nearest hop is B (10:10-10:20)
        let p = partition_at_first_query(&traj(&["A", "B", "C"], &["Z"])).unwrap();
        assert!(p.fallback);
        assert_eq!(ids(&p.prefix), vec!["A".to_string(), "B".into()]);
        assert!(partition_at_first_query(&traj(&["A"], &[])).is_err());
    }

    #[test]
    fn prediction_lines_round_trip() {
        let r = PredictionRecord {
            trajectory_id: "u@1".into(),
            method: Method::ItemItemWeighted,
            k: 2,
            predicted: vec!["A".into(), "B".into()],
            actual: vec!["B".into()],
        };
        let mut buf = Vec::new();
        write_predictions(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#""method":"i-i-w""#));
        assert_eq!(read_predictions(&text).unwrap(), vec![r]);
    }
}
