//! The 43 cyber-physical-contextual features of a visit.

use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{query_context, TermBag, TripleStore};
use crate::model::{IntentLabel, Trajectory, CATEGORY_COUNT};
use crate::similarity::{CategorySpace, SimilarityProfile};

pub const FEATURE_COUNT: usize = 43;

// 0-based column offsets.
const HOPS: usize = 0;
const DWELL: usize = 1;
const DWELL_FRACTIONS: usize = 2;
const QUERIES: usize = 20;
const CS: usize = 21;
const MAX_CS: usize = 39;
const SUM_CS: usize = 40;
const STORES: usize = 41;
const CROWD: usize = 42;

pub fn feature_name(i: usize) -> String {
    format!("F{}", i + 1)
}

pub fn feature_names() -> Vec<String> {
    (0..FEATURE_COUNT).map(feature_name).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<IntentLabel>,
}

/// Reference documents for F42 (store names) and F43 (crowd keywords),
/// already mapped into category terms.
#[derive(Clone, Debug, Default)]
pub struct ReferenceDocs {
    pub stores: Option<TermBag>,
    pub crowd: Option<TermBag>,
}

impl ReferenceDocs {
    /// Builds both documents by running each non-empty line through entity
    /// linking and graph exploration, like a visit's queries.
    pub fn from_lines(store: &TripleStore, stores: Option<&str>, crowd: Option<&str>, hops: usize) -> Self {
        let doc = |text: &str| {
            let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            query_context(store, &lines, hops).document
        };
        ReferenceDocs {
            stores: stores.map(doc),
            crowd: crowd.map(doc),
        }
    }
}

/// F1..F43 for one visit. `query_doc` is the visit's cyber context.
pub fn extract_features(
    trajectory: &Trajectory,
    profile: &SimilarityProfile,
    query_doc: &TermBag,
    refs: &ReferenceDocs,
    space: &CategorySpace,
) -> FeatureVector {
    let mut f = vec![0.0; FEATURE_COUNT];
    f[HOPS] = trajectory.hops.len() as f64;
    f[DWELL] = trajectory.total_dwell() as f64;
    f[DWELL_FRACTIONS..DWELL_FRACTIONS + CATEGORY_COUNT].copy_from_slice(&profile.dwell_fractions);
    f[QUERIES] = trajectory.queries.len() as f64;
    f[CS..CS + CATEGORY_COUNT].copy_from_slice(&profile.cs);
    f[MAX_CS] = profile.cs.iter().copied().fold(0.0, f64::max);
    f[SUM_CS] = profile.cs.iter().sum();
    f[STORES] = refs.stores.as_ref().map_or(0.0, |d| space.bag_cosine(query_doc, d));
    f[CROWD] = refs.crowd.as_ref().map_or(0.0, |d| space.bag_cosine(query_doc, d));
    FeatureVector { values: f, label: None }
}

/// Named feature groups.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    /// F1–F20: trajectory shape and dwell distribution.
    Phy,
    /// F21: query count.
    Cyb,
    /// F22–F43: contextual similarity.
    Cont,
}

impl FeatureGroup {
    pub fn columns(self) -> std::ops::Range<usize> {
        match self {
            FeatureGroup::Phy => 0..QUERIES,
            FeatureGroup::Cyb => QUERIES..CS,
            FeatureGroup::Cont => CS..FEATURE_COUNT,
        }
    }
}

/// Union of feature groups, written `phy+cyb+cont`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSet(Vec<FeatureGroup>);

impl FeatureSet {
    pub fn all() -> Self {
        FeatureSet(vec![FeatureGroup::Phy, FeatureGroup::Cyb, FeatureGroup::Cont])
    }

    pub fn new(groups: &[FeatureGroup]) -> Self {
        let mut g = groups.to_vec();
        g.sort_by_key(|g| g.columns().start);
        g.dedup();
        FeatureSet(g)
    }

    pub fn columns(&self) -> Vec<usize> {
        self.0.iter().flat_map(|g| g.columns()).collect()
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let groups = s
            .split('+')
            .map(|p| match p.trim().to_ascii_lowercase().as_str() {
                "phy" => Ok(FeatureGroup::Phy),
                "cyb" => Ok(FeatureGroup::Cyb),
                "cont" => Ok(FeatureGroup::Cont),
                other => Err(Error::Config(format!("unknown feature group `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureSet::new(&groups))
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<&str> = self
            .0
            .iter()
            .map(|g| match g {
                FeatureGroup::Phy => "phy",
                FeatureGroup::Cyb => "cyb",
                FeatureGroup::Cont => "cont",
            })
            .collect();
        f.write_str(&parts.join("+"))
    }
}

/// Everything needed to featurize visits.
pub struct Featurizer<'a> {
    pub store: &'a TripleStore,
    pub space: &'a CategorySpace,
    pub ap_labels: &'a crate::model::ApLabels,
    pub refs: ReferenceDocs,
    pub hops: usize,
}

impl Featurizer<'_> {
    pub fn warn_missing_refs(&self) {
        if self.refs.stores.is_none() {
            warn!("no store-name document; F42 is set to 0");
        }
        if self.refs.crowd.is_none() {
            warn!("no crowd-keyword document; F43 is set to 0");
        }
    }

    pub fn profile(&self, trajectory: &Trajectory) -> (TermBag, SimilarityProfile) {
        let ctx = query_context(self.store, &trajectory.query_texts(), self.hops);
        let profile = SimilarityProfile::compute(self.space, &ctx.document, trajectory, self.ap_labels);
        (ctx.document, profile)
    }

    pub fn features(&self, trajectory: &Trajectory) -> FeatureVector {
        let (doc, profile) = self.profile(trajectory);
        extract_features(trajectory, &profile, &doc, &self.refs, self.space)
    }
}

pub fn write_feature_matrix<W: Write>(out: W, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = feature_names();
    header.push("label".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
        rec.push(r.label.map_or("?", IntentLabel::code).to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<feature matrix>", e))
}

pub fn read_feature_matrix<R: Read>(input: R) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut expected = feature_names();
    expected.push("label".into());
    let found = rdr.headers()?.clone();
    if found.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::HeaderMismatch {
            file: "feature matrix".into(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let values = row
            .iter()
            .take(FEATURE_COUNT)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidInput(format!("feature matrix line {line}: {e}")))?;
        let label = match &row[FEATURE_COUNT] {
            "?" => None,
            code => Some(IntentLabel::from_code(code).ok_or_else(|| {
                Error::InvalidInput(format!("feature matrix line {line}: bad label `{code}`"))
            })?),
        };
        out.push(FeatureVector { values, label });
    }
    Ok(out)
}
