//! Shared domain types: access points, shops, log records, trajectories and
//! the fixed registry of semantic categories.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of semantic categories that span the similarity space.
pub const CATEGORY_COUNT: usize = 18;

/// Semantic category names, in registry order.
pub const SEMANTIC_CATEGORY_NAMES: [&str; CATEGORY_COUNT] = [
    "Bags",
    "Bakeries",
    "Clothing",
    "Coffee",
    "Consumer Electronics",
    "Cosmetics",
    "Decor",
    "Fashion",
    "Fashion Accessories",
    "Food Retail",
    "Footwear",
    "Home Appliances",
    "Jewellery",
    "Mobile Phones",
    "Restaurants",
    "Retail",
    "Sports",
    "Watches",
];

/// Shop categories defined by the mall operator.
pub const OPERATOR_CATEGORIES: [&str; 29] = [
    "Bakeries",
    "Cafe",
    "Cosmetics",
    "Costume Jewellery",
    "Delicatessen",
    "Discount Cosmetics",
    "Fashion Accessories",
    "Fine Jewellery",
    "General Footwear",
    "Gifts/Souvenirs",
    "Groceries",
    "Gymnasiums",
    "Hair & Beauty",
    "Home Decor",
    "Men's Fashion",
    "Mobile Phones & Accessories",
    "Music/Videos/DVDs",
    "Newsagent/Stationery",
    "Pad Sites",
    "Repairs & Maintenance",
    "Restaurant",
    "Small/Major Appliances",
    "Sport",
    "Takeaway",
    "Travel",
    "Unisex Fashion",
    "Watches",
    "Women's Fashion",
    "Women's Footwear",
];

/// One of the 18 registered semantic categories (0-based internally).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryId(u8);

impl CategoryId {
    pub fn new(index: usize) -> Option<Self> {
        (index < CATEGORY_COUNT).then_some(CategoryId(index as u8))
    }

    /// 1-based position, as used by the feature names (F22 = CS of category 1).
    pub fn from_number(number: usize) -> Option<Self> {
        number.checked_sub(1).and_then(Self::new)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        SEMANTIC_CATEGORY_NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name.trim()))
            .map(|i| CategoryId(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn number(self) -> usize {
        self.0 as usize + 1
    }

    pub fn name(self) -> &'static str {
        SEMANTIC_CATEGORY_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = CategoryId> {
        (0..CATEGORY_COUNT).map(|i| CategoryId(i as u8))
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for CategoryId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for CategoryId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        CategoryId::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown semantic category `{name}`")))
    }
}

/// Dense per-category values (cosines, dwell fractions, CS scores).
pub type CategoryVector = [f64; CATEGORY_COUNT];

/// Physical context P_a: the semantic categories of each AP's cell.
pub type ApLabels = BTreeMap<String, BTreeSet<CategoryId>>;

/// 0/1 indicator of a label set.
pub fn label_indicator(labels: &BTreeSet<CategoryId>) -> CategoryVector {
    let mut v = [0.0; CATEGORY_COUNT];
    for c in labels {
        v[c.index()] = 1.0;
    }
    v
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntentLabel {
    Intentful,
    Intentless,
}

impl IntentLabel {
    pub fn code(self) -> &'static str {
        match self {
            IntentLabel::Intentful => "IF",
            IntentLabel::Intentless => "IL",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "IF" => Some(IntentLabel::Intentful),
            "IL" => Some(IntentLabel::Intentless),
            _ => None,
        }
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for IntentLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for IntentLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = String::deserialize(d)?;
        IntentLabel::from_code(&code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown intent label `{code}`")))
    }
}

/// UTC timestamps at second resolution, written as `YYYY-MM-DDTHH:MM:SSZ`.
pub mod timestamp {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse(s: &str) -> Option<DateTime<Utc>> {
        let ts = DateTime::parse_from_rfc3339(s.trim()).ok()?;
        DateTime::from_timestamp(ts.timestamp(), 0)
    }

    pub fn serialize<S: Serializer>(
        ts: &DateTime<Utc>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{raw}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub floor: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shop {
    pub id: String,
    pub name: String,
    /// Operator-defined category.
    pub category: String,
    pub x: f64,
    pub y: f64,
    pub floor: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectificationOverride {
    pub shop_id: String,
    pub ap_id: String,
}

/// Deployment description: AP positions, shop frontages, entry/exit APs and
/// manual cell corrections.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FloorplanConfig {
    pub aps: Vec<AccessPoint>,
    pub shops: Vec<Shop>,
    pub entry_exit_aps: Vec<String>,
    #[serde(default)]
    pub rectification_overrides: Vec<RectificationOverride>,
}

impl FloorplanConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Canonical form: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("floorplan serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn ap_ids(&self) -> BTreeSet<String> {
        self.aps.iter().map(|a| a.id.clone()).collect()
    }

    pub fn entry_exit_set(&self) -> BTreeSet<String> {
        self.entry_exit_aps.iter().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateApId { ap_id: String },
    DuplicateShopId { shop_id: String },
    ShopOnMissingFloor { shop_id: String, floor: u32 },
    UnknownMallCategory { shop_id: String, category: String },
    EmptyEntryExitSet,
    UnknownEntryExitAp { ap_id: String },
    OverrideUnknownShop { shop_id: String },
    OverrideUnknownAp { ap_id: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a floorplan against the operator category list. Every violation is
/// collected; nothing here fails.
pub fn validate_deployment(floorplan: &FloorplanConfig) -> ValidationReport {
    validate_deployment_with(floorplan, &OPERATOR_CATEGORIES)
}

pub fn validate_deployment_with(
    floorplan: &FloorplanConfig,
    operator_categories: &[&str],
) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen = HashSet::new();
    for ap in &floorplan.aps {
        if !seen.insert(ap.id.as_str()) {
            violations.push(Violation::DuplicateApId {
                ap_id: ap.id.clone(),
            });
        }
    }
    let floors: BTreeSet<u32> = floorplan.aps.iter().map(|a| a.floor).collect();

    let mut shop_ids = HashSet::new();
    for shop in &floorplan.shops {
        if !shop_ids.insert(shop.id.as_str()) {
            violations.push(Violation::DuplicateShopId {
                shop_id: shop.id.clone(),
            });
        }
        if !floors.contains(&shop.floor) {
            violations.push(Violation::ShopOnMissingFloor {
                shop_id: shop.id.clone(),
                floor: shop.floor,
            });
        }
        if !operator_categories.contains(&shop.category.as_str()) {
            violations.push(Violation::UnknownMallCategory {
                shop_id: shop.id.clone(),
                category: shop.category.clone(),
            });
        }
    }

    if floorplan.entry_exit_aps.is_empty() {
        violations.push(Violation::EmptyEntryExitSet);
    }
    for id in &floorplan.entry_exit_aps {
        if !seen.contains(id.as_str()) {
            violations.push(Violation::UnknownEntryExitAp { ap_id: id.clone() });
        }
    }
    for o in &floorplan.rectification_overrides {
        if !shop_ids.contains(o.shop_id.as_str()) {
            violations.push(Violation::OverrideUnknownShop {
                shop_id: o.shop_id.clone(),
            });
        }
        if !seen.contains(o.ap_id.as_str()) {
            violations.push(Violation::OverrideUnknownAp {
                ap_id: o.ap_id.clone(),
            });
        }
    }

    ValidationReport { violations }
}

/// One row of the association log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub device_id: String,
    pub ap_id: String,
    #[serde(with = "timestamp")]
    pub start: DateTime<Utc>,
    pub duration_s: u64,
    pub bytes_down: u64,
    pub bytes_up: u64,
}

impl AssociationRecord {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + chrono::Duration::seconds(self.duration_s as i64)
    }
}

/// One row of the query log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub device_id: String,
    pub ap_id: String,
    #[serde(with = "timestamp")]
    pub at: DateTime<Utc>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub ap_id: String,
    pub dwell_s: u64,
}

/// One visit: APs in order of first association with their aggregated dwell,
/// plus the queries issued during the visit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub device_id: String,
    #[serde(with = "timestamp")]
    pub visit_start: DateTime<Utc>,
    pub hops: Vec<Hop>,
    pub queries: Vec<QueryRecord>,
    pub complete: bool,
}

impl Trajectory {
    /// Builds a trajectory, enforcing non-empty hops, unique APs and the
    /// minimum dwell.
    pub fn new(
        device_id: &str,
        visit_start: DateTime<Utc>,
        hops: Vec<Hop>,
        queries: Vec<QueryRecord>,
        dwell_threshold_s: u64,
    ) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::InvalidInput(format!(
                "trajectory for {device_id} has no hops"
            )));
        }
        let mut seen = HashSet::new();
        for hop in &hops {
            if !seen.insert(hop.ap_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "AP {} appears twice in a trajectory",
                    hop.ap_id
                )));
            }
            if hop.dwell_s < dwell_threshold_s {
                return Err(Error::InvalidInput(format!(
                    "hop at {} dwells {} s, below the {} s threshold",
                    hop.ap_id, hop.dwell_s, dwell_threshold_s
                )));
            }
        }
        Ok(Trajectory {
            id: trajectory_id(device_id, visit_start),
            device_id: device_id.to_string(),
            visit_start,
            hops,
            queries,
            complete: false,
        })
    }

    pub fn total_dwell(&self) -> u64 {
        self.hops.iter().map(|h| h.dwell_s).sum()
    }

    pub fn ap_ids(&self) -> impl Iterator<Item = &str> {
        self.hops.iter().map(|h| h.ap_id.as_str())
    }

    pub fn query_texts(&self) -> Vec<&str> {
        self.queries.iter().map(|q| q.text.as_str()).collect()
    }
}

/// Stable visit identifier shared by ingest output and generator labels.
pub fn trajectory_id(device_id: &str, visit_start: DateTime<Utc>) -> String {
    format!("{device_id}@{}", visit_start.timestamp())
}

/// A row that could not be parsed or resolved, with its 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line_no: usize,
    pub reason: String,
}

/// Operator-category to semantic-category mapping plus the knowledge-graph
/// root of every semantic category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub mall_to_semantic: BTreeMap<String, CategoryId>,
    pub semantic_roots: BTreeMap<CategoryId, String>,
}

impl CategoryMap {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("category map serializes");
        s.push('\n');
        s
    }

    pub fn semantic_of(&self, mall_category: &str) -> Result<CategoryId> {
        self.mall_to_semantic
            .get(mall_category)
            .copied()
            .ok_or_else(|| Error::UnmappedCategory(mall_category.to_string()))
    }

    /// Every operator category mapped and every semantic category rooted.
    pub fn check_complete(&self) -> Result<()> {
        if let Some(missing) = OPERATOR_CATEGORIES
            .iter()
            .find(|c| !self.mall_to_semantic.contains_key(**c))
        {
            return Err(Error::UnmappedCategory(missing.to_string()));
        }
        if let Some(missing) = CategoryId::all().find(|c| !self.semantic_roots.contains_key(c)) {
            return Err(Error::MissingRoot(missing.name().to_string()));
        }
        Ok(())
    }
}
