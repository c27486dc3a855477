//! Seeded generator of synthetic malls and visitor logs.
//!
//! A floorplan is laid out floor by floor with themed zones, shops are
//! scattered around APs, and visits are walks over the AP adjacency graph.
//! Intentful visitors lean toward APs of one target category and search
//! for it; intentless visitors wander by popularity and search for
//! unrelated things.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::ingest::{write_association_log, write_query_log};
use crate::knowledge::{
    build_category_corpus, entity_context, expand_category_nodes, extract_entities, query_context, Predicate,
    TripleStore, DEFAULT_EXPANSION_DEPTH, DEFAULT_QUERY_HOPS,
};
use crate::model::{
    trajectory_id, AccessPoint, ApLabels, AssociationRecord, CategoryId, CategoryMap, FloorplanConfig,
    IntentLabel, QueryRecord, RectificationOverride, Shop, OPERATOR_CATEGORIES,
};
use crate::similarity::{fit_tfidf, CategorySpace};
use crate::spatial::label_floorplan;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PersonaKind {
    Intentful(CategoryId),
    Intentless,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub kind: PersonaKind,
    /// Chance that the next stop heads for a target-category AP.
    pub dwell_bias: f64,
    pub query_on_topic_prob: f64,
}

impl Persona {
    pub fn label(&self) -> IntentLabel {
        match self.kind {
            PersonaKind::Intentful(_) => IntentLabel::Intentful,
            PersonaKind::Intentless => IntentLabel::Intentless,
        }
    }

    pub fn target(&self) -> Option<CategoryId> {
        match self.kind {
            PersonaKind::Intentful(c) => Some(c),
            PersonaKind::Intentless => None,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonaMix {
    pub intentful: f64,
    pub intentless: f64,
}

impl PersonaMix {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.intentful) || !ok(self.intentless) || (self.intentful + self.intentless - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "persona mix must be non-negative and sum to 1, got {} + {}",
                self.intentful, self.intentless
            )));
        }
        Ok(())
    }

    /// Integer persona counts for `n` visits by largest remainder
    /// (intentful wins a tie).
    pub fn allocate(&self, n: usize) -> (usize, usize) {
        let exact = [self.intentful * n as f64, self.intentless * n as f64];
        let mut counts = [exact[0].floor() as usize, exact[1].floor() as usize];
        let mut left = n.saturating_sub(counts[0] + counts[1]);
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        (counts[0], counts[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub n_aps: usize,
    pub n_floors: u32,
    pub n_shops: usize,
    pub n_entry_exit: usize,
    pub n_overrides: usize,
    /// Chance a shop's category follows its zone theme.
    pub theme_purity: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            n_aps: 70,
            n_floors: 6,
            n_shops: 257,
            n_entry_exit: 4,
            n_overrides: 3,
            theme_purity: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_visits: usize,
    pub mix: PersonaMix,
    pub intentful: PersonaParams,
    pub intentless: PersonaParams,
    /// Share of visits that start and end at an entrance.
    pub complete_fraction: f64,
    pub zipf_exponent: f64,
    /// Target share of associations shorter than the dwell threshold.
    pub short_association_rate: f64,
    /// Median stop dwell, seconds, for ordinary and for target stops.
    pub stop_dwell_s: f64,
    pub target_dwell_s: f64,
    pub dwell_sigma: f64,
    pub layout: LayoutConfig,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonaParams {
    pub dwell_bias: f64,
    pub query_on_topic_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_visits: 176,
            mix: PersonaMix {
                intentful: 48.0 / 176.0,
                intentless: 128.0 / 176.0,
            },
            intentful: PersonaParams {
                dwell_bias: 0.8,
                query_on_topic_prob: 0.85,
            },
            intentless: PersonaParams {
                dwell_bias: 0.0,
                query_on_topic_prob: 0.05,
            },
            complete_fraction: 1.0,
            zipf_exponent: 1.0,
            short_association_rate: 0.3,
            stop_dwell_s: 1000.0,
            target_dwell_s: 1300.0,
            dwell_sigma: 0.4,
            layout: LayoutConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.mix.validate()?;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0,1], got {v}")))
            }
        };
        unit("intentful dwell_bias", self.intentful.dwell_bias)?;
        unit("intentful query_on_topic_prob", self.intentful.query_on_topic_prob)?;
        unit("intentless dwell_bias", self.intentless.dwell_bias)?;
        unit("intentless query_on_topic_prob", self.intentless.query_on_topic_prob)?;
        unit("complete_fraction", self.complete_fraction)?;
        if self.mix.intentful > 0.0 && self.intentful.dwell_bias <= 0.5 {
            return Err(Error::Config("intentful dwell_bias must exceed 0.5".into()));
        }
        if !(0.0..0.9).contains(&self.short_association_rate) {
            return Err(Error::Config("short_association_rate must lie in [0,0.9)".into()));
        }
        let l = &self.layout;
        if l.n_floors == 0 || l.n_aps < 3 * l.n_floors as usize || l.n_entry_exit < 2 {
            return Err(Error::Config("layout needs 3 APs per floor and 2 entrances".into()));
        }
        if self.stop_dwell_s <= 0.0 || self.target_dwell_s <= 0.0 || self.dwell_sigma < 0.0 {
            return Err(Error::Config("dwell parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth for one generated visit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitTruth {
    pub trajectory_id: String,
    pub label: IntentLabel,
    pub target: Option<CategoryId>,
    pub complete: bool,
}

/// Everything a generator run emits.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub floorplan: FloorplanConfig,
    pub category_map: CategoryMap,
    pub kg_tsv: String,
    pub stores: Vec<String>,
    pub crowd: Vec<String>,
    pub associations: Vec<AssociationRecord>,
    pub queries: Vec<QueryRecord>,
    pub visits: Vec<VisitTruth>,
}

pub const FLOORPLAN_FILE: &str = "floorplan.json";
pub const CATEGORY_MAP_FILE: &str = "category_map.json";
pub const KG_FILE: &str = "kg.tsv";
pub const STORES_FILE: &str = "stores.txt";
pub const CROWD_FILE: &str = "crowd.txt";
pub const AL_FILE: &str = "al.csv";
pub const QL_FILE: &str = "ql.csv";
pub const LABELS_FILE: &str = "labels.csv";

impl SynthData {
    pub fn labels_csv(&self) -> String {
        let mut s = String::from("trajectory_id,label\n");
        for v in &self.visits {
            s.push_str(&format!("{},{}\n", v.trajectory_id, v.label));
        }
        s
    }

    pub fn stores_text(&self) -> String {
        lines(&self.stores)
    }

    pub fn crowd_text(&self) -> String {
        lines(&self.crowd)
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: &str| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        put(FLOORPLAN_FILE, &self.floorplan.to_json())?;
        put(CATEGORY_MAP_FILE, &self.category_map.to_json())?;
        put(KG_FILE, &self.kg_tsv)?;
        put(STORES_FILE, &self.stores_text())?;
        put(CROWD_FILE, &self.crowd_text())?;
        let mut al = Vec::new();
        write_association_log(&mut al, &self.associations)?;
        put(AL_FILE, &String::from_utf8(al).expect("csv is utf-8"))?;
        let mut ql = Vec::new();
        write_query_log(&mut ql, &self.queries)?;
        put(QL_FILE, &String::from_utf8(ql).expect("csv is utf-8"))?;
        put(LABELS_FILE, &self.labels_csv())
    }
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

/// Reads a `trajectory_id,label` file.
pub fn read_labels(text: &str) -> Result<BTreeMap<String, IntentLabel>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let (Some(id), Some(code)) = (row.get(0), row.get(1)) else {
            return Err(Error::InvalidInput("labels row needs two fields".into()));
        };
        let label = IntentLabel::from_code(code)
            .ok_or_else(|| Error::InvalidInput(format!("unknown label `{code}` for {id}")))?;
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

const AP_SPACING: f64 = 25.0;

/// Lays out APs, shops, entrances and a few manual corrections.
pub fn generate_floorplan(layout: &LayoutConfig, categories: &CategoryMap, rng: &mut ChaCha8Rng) -> Result<FloorplanConfig> {
    let floors = layout.n_floors as usize;
    let mut aps = Vec::with_capacity(layout.n_aps);
    let mut per_floor: Vec<Vec<usize>> = vec![Vec::new(); floors];
    for (f, members) in per_floor.iter_mut().enumerate() {
        let count = layout.n_aps / floors + usize::from(f < layout.n_aps % floors);
        let cols = (count as f64).sqrt().ceil() as usize + 1;
        for i in 0..count {
            let (c, r) = (i % cols, i / cols);
            members.push(aps.len());
            aps.push(AccessPoint {
                id: format!("wap{:03}", aps.len() + 1),
                x: round1(c as f64 * AP_SPACING + rng.random_range(-4.0..4.0)),
                y: round1(r as f64 * AP_SPACING + rng.random_range(-4.0..4.0)),
                floor: f as u32,
            });
        }
    }

    // zones: each floor's APs, ordered by x, are cut into contiguous runs,
    // one semantic theme per run
    let mut themes: Vec<CategoryId> = CategoryId::all().collect();
    themes.shuffle(rng);
    let zones_per_floor = themes.len().div_ceil(floors);
    let mut theme_of = vec![themes[0]; aps.len()];
    for (f, members) in per_floor.iter().enumerate() {
        let mut sorted = members.clone();
        sorted.sort_by(|&a, &b| aps[a].x.total_cmp(&aps[b].x).then(aps[a].y.total_cmp(&aps[b].y)));
        for (rank, &a) in sorted.iter().enumerate() {
            let zone = rank * zones_per_floor / sorted.len();
            theme_of[a] = themes[(f * zones_per_floor + zone) % themes.len()];
        }
    }

    let mut operator_of: BTreeMap<CategoryId, Vec<&str>> = BTreeMap::new();
    for c in OPERATOR_CATEGORIES {
        operator_of.entry(categories.semantic_of(c)?).or_default().push(c);
    }
    let mut shops = Vec::with_capacity(layout.n_shops);
    for i in 0..layout.n_shops {
        // every AP gets one shop before any gets a second
        let a = if i < aps.len() { i } else { rng.random_range(0..aps.len()) };
        let semantic = if rng.random_bool(layout.theme_purity) {
            theme_of[a]
        } else {
            *themes.choose(rng).expect("18 themes")
        };
        let category = operator_of
            .get(&semantic)
            .and_then(|cs| cs.choose(rng))
            .ok_or_else(|| Error::Config(format!("no operator category maps to {semantic}")))?;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = rng.random_range(2.0..AP_SPACING * 0.4);
        shops.push(Shop {
            id: format!("shop{:03}", i + 1),
            name: String::new(),
            category: category.to_string(),
            x: round1(aps[a].x + radius * angle.cos()),
            y: round1(aps[a].y + radius * angle.sin()),
            floor: aps[a].floor,
        });
    }

    let mut ground: Vec<&AccessPoint> = aps.iter().filter(|a| a.floor == 0).collect();
    ground.shuffle(rng);
    let mut entry_exit_aps: Vec<String> = ground
        .iter()
        .take(layout.n_entry_exit)
        .map(|a| a.id.clone())
        .collect();
    entry_exit_aps.sort();

    // a few shops straddle a cell boundary and are pinned to their
    // second-nearest AP on the same floor
    let mut picks: Vec<usize> = (0..shops.len()).collect();
    picks.shuffle(rng);
    let mut rectification_overrides = Vec::new();
    for &s in picks.iter().take(layout.n_overrides) {
        let shop = &shops[s];
        let mut near: Vec<&AccessPoint> = aps.iter().filter(|a| a.floor == shop.floor).collect();
        near.sort_by(|a, b| {
            let da = (a.x - shop.x).powi(2) + (a.y - shop.y).powi(2);
            let db = (b.x - shop.x).powi(2) + (b.y - shop.y).powi(2);
            da.total_cmp(&db).then(a.id.cmp(&b.id))
        });
        if let Some(ap) = near.get(1) {
            rectification_overrides.push(RectificationOverride {
                shop_id: shop.id.clone(),
                ap_id: ap.id.clone(),
            });
        }
    }
    rectification_overrides.sort_by(|a, b| a.shop_id.cmp(&b.shop_id));

    Ok(FloorplanConfig {
        aps,
        shops,
        entry_exit_aps,
        rectification_overrides,
    })
}

/// AP adjacency: Gabriel graph within each floor plus two escalator links
/// between consecutive floors.
pub fn adjacency(aps: &[AccessPoint]) -> Vec<Vec<usize>> {
    let n = aps.len();
    let d2 = |a: usize, b: usize| (aps[a].x - aps[b].x).powi(2) + (aps[a].y - aps[b].y).powi(2);
    let mut adj = vec![BTreeSet::new(); n];
    for u in 0..n {
        for v in u + 1..n {
            if aps[u].floor != aps[v].floor {
                continue;
            }
            let duv = d2(u, v);
            let blocked = (0..n).any(|w| w != u && w != v && aps[w].floor == aps[u].floor && d2(u, w) + d2(w, v) < duv);
            if !blocked {
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
    }
    let floors: BTreeSet<u32> = aps.iter().map(|a| a.floor).collect();
    let floors: Vec<u32> = floors.into_iter().collect();
    for pair in floors.windows(2) {
        let mut links: Vec<(f64, usize, usize)> = Vec::new();
        for u in (0..n).filter(|&u| aps[u].floor == pair[0]) {
            for v in (0..n).filter(|&v| aps[v].floor == pair[1]) {
                links.push((d2(u, v), u, v));
            }
        }
        links.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut used = BTreeSet::new();
        for (_, u, v) in links {
            if used.len() == 2 {
                break;
            }
            if used.iter().any(|&(a, b)| a == u || b == v) {
                continue;
            }
            used.insert((u, v));
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Hop distances and first steps of shortest paths between all AP pairs.
struct Routes {
    dist: Vec<Vec<usize>>,
    next: Vec<Vec<usize>>,
}

impl Routes {
    fn new(adj: &[Vec<usize>]) -> Self {
        let n = adj.len();
        let mut dist = vec![vec![usize::MAX; n]; n];
        let mut next = vec![vec![usize::MAX; n]; n];
        for t in 0..n {
            // BFS from the destination gives every node its step toward it
            dist[t][t] = 0;
            let mut queue = VecDeque::from([t]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if dist[v][t] == usize::MAX {
                        dist[v][t] = dist[u][t] + 1;
                        next[v][t] = u;
                        queue.push_back(v);
                    }
                }
            }
        }
        Routes { dist, next }
    }

    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut at = from;
        while at != to && self.next[at][to] != usize::MAX {
            at = self.next[at][to];
            if at != to {
                out.push(at);
            }
        }
        out
    }
}

/// Query phrases grouped by the category they point at.
pub struct QueryVocabulary {
    pub on_topic: BTreeMap<CategoryId, Vec<String>>,
    pub brands: BTreeMap<CategoryId, Vec<String>>,
    pub keywords: BTreeMap<CategoryId, Vec<String>>,
    pub off_topic: Vec<String>,
}

const SUFFIXES: [&str; 6] = ["", "sale", "review", "price", "near me", "opening hours"];

const OFF_TOPIC: [&str; 16] = [
    "sydney opera house tickets",
    "harbour bridge climb",
    "bondi beach weather",
    "taronga zoo hours",
    "qantas flight status",
    "circular quay ferry timetable",
    "weather tomorrow",
    "train timetable central",
    "currency converter",
    "translate hello",
    "uber",
    "news today",
    "footy scores",
    "lotto results",
    "public holidays",
    "parking rates",
];

fn argmax(v: &[f64]) -> Option<usize> {
    let (i, best) = v
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
    (best > 0.0).then_some(i)
}

impl QueryVocabulary {
    /// Every node label that links back to exactly that node and whose
    /// context scores highest on one category.
    pub fn build(store: &TripleStore, categories: &CategoryMap, space: &CategorySpace) -> Self {
        let mut candidates: BTreeSet<&str> = store.resources().collect();
        for root in categories.semantic_roots.values() {
            candidates.extend(expand_category_nodes(store, root, DEFAULT_EXPANSION_DEPTH));
        }
        let mut on_topic: BTreeMap<CategoryId, Vec<String>> = BTreeMap::new();
        let mut brands: BTreeMap<CategoryId, Vec<String>> = BTreeMap::new();
        let mut keywords: BTreeMap<CategoryId, Vec<String>> = BTreeMap::new();
        for node in candidates {
            let cos = space.cosines(&entity_context(store, node, DEFAULT_QUERY_HOPS));
            let Some(c) = argmax(&cos).and_then(CategoryId::new) else {
                continue;
            };
            let is_resource = !store.subject_categories(node).is_empty();
            let raw_labels: Vec<String> = store
                .triples_with_subject(node)
                .filter(|t| t.predicate == Predicate::Label)
                .map(|t| t.object.clone())
                .collect();
            let labels = if raw_labels.is_empty() { store.labels_of(node) } else { raw_labels };
            for label in labels {
                if extract_entities(store, &label) != [node] {
                    continue;
                }
                on_topic.entry(c).or_default().push(label.clone());
                if is_resource {
                    brands.entry(c).or_default().push(label);
                } else {
                    keywords.entry(c).or_default().push(label);
                }
            }
        }
        let off_topic = OFF_TOPIC
            .iter()
            .filter(|q| space.cosines(&query_context(store, &[**q], DEFAULT_QUERY_HOPS).document).iter().all(|&x| x == 0.0))
            .map(|q| q.to_string())
            .collect();
        QueryVocabulary {
            on_topic,
            brands,
            keywords,
            off_topic,
        }
    }

    fn on_topic_query(&self, store: &TripleStore, c: CategoryId, rng: &mut ChaCha8Rng) -> Option<String> {
        let base = self.on_topic.get(&c)?.choose(rng)?;
        let suffix = SUFFIXES.choose(rng).copied().unwrap_or("");
        let with = format!("{base} {suffix}");
        // a suffix that happens to name something else is dropped
        if !suffix.is_empty() && extract_entities(store, &with) == extract_entities(store, base) {
            Some(with)
        } else {
            Some(base.clone())
        }
    }

    fn off_topic_query(&self, rng: &mut ChaCha8Rng) -> String {
        self.off_topic.choose(rng).cloned().unwrap_or_else(|| "weather tomorrow".to_string())
    }
}

/// The generator's fixed inputs: layout, labels, graph and vocabulary.
pub struct World {
    pub floorplan: FloorplanConfig,
    pub category_map: CategoryMap,
    pub store: TripleStore,
    pub kg_tsv: String,
    pub ap_labels: ApLabels,
    pub vocab: QueryVocabulary,
    pub stores: Vec<String>,
    pub crowd: Vec<String>,
    adj: Vec<Vec<usize>>,
    routes: Routes,
    popularity: Vec<f64>,
}

impl World {
    /// Builds a world around a given floorplan and graph. Shops without a
    /// name are named after brands of their category.
    pub fn new(
        mut floorplan: FloorplanConfig,
        category_map: CategoryMap,
        kg_tsv: &str,
        zipf_exponent: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let loaded = crate::knowledge::parse_triples(kg_tsv);
        let store = loaded.store;
        let corpus = build_category_corpus(&store, &category_map, DEFAULT_EXPANSION_DEPTH)?;
        let space = fit_tfidf(&corpus)?;
        let vocab = QueryVocabulary::build(&store, &category_map, &space);
        for shop in &mut floorplan.shops {
            if shop.name.is_empty() {
                let c = category_map.semantic_of(&shop.category)?;
                shop.name = vocab
                    .brands
                    .get(&c)
                    .and_then(|b| b.choose(rng))
                    .cloned()
                    .unwrap_or_else(|| shop.category.clone());
            }
        }
        let (_, ap_labels) = label_floorplan(&floorplan, &category_map)?;

        let stores: BTreeSet<String> = floorplan.shops.iter().map(|s| s.name.clone()).collect();
        let mut crowd = Vec::new();
        for words in vocab.keywords.values() {
            let mut w = words.clone();
            w.shuffle(rng);
            crowd.extend(w.into_iter().take(3));
        }

        let adj = adjacency(&floorplan.aps);
        let routes = Routes::new(&adj);
        let mut rank: Vec<usize> = (0..floorplan.aps.len()).collect();
        rank.shuffle(rng);
        let mut popularity = vec![0.0; rank.len()];
        for (r, &a) in rank.iter().enumerate() {
            popularity[a] = 1.0 / ((r + 1) as f64).powf(zipf_exponent);
        }
        Ok(World {
            floorplan,
            category_map,
            store,
            kg_tsv: kg_tsv.to_string(),
            ap_labels,
            vocab,
            stores: stores.into_iter().collect(),
            crowd,
            adj,
            routes,
            popularity,
        })
    }

    pub fn neighbours(&self, ap: usize) -> &[usize] {
        &self.adj[ap]
    }

    /// Zipf weight of each AP, in floorplan order.
    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }
}

struct Stop {
    ap: usize,
    dwell_s: u64,
}

fn clipped_dwell(median: f64, sigma: f64, rng: &mut ChaCha8Rng) -> u64 {
    let d = LogNormal::new(median.ln(), sigma).expect("valid lognormal");
    (d.sample(rng) as u64).clamp(660, 5400)
}

fn pick_weighted(cands: &[(usize, f64)], rng: &mut ChaCha8Rng) -> Option<usize> {
    let w = WeightedIndex::new(cands.iter().map(|c| c.1)).ok()?;
    Some(cands[w.sample(rng)].0)
}

fn plan_stops(world: &World, config: &SynthConfig, persona: &Persona, complete: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = world.floorplan.aps.len();
    let entries: Vec<usize> = (0..n)
        .filter(|&i| world.floorplan.entry_exit_aps.contains(&world.floorplan.aps[i].id))
        .collect();
    let is_entry = |i: usize| entries.contains(&i);
    let targets: Vec<usize> = match persona.target() {
        Some(c) => (0..n)
            .filter(|&i| world.ap_labels[&world.floorplan.aps[i].id].contains(&c))
            .collect(),
        None => Vec::new(),
    };
    let (count, start) = if complete {
        (rng.random_range(3..=7), *entries.choose(rng).expect("entrances exist"))
    } else {
        let all: Vec<(usize, f64)> = (0..n).map(|i| (i, world.popularity[i])).collect();
        (rng.random_range(2..=7), pick_weighted(&all, rng).expect("APs exist"))
    };
    let middle = if complete { count - 2 } else { count - 1 };
    let mut stops = vec![start];
    for _ in 0..middle {
        let cur = *stops.last().expect("non-empty");
        let free = |i: usize| !stops.contains(&i) && !(complete && is_entry(i));
        let toward_target = persona.target().is_some() && rng.random_bool(config.intentful.dwell_bias.min(persona.dwell_bias));
        let pool: Vec<(usize, f64)> = if toward_target {
            targets
                .iter()
                .filter(|&&i| free(i))
                .map(|&i| (i, (-(world.routes.dist[cur][i] as f64) / 1.5).exp()))
                .collect()
        } else {
            Vec::new()
        };
        let pool = if pool.is_empty() {
            (0..n)
                .filter(|&i| free(i) && world.routes.dist[cur][i] != usize::MAX)
                .map(|i| (i, world.popularity[i] * (-(world.routes.dist[cur][i] as f64) / 1.5).exp()))
                .collect()
        } else {
            pool
        };
        match pick_weighted(&pool, rng) {
            Some(next) => stops.push(next),
            None => break,
        }
    }
    if complete {
        let exits: Vec<usize> = entries.iter().copied().filter(|e| !stops.contains(e)).collect();
        stops.push(*exits.choose(rng).expect("a second entrance"));
    }
    stops
}

fn device_id(rng: &mut ChaCha8Rng) -> String {
    format!("{:012x}", rng.random::<u64>() & 0xffff_ffff_ffff)
}

/// Runs one visit: associations for stops and brief pass-bys, plus queries.
#[allow(clippy::too_many_arguments)]
fn simulate_visit(
    world: &World,
    config: &SynthConfig,
    persona: &Persona,
    complete: bool,
    device: &str,
    day_start: DateTime<Utc>,
    rng: &mut ChaCha8Rng,
    associations: &mut Vec<AssociationRecord>,
    queries: &mut Vec<QueryRecord>,
) -> String {
    let aps = &world.floorplan.aps;
    let plan = plan_stops(world, config, persona, complete, rng);
    let target_aps: BTreeSet<usize> = match persona.target() {
        Some(c) => (0..aps.len()).filter(|&i| world.ap_labels[&aps[i].id].contains(&c)).collect(),
        None => BTreeSet::new(),
    };
    let stops: Vec<Stop> = plan
        .iter()
        .map(|&ap| {
            let median = if target_aps.contains(&ap) { config.target_dwell_s } else { config.stop_dwell_s };
            Stop {
                ap,
                dwell_s: clipped_dwell(median, config.dwell_sigma, rng),
            }
        })
        .collect();

    let blip_p = (config.short_association_rate / (1.0 - config.short_association_rate)).min(1.0);
    let entry: BTreeSet<&str> = world.floorplan.entry_exit_aps.iter().map(String::as_str).collect();
    let mut used: BTreeSet<usize> = plan.iter().copied().collect();
    let start = day_start + Duration::seconds(rng.random_range(9 * 3600..18 * 3600));
    let mut t = start;
    let mut windows = Vec::with_capacity(stops.len());
    let mut push = |ap: usize, at: DateTime<Utc>, dur: u64, rng: &mut ChaCha8Rng| {
        let down = dur * rng.random_range(200..5000);
        associations.push(AssociationRecord {
            device_id: device.to_string(),
            ap_id: aps[ap].id.clone(),
            start: at,
            duration_s: dur,
            bytes_down: down,
            bytes_up: down / rng.random_range(5..20),
        });
    };
    for (i, stop) in stops.iter().enumerate() {
        push(stop.ap, t, stop.dwell_s, rng);
        windows.push((t, stop.dwell_s));
        t += Duration::seconds(stop.dwell_s as i64 + rng.random_range(5..90));
        if !rng.random_bool(blip_p) {
            continue;
        }
        // a brief association on the way to the next stop, or nearby
        let towards = stops.get(i + 1).map(|n| world.routes.path(stop.ap, n.ap)).unwrap_or_default();
        let near = world.neighbours(stop.ap).to_vec();
        let pass = towards
            .into_iter()
            .chain(near)
            .find(|&a| !used.contains(&a) && !entry.contains(aps[a].id.as_str()));
        if let Some(a) = pass {
            used.insert(a);
            let dur = rng.random_range(60..=570);
            push(a, t, dur, rng);
            t += Duration::seconds(dur as i64 + rng.random_range(5..60));
        }
    }

    // queries: one to three, at stops; the first at a stop with a successor
    // when there is one
    let n_queries = rng.random_range(1..=3usize).min(stops.len());
    let first_at = rng.random_range(0..stops.len().saturating_sub(1).max(1));
    let mut at_stops: Vec<usize> = vec![first_at];
    while at_stops.len() < n_queries {
        at_stops.push(rng.random_range(first_at..stops.len()));
    }
    at_stops.sort_unstable();
    let mut last_at = start;
    for (qi, &s) in at_stops.iter().enumerate() {
        let (ws, dwell) = windows[s];
        // strictly after the previous query, inside the stop's association
        let lo = ((last_at - ws).num_seconds() + 1).max(1);
        let hi = dwell as i64 - 1;
        let offset = if lo <= hi { rng.random_range(lo..=hi) } else { hi };
        let at = ws + Duration::seconds(offset);
        last_at = at;
        let text = match persona.target() {
            Some(c) if qi == 0 || rng.random_bool(persona.query_on_topic_prob) => {
                world.vocab.on_topic_query(&world.store, c, rng)
            }
            _ if persona.target().is_none() && rng.random_bool(persona.query_on_topic_prob) => {
                let c = CategoryId::new(rng.random_range(0..crate::model::CATEGORY_COUNT)).expect("in range");
                world.vocab.on_topic_query(&world.store, c, rng)
            }
            _ => None,
        }
        .unwrap_or_else(|| world.vocab.off_topic_query(rng));
        queries.push(QueryRecord {
            device_id: device.to_string(),
            ap_id: aps[stops[s].ap].id.clone(),
            at,
            text,
        });
    }
    trajectory_id(device, start)
}

/// Generates visits over an existing world.
pub fn generate_visits(world: &World, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<SynthData> {
    config.validate()?;
    let (n_if, n_il) = config.mix.allocate(config.n_visits);
    let targets: Vec<CategoryId> = CategoryId::all()
        .filter(|c| world.ap_labels.values().any(|l| l.contains(c)) && world.vocab.on_topic.contains_key(c))
        .collect();
    if n_if > 0 && targets.is_empty() {
        return Err(Error::Config("no category is both placed and searchable".into()));
    }
    let mut personas: Vec<Persona> = Vec::with_capacity(config.n_visits);
    for _ in 0..n_if {
        personas.push(Persona {
            kind: PersonaKind::Intentful(*targets.choose(rng).expect("non-empty")),
            dwell_bias: config.intentful.dwell_bias,
            query_on_topic_prob: config.intentful.query_on_topic_prob,
        });
    }
    for _ in 0..n_il {
        personas.push(Persona {
            kind: PersonaKind::Intentless,
            dwell_bias: config.intentless.dwell_bias,
            query_on_topic_prob: config.intentless.query_on_topic_prob,
        });
    }
    personas.shuffle(rng);

    // a device pool with some returning visitors; every visit gets its own
    // day, so visits never overlap
    let pool: Vec<String> = (0..(config.n_visits * 3).div_ceil(4).max(1)).map(|_| device_id(rng)).collect();
    let epoch = Utc.with_ymd_and_hms(2013, 3, 1, 0, 0, 0).single().expect("valid date");
    let mut associations = Vec::new();
    let mut queries = Vec::new();
    let mut visits = Vec::with_capacity(personas.len());
    for (day, persona) in personas.iter().enumerate() {
        let device = pool.choose(rng).expect("non-empty pool").clone();
        let complete = rng.random_bool(config.complete_fraction);
        let id = simulate_visit(
            world,
            config,
            persona,
            complete,
            &device,
            epoch + Duration::days(day as i64),
            rng,
            &mut associations,
            &mut queries,
        );
        visits.push(VisitTruth {
            trajectory_id: id,
            label: persona.label(),
            target: persona.target(),
            complete,
        });
    }
    associations.sort_by(|a, b| (&a.device_id, a.start).cmp(&(&b.device_id, b.start)));
    queries.sort_by(|a, b| (&a.device_id, a.at).cmp(&(&b.device_id, b.at)));
    Ok(SynthData {
        floorplan: world.floorplan.clone(),
        category_map: world.category_map.clone(),
        kg_tsv: world.kg_tsv.clone(),
        stores: world.stores.clone(),
        crowd: world.crowd.clone(),
        associations,
        queries,
        visits,
    })
}

/// Builds the world from the bundled graph and category map, then
/// generates visits. Everything derives from `config.seed`.
pub fn build_world(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<World> {
    config.validate()?;
    let categories = fixtures::default_category_map();
    let floorplan = generate_floorplan(&config.layout, &categories, rng)?;
    World::new(floorplan, categories, fixtures::MINI_KG_TSV, config.zipf_exponent, rng)
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let world = build_world(config, &mut rng)?;
    generate_visits(&world, config, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder() {
        let mix = PersonaMix {
            intentful: 48.0 / 176.0,
            intentless: 128.0 / 176.0,
        };
        assert_eq!(mix.allocate(176), (48, 128));
        let half = PersonaMix {
            intentful: 0.5,
            intentless: 0.5,
        };
        assert_eq!(half.allocate(3), (2, 1));
    }

    #[test]
    fn bad_mix() {
        let mix = PersonaMix {
            intentful: 0.5,
            intentless: 0.6,
        };
        assert!(mix.validate().is_err());
    }

    #[test]
    fn adjacency_connects_everything() {
        let config = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fp = generate_floorplan(&config.layout, &fixtures::default_category_map(), &mut rng).unwrap();
        let routes = Routes::new(&adjacency(&fp.aps));
        assert!(routes.dist.iter().all(|row| row.iter().all(|&d| d != usize::MAX)));
        assert_eq!(fp.aps.len(), 70);
        assert_eq!(fp.shops.len(), 257);
    }

    #[test]
    fn off_topic_phrases_survive() {
        let config = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let world = build_world(&config, &mut rng).unwrap();
        assert!(world.vocab.off_topic.len() >= 10, "{:?}", world.vocab.off_topic);
        assert_eq!(world.vocab.on_topic.len(), 18);
    }
}
