//! Local knowledge-graph snapshot, depth-limited category expansion and the
//! query categorization pipeline (entity linking + graph exploration).
//!
//! The store holds three kinds of edges:
//! - `subject`: a resource (brand, product, place) belongs to a category,
//! - `broader`: a category's parent category,
//! - `label`: a human-readable name for a node.
//!
//! Category documents are built by walking `broader` edges downward from a
//! root; query contexts walk them upward from the categories of the entities
//! found in the query text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CategoryId, CategoryMap, Reject};

pub const DEFAULT_EXPANSION_DEPTH: usize = 5;
pub const DEFAULT_QUERY_HOPS: usize = 2;

/// Lowercase, drop punctuation, turn underscores into spaces and collapse
/// whitespace. No stemming.
pub fn normalize_term(raw: &str) -> String {
    let mut cleaned = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch == '_' || ch.is_whitespace() {
            cleaned.push(' ');
        } else if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Subject,
    Broader,
    Label,
}

impl Predicate {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "subject" => Some(Predicate::Subject),
            "broader" => Some(Predicate::Broader),
            "label" => Some(Predicate::Label),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Predicate::Subject => "subject",
            Predicate::Broader => "broader",
            Predicate::Label => "label",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: Predicate,
    pub object: String,
}

impl Triple {
    pub fn new(subject: &str, predicate: Predicate, object: &str) -> Self {
        Triple {
            subject: subject.to_string(),
            predicate,
            object: object.to_string(),
        }
    }

    pub fn to_tsv_line(&self) -> String {
        format!("{}\t{}\t{}", self.subject, self.predicate.as_str(), self.object)
    }
}

/// Multiset of normalized terms with deterministic iteration order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TermBag(BTreeMap<String, u32>);

impl TermBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, term: &str) {
        self.add_n(term, 1);
    }

    pub fn add_n(&mut self, term: &str, n: u32) {
        if n > 0 {
            *self.0.entry(term.to_string()).or_insert(0) += n;
        }
    }

    /// Multiset union (counts add).
    pub fn merge(&mut self, other: &TermBag) {
        for (t, n) in &other.0 {
            self.add_n(t, *n);
        }
    }

    pub fn count(&self, term: &str) -> u32 {
        self.0.get(term).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(t, n)| (t.as_str(), *n))
    }

    pub fn distinct(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u64 {
        self.0.values().map(|&n| n as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn terms(&self) -> BTreeSet<&str> {
        self.0.keys().map(String::as_str).collect()
    }
}

impl<S: AsRef<str>> FromIterator<S> for TermBag {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut bag = TermBag::new();
        for t in iter {
            bag.add(t.as_ref());
        }
        bag
    }
}

#[derive(Serialize, Deserialize)]
struct TermCount {
    term: String,
    count: u32,
}

impl Serialize for TermBag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|(t, &n)| TermCount {
            term: t.clone(),
            count: n,
        }))
    }
}

impl<'de> Deserialize<'de> for TermBag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<TermCount>::deserialize(d)?;
        let mut bag = TermBag::new();
        for r in rows {
            bag.add_n(&r.term, r.count);
        }
        Ok(bag)
    }
}

/// Read-only triple store indexed for traversal in both directions.
#[derive(Clone, Debug, Default)]
pub struct TripleStore {
    triples: BTreeSet<Triple>,
    subject_edges: HashMap<String, Vec<String>>,
    broader: HashMap<String, Vec<String>>,
    narrower: HashMap<String, Vec<String>>,
    explicit_labels: HashMap<String, Vec<String>>,
    label_index: HashMap<String, Vec<String>>,
    max_label_tokens: usize,
    nodes: BTreeSet<String>,
}

/// Result of reading a triples file.
#[derive(Debug)]
pub struct LoadedTriples {
    pub store: TripleStore,
    pub rejects: Vec<Reject>,
}

/// Reads a triples TSV file. Malformed lines land in the reject list.
pub fn load_triples(path: &Path) -> Result<LoadedTriples> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_triples(&text))
}

pub fn parse_triples(text: &str) -> LoadedTriples {
    let mut triples = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            rejects.push(Reject {
                line_no,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
            continue;
        }
        let Some(predicate) = Predicate::parse(fields[1]) else {
            rejects.push(Reject {
                line_no,
                reason: format!("unknown predicate `{}`", fields[1].trim()),
            });
            continue;
        };
        let subject = fields[0].trim();
        let object = fields[2].trim();
        if subject.is_empty() || object.is_empty() {
            rejects.push(Reject {
                line_no,
                reason: "empty subject or object".into(),
            });
            continue;
        }
        if predicate != Predicate::Label && object.contains(char::is_whitespace) {
            rejects.push(Reject {
                line_no,
                reason: format!("object of `{}` must be a node id", predicate.as_str()),
            });
            continue;
        }
        if predicate == Predicate::Label && normalize_term(object).is_empty() {
            rejects.push(Reject {
                line_no,
                reason: "label normalizes to an empty string".into(),
            });
            continue;
        }
        triples.push(Triple::new(subject, predicate, object));
    }
    LoadedTriples {
        store: TripleStore::from_triples(triples),
        rejects,
    }
}

/// Label derived from a node id: scheme and `Category:` prefixes dropped.
fn label_from_id(id: &str) -> String {
    let local = id.strip_prefix("kg:").unwrap_or(id);
    let local = local.strip_prefix("Category:").unwrap_or(local);
    normalize_term(local)
}

impl TripleStore {
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut store = TripleStore::default();
        for t in triples {
            store.triples.insert(t);
        }
        for t in &store.triples {
            store.nodes.insert(t.subject.clone());
            match t.predicate {
                Predicate::Subject => {
                    store.nodes.insert(t.object.clone());
                    store
                        .subject_edges
                        .entry(t.subject.clone())
                        .or_default()
                        .push(t.object.clone());
                }
                Predicate::Broader => {
                    store.nodes.insert(t.object.clone());
                    store
                        .broader
                        .entry(t.subject.clone())
                        .or_default()
                        .push(t.object.clone());
                    store
                        .narrower
                        .entry(t.object.clone())
                        .or_default()
                        .push(t.subject.clone());
                }
                Predicate::Label => {
                    store
                        .explicit_labels
                        .entry(t.subject.clone())
                        .or_default()
                        .push(t.object.clone());
                }
            }
        }
        for edges in store
            .subject_edges
            .values_mut()
            .chain(store.broader.values_mut())
            .chain(store.narrower.values_mut())
        {
            edges.sort();
            edges.dedup();
        }
        let nodes: Vec<String> = store.nodes.iter().cloned().collect();
        for node in nodes {
            let names: Vec<String> = match store.explicit_labels.get(&node) {
                Some(labels) => labels.iter().map(|l| normalize_term(l)).collect(),
                None => vec![label_from_id(&node)],
            };
            for name in names {
                if name.is_empty() {
                    continue;
                }
                store.max_label_tokens = store.max_label_tokens.max(name.split(' ').count());
                let ids = store.label_index.entry(name).or_default();
                if !ids.contains(&node) {
                    ids.push(node.clone());
                }
            }
        }
        for ids in store.label_index.values_mut() {
            ids.sort();
        }
        store
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains_node(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn triples_with_subject<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Triple> {
        self.triples.iter().filter(move |t| t.subject == node)
    }

    /// Primary normalized label: the first explicit label, else derived from the id.
    pub fn label(&self, node: &str) -> String {
        self.explicit_labels
            .get(node)
            .and_then(|ls| ls.first())
            .map(|l| normalize_term(l))
            .unwrap_or_else(|| label_from_id(node))
    }

    pub fn subject_categories(&self, node: &str) -> &[String] {
        self.subject_edges.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn broader_of(&self, node: &str) -> &[String] {
        self.broader.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn narrower_of(&self, node: &str) -> &[String] {
        self.narrower.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes whose label (normalized) equals `label`.
    pub fn nodes_labelled(&self, label: &str) -> &[String] {
        self.label_index.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes carrying at least one `subject` edge (brands, products, places).
    pub fn resources(&self) -> impl Iterator<Item = &str> {
        let mut ids: Vec<&str> = self.subject_edges.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids.into_iter()
    }

    /// All labels of a node, normalized.
    pub fn labels_of(&self, node: &str) -> Vec<String> {
        match self.explicit_labels.get(node) {
            Some(ls) => ls.iter().map(|l| normalize_term(l)).collect(),
            None => vec![label_from_id(node)],
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.to_tsv_line());
            out.push('\n');
        }
        out
    }
}

/// Depth-first walk over `edges` from `start`, up to `max_depth` levels.
/// Children are taken in sorted order. A node reached again at a shallower
/// depth is re-expanded so the result covers every node within `max_depth`
/// of the start; its label is still emitted only on first visit.
fn bounded_dfs<'a, F>(start: &'a str, max_depth: usize, edges: F, order: &mut Vec<&'a str>, best: &mut HashMap<&'a str, usize>)
where
    F: Fn(&'a str) -> &'a [String] + Copy,
{
    fn go<'a, F>(node: &'a str, depth: usize, max_depth: usize, edges: F, order: &mut Vec<&'a str>, best: &mut HashMap<&'a str, usize>)
    where
        F: Fn(&'a str) -> &'a [String] + Copy,
    {
        match best.get(node) {
            Some(&d) if d <= depth => return,
            Some(_) => {}
            None => order.push(node),
        }
        best.insert(node, depth);
        if depth == max_depth {
            return;
        }
        for next in edges(node) {
            go(next.as_str(), depth + 1, max_depth, edges, order, best);
        }
    }
    go(start, 0, max_depth, edges, order, best);
}

/// Nodes within `depth` narrower-levels of `root`, in first-visit order.
pub fn expand_category_nodes<'a>(store: &'a TripleStore, root: &'a str, depth: usize) -> Vec<&'a str> {
    if !store.contains_node(root) {
        return Vec::new();
    }
    let mut order = Vec::new();
    let mut best = HashMap::new();
    bounded_dfs(root, depth, |n| store.narrower_of(n), &mut order, &mut best);
    order
}

/// Term multiset of the sub-category tree under `root`, `depth` levels deep.
pub fn expand_category(store: &TripleStore, root: &str, depth: usize) -> TermBag {
    if !store.contains_node(root) {
        warn!("category root {root} is not in the knowledge graph");
        return TermBag::new();
    }
    expand_category_nodes(store, root, depth)
        .into_iter()
        .map(|n| store.label(n))
        .collect()
}

/// Term document for one semantic category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryDocument {
    pub category: CategoryId,
    pub terms: TermBag,
}

/// One document per registered category, in registry order.
pub fn build_category_corpus(
    store: &TripleStore,
    categories: &CategoryMap,
    depth: usize,
) -> Result<Vec<CategoryDocument>> {
    CategoryId::all()
        .map(|category| {
            let root = categories
                .semantic_roots
                .get(&category)
                .ok_or_else(|| Error::MissingRoot(category.name().to_string()))?;
            if !store.contains_node(root) {
                return Err(Error::MissingRoot(format!("{} ({root})", category.name())));
            }
            Ok(CategoryDocument {
                category,
                terms: expand_category(store, root, depth),
            })
        })
        .collect()
}

pub fn corpus_to_json(corpus: &[CategoryDocument]) -> String {
    let mut s = serde_json::to_string_pretty(corpus).expect("corpus serializes");
    s.push('\n');
    s
}

pub fn corpus_from_json(text: &str) -> Result<Vec<CategoryDocument>> {
    Ok(serde_json::from_str(text)?)
}

/// Finds the graph nodes mentioned in free text.
pub trait EntityLinker {
    fn link(&self, text: &str) -> Vec<String>;
}

/// Greedy longest-match of query n-grams against the label index.
pub struct GazetteerLinker<'a> {
    pub store: &'a TripleStore,
}

impl EntityLinker for GazetteerLinker<'_> {
    fn link(&self, text: &str) -> Vec<String> {
        extract_entities(self.store, text)
    }
}

/// Left-to-right, non-overlapping longest label matches. Among several nodes
/// sharing a label, a resource (node with `subject` edges) is preferred,
/// then the lexicographically smallest id.
pub fn extract_entities(store: &TripleStore, query: &str) -> Vec<String> {
    let normalized = normalize_term(query);
    let tokens: Vec<&str> = normalized.split(' ').filter(|t| !t.is_empty()).collect();
    let mut entities = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = (1..=store.max_label_tokens.min(tokens.len() - i))
            .rev()
            .find_map(|n| {
                let gram = tokens[i..i + n].join(" ");
                let ids = store.nodes_labelled(&gram);
                let pick = ids
                    .iter()
                    .find(|id| !store.subject_categories(id).is_empty())
                    .or_else(|| ids.first())?;
                Some((n, pick.clone()))
            });
        match longest {
            Some((n, id)) => {
                entities.push(id);
                i += n;
            }
            None => i += 1,
        }
    }
    entities
}

/// Cyber context of a set of queries: linked entities and the union of
/// their category documents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryContext {
    pub entities: Vec<String>,
    pub document: TermBag,
}

/// Categories reached from one entity: its `subject` categories (or the node
/// itself when it has none, i.e. a category label was matched directly),
/// then `broader` edges up to `hops` levels.
pub fn entity_context(store: &TripleStore, entity: &str, hops: usize) -> TermBag {
    let seeds: Vec<&str> = match store.subject_categories(entity) {
        [] => vec![entity],
        cats => cats.iter().map(String::as_str).collect(),
    };
    let mut order = Vec::new();
    let mut best = HashMap::new();
    for seed in seeds {
        bounded_dfs(seed, hops, |n| store.broader_of(n), &mut order, &mut best);
    }
    order.into_iter().map(|n| store.label(n)).collect()
}

pub fn query_context<S: AsRef<str>>(store: &TripleStore, queries: &[S], hops: usize) -> QueryContext {
    query_context_with(&GazetteerLinker { store }, store, queries, hops)
}

pub fn query_context_with<S: AsRef<str>>(
    linker: &dyn EntityLinker,
    store: &TripleStore,
    queries: &[S],
    hops: usize,
) -> QueryContext {
    let mut ctx = QueryContext::default();
    for q in queries {
        for entity in linker.link(q.as_ref()) {
            ctx.document.merge(&entity_context(store, &entity, hops));
            ctx.entities.push(entity);
        }
    }
    ctx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(lines: &[(&str, Predicate, &str)]) -> TripleStore {
        TripleStore::from_triples(lines.iter().map(|(s, p, o)| Triple::new(s, *p, o)))
    }

    use Predicate::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_term("Sportswear_brands"), "sportswear brands");
        assert_eq!(normalize_term("  The Face   Shop!"), "the face shop");
        assert_eq!(normalize_term("Dr. Martens"), "dr martens");
        assert_eq!(normalize_term("Levi's"), "levis");
    }

    #[test]
    fn loads_and_dedups() {
        let text = "# comment\nkg:A\tbroader\tkg:B\nkg:A\tbroader\tkg:B\nkg:C\tlabel\tSee\n";
        let loaded = parse_triples(text);
        assert!(loaded.rejects.is_empty());
        assert_eq!(loaded.store.len(), 2);
    }

    #[test]
    fn three_line_fixture() {
        let text = "kg:Adidas\tsubject\tkg:Category:Sportswear_brands\n\
                    kg:Category:Sportswear_brands\tbroader\tkg:Category:Sportswear\n\
                    kg:Adidas\tlabel\tAdidas\n";
        let loaded = parse_triples(text);
        assert_eq!(loaded.store.len(), 3);
        let by_subject: Vec<_> = loaded.store.triples_with_subject("kg:Adidas").collect();
        assert!(by_subject.contains(&&Triple::new(
            "kg:Adidas",
            Subject,
            "kg:Category:Sportswear_brands"
        )));
        assert_eq!(
            loaded.store.subject_categories("kg:Adidas"),
            ["kg:Category:Sportswear_brands".to_string()]
        );
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let text = "kg:A\tbroader\nkg:A\tnarrower\tkg:B\nkg:A\tbroader\tnot a node\nkg:A\tlabel\t!!!\n";
        let loaded = parse_triples(text);
        assert_eq!(loaded.store.len(), 0);
        let lines: Vec<usize> = loaded.rejects.iter().map(|r| r.line_no).collect();
        assert_eq!(lines, vec![1, 2, 3, 4]);
    }

    #[test]
    fn expansion_depth_bound() {
        let s = store(&[("kg:B", Broader, "kg:A"), ("kg:C", Broader, "kg:B")]);
        let zero = expand_category(&s, "kg:A", 0);
        assert_eq!(zero.terms(), BTreeSet::from(["a"]));
        let one = expand_category(&s, "kg:A", 1);
        assert_eq!(one.terms(), BTreeSet::from(["a", "b"]));
        assert_eq!(expand_category(&s, "kg:A", 9).distinct(), 3);
    }

    #[test]
    fn expansion_terminates_on_cycles() {
        let s = store(&[("kg:A", Broader, "kg:B"), ("kg:B", Broader, "kg:A")]);
        let bag = expand_category(&s, "kg:A", 5);
        assert_eq!(bag.terms(), BTreeSet::from(["a", "b"]));
        assert_eq!(bag.total(), 2);
    }

    #[test]
    fn shallower_path_reexpands() {
        // A -> X -> Y -> D (long way) and A -> D (short way); with depth 2 the
        // DFS meets D late via the long path but must still reach D's child E.
        let s = store(&[
            ("kg:X", Broader, "kg:A"),
            ("kg:Y", Broader, "kg:X"),
            ("kg:D", Broader, "kg:Y"),
            ("kg:D", Broader, "kg:A"),
            ("kg:E", Broader, "kg:D"),
        ]);
        let bag = expand_category(&s, "kg:A", 2);
        assert_eq!(bag.terms(), BTreeSet::from(["a", "d", "e", "x", "y"]));
    }

    #[test]
    fn missing_root_gives_empty_bag() {
        let s = store(&[("kg:B", Broader, "kg:A")]);
        assert!(expand_category(&s, "kg:Nope", 3).is_empty());
    }

    #[test]
    fn distinct_nodes_sharing_a_label_both_count() {
        let s = store(&[
            ("kg:B1", Broader, "kg:A"),
            ("kg:B2", Broader, "kg:A"),
            ("kg:B1", Label, "Shoes"),
            ("kg:B2", Label, "shoes"),
        ]);
        assert_eq!(expand_category(&s, "kg:A", 1).count("shoes"), 2);
    }

    #[test]
    fn longest_match_wins() {
        let s = store(&[
            ("kg:Ugg", Label, "ugg"),
            ("kg:Shoes", Label, "shoes"),
            ("kg:UggShoes", Label, "ugg shoes"),
        ]);
        assert_eq!(extract_entities(&s, "Ugg Shoes"), vec!["kg:UggShoes"]);
        assert_eq!(extract_entities(&s, "cheap ugg"), vec!["kg:Ugg"]);
        assert!(extract_entities(&s, "weather tomorrow").is_empty());
    }

    #[test]
    fn face_shop_example() {
        let s = store(&[
            ("kg:TheFaceShop", Label, "The Face Shop"),
            ("kg:Mascara", Label, "Mascara"),
        ]);
        assert_eq!(
            extract_entities(&s, "The Face Shop clear mascara review"),
            vec!["kg:TheFaceShop", "kg:Mascara"]
        );
    }

    #[test]
    fn query_context_rules() {
        let s = store(&[
            ("kg:E", Subject, "kg:Category:Eye_makeup"),
            ("kg:E", Label, "eyeliner pro"),
            ("kg:Category:Eye_makeup", Broader, "kg:Category:Makeup"),
            ("kg:Category:Makeup", Broader, "kg:Category:Cosmetics"),
        ]);
        let none: [&str; 0] = [];
        assert!(query_context(&s, &none, 2).document.is_empty());
        let zero = query_context(&s, &["eyeliner pro"], 0);
        assert_eq!(zero.document.terms(), BTreeSet::from(["eye makeup"]));
        let two = query_context(&s, &["eyeliner pro"], 2);
        assert_eq!(
            two.document.terms(),
            BTreeSet::from(["cosmetics", "eye makeup", "makeup"])
        );
        // the entity's own label is not part of its context
        assert_eq!(two.document.count("eyeliner pro"), 0);
    }

    #[test]
    fn category_label_matched_directly_seeds_itself() {
        let s = store(&[("kg:Category:Homewares", Broader, "kg:Category:Decor")]);
        let ctx = query_context(&s, &["nest au homeware"], 1);
        assert!(ctx.document.is_empty(), "singular form is not a label");
        let ctx = query_context(&s, &["nest au homewares"], 1);
        assert_eq!(ctx.document.terms(), BTreeSet::from(["decor", "homewares"]));
    }

    #[test]
    fn term_bag_json_shape() {
        let bag: TermBag = ["b", "a", "b"].into_iter().collect();
        let json = serde_json::to_string(&bag).unwrap();
        assert_eq!(json, r#"[{"term":"a","count":1},{"term":"b","count":2}]"#);
        let back: TermBag = serde_json::from_str(&json).unwrap();
        assert_eq!(back, bag);
    }
}
