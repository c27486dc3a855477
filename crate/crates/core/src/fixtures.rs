//! Bundled reference data: a small knowledge-graph snapshot, the default
//! operator-to-semantic category map and a set of labelled example queries.

use crate::knowledge::{parse_triples, TripleStore};
use crate::model::{CategoryId, CategoryMap};

pub const MINI_KG_TSV: &str = include_str!("../fixtures/mini_kg.tsv");
pub const DEFAULT_CATEGORY_MAP_JSON: &str = include_str!("../fixtures/default_category_map.json");

/// Example queries with the category a human annotator assigned.
pub const LABELLED_QUERIES: &[(&str, &str)] = &[
    ("the face shop clear mascara reviews", "Cosmetics"),
    ("Muk Hair Wax", "Cosmetics"),
    ("Superdry Sale", "Clothing"),
    ("Emporio Aramani", "Clothing"),
    ("TopShop Sydney", "Fashion"),
    ("Ugg Shoes", "Footwear"),
    ("Nokia Lumia 520 reviews", "Mobile Phones"),
    ("nest au homeware", "Decor"),
    ("nespresso capsules", "Coffee"),
    ("bosch dishwasher", "Home Appliances"),
    ("tag heuer carrera", "Watches"),
    ("pandora charm bracelet", "Jewellery"),
    ("wilson tennis racquet", "Sports"),
    ("sony playstation 4", "Consumer Electronics"),
    ("michael kors handbag", "Bags"),
    ("ray ban sunglasses", "Fashion Accessories"),
    ("laduree macarons", "Bakeries"),
    ("woolworths opening hours", "Food Retail"),
    ("din tai fung dumplings", "Restaurants"),
    ("kmart catalogue", "Retail"),
];

pub fn mini_kg() -> TripleStore {
    let loaded = parse_triples(MINI_KG_TSV);
    debug_assert!(loaded.rejects.is_empty(), "{:?}", loaded.rejects);
    loaded.store
}

pub fn default_category_map() -> CategoryMap {
    CategoryMap::from_json(DEFAULT_CATEGORY_MAP_JSON).expect("bundled category map parses")
}

pub fn labelled_queries() -> impl Iterator<Item = (&'static str, CategoryId)> {
    LABELLED_QUERIES
        .iter()
        .map(|(q, c)| (*q, CategoryId::from_name(c).expect("registered category")))
}
