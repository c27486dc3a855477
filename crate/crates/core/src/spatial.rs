//! Nearest-AP (Voronoi) cell membership of shops, manual rectification and
//! the resulting AP semantic labels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccessPoint, ApLabels, CategoryMap, FloorplanConfig, RectificationOverride, Shop};

/// Shop to AP cell membership, plus shops that could not be placed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub cells: BTreeMap<String, String>,
    pub unassigned: Vec<String>,
}

impl Assignment {
    /// Shops per AP cell, averaged over all `ap_count` cells.
    pub fn mean_shops_per_cell(&self, ap_count: usize) -> f64 {
        if ap_count == 0 {
            return 0.0;
        }
        self.cells.len() as f64 / ap_count as f64
    }

    pub fn shops_in<'a>(&'a self, ap_id: &'a str) -> impl Iterator<Item = &'a str> {
        self.cells
            .iter()
            .filter(move |(_, a)| a.as_str() == ap_id)
            .map(|(s, _)| s.as_str())
    }
}

fn dist2(ap: &AccessPoint, x: f64, y: f64) -> f64 {
    let (dx, dy) = (ap.x - x, ap.y - y);
    dx * dx + dy * dy
}

/// Nearest AP among `sorted` (ordered by x), ties to the smallest id.
fn nearest<'a>(sorted: &[&'a AccessPoint], x: f64, y: f64) -> &'a AccessPoint {
    let start = sorted.partition_point(|a| a.x < x);
    let mut best = if start < sorted.len() { sorted[start] } else { sorted[start - 1] };
    let mut best_d = dist2(best, x, y);
    let mut consider = |ap: &'a AccessPoint| -> bool {
        let dx = ap.x - x;
        if dx * dx > best_d {
            return false;
        }
        let d = dist2(ap, x, y);
        if d < best_d || (d == best_d && ap.id < best.id) {
            best = ap;
            best_d = d;
        }
        true
    };
    for ap in &sorted[start..] {
        if !consider(ap) {
            break;
        }
    }
    for ap in sorted[..start].iter().rev() {
        if !consider(ap) {
            break;
        }
    }
    best
}

/// Assigns each shop to the nearest AP on its own floor.
pub fn voronoi_assign(aps: &[AccessPoint], shops: &[Shop]) -> Assignment {
    let mut by_floor: BTreeMap<u32, Vec<&AccessPoint>> = BTreeMap::new();
    for ap in aps {
        by_floor.entry(ap.floor).or_default().push(ap);
    }
    for list in by_floor.values_mut() {
        list.sort_by(|a, b| a.x.total_cmp(&b.x).then_with(|| a.id.cmp(&b.id)));
    }
    let mut out = Assignment::default();
    for shop in shops {
        match by_floor.get(&shop.floor) {
            Some(list) if !list.is_empty() => {
                let ap = nearest(list, shop.x, shop.y);
                out.cells.insert(shop.id.clone(), ap.id.clone());
            }
            _ => out.unassigned.push(shop.id.clone()),
        }
    }
    out
}

/// Applies manual cell corrections. Unknown shops or APs are errors.
pub fn apply_rectification(
    mut assignment: Assignment,
    overrides: &[RectificationOverride],
    shops: &[Shop],
    aps: &[AccessPoint],
) -> Result<Assignment> {
    let shop_ids: BTreeSet<&str> = shops.iter().map(|s| s.id.as_str()).collect();
    let ap_ids: BTreeSet<&str> = aps.iter().map(|a| a.id.as_str()).collect();
    for o in overrides {
        if !shop_ids.contains(o.shop_id.as_str()) {
            return Err(Error::UnknownShop(o.shop_id.clone()));
        }
        if !ap_ids.contains(o.ap_id.as_str()) {
            return Err(Error::UnknownAp(o.ap_id.clone()));
        }
        assignment.unassigned.retain(|s| s != &o.shop_id);
        assignment.cells.insert(o.shop_id.clone(), o.ap_id.clone());
    }
    Ok(assignment)
}

/// P_a for every AP: the semantic categories of the shops in its cell.
pub fn label_aps(
    assignment: &Assignment,
    floorplan: &FloorplanConfig,
    categories: &CategoryMap,
) -> Result<ApLabels> {
    let mut labels: ApLabels = floorplan
        .aps
        .iter()
        .map(|a| (a.id.clone(), BTreeSet::new()))
        .collect();
    let shops: BTreeMap<&str, &Shop> = floorplan.shops.iter().map(|s| (s.id.as_str(), s)).collect();
    for (shop_id, ap_id) in &assignment.cells {
        let shop = shops
            .get(shop_id.as_str())
            .ok_or_else(|| Error::UnknownShop(shop_id.clone()))?;
        let category = categories.semantic_of(&shop.category)?;
        labels
            .get_mut(ap_id)
            .ok_or_else(|| Error::UnknownAp(ap_id.clone()))?
            .insert(category);
    }
    Ok(labels)
}

/// Assignment, rectification and labelling in one step.
pub fn label_floorplan(floorplan: &FloorplanConfig, categories: &CategoryMap) -> Result<(Assignment, ApLabels)> {
    let raw = voronoi_assign(&floorplan.aps, &floorplan.shops);
    let rectified = apply_rectification(
        raw,
        &floorplan.rectification_overrides,
        &floorplan.shops,
        &floorplan.aps,
    )?;
    let labels = label_aps(&rectified, floorplan, categories)?;
    Ok((rectified, labels))
}

/// AP labels as JSON: {ap_id: [category names]}.
pub fn labels_to_json(labels: &ApLabels) -> String {
    let mut s = serde_json::to_string_pretty(labels).expect("labels serialize");
    s.push('\n');
    s
}

pub fn labels_from_json(text: &str) -> Result<ApLabels> {
    Ok(serde_json::from_str(text)?)
}
