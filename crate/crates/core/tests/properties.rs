use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use chrono::{DateTime, Duration, Utc};
use proptest::prelude::*;
use proptest::sample::subsequence;

use mallctx::classify::{equal_frequency_edges, loo_accuracy, train_dt, train_dtnb, Dataset, Discretizer};
use mallctx::experiment::{ingest_synth, Workbench};
use mallctx::features::{FeatureVector, ReferenceDocs};
use mallctx::fixtures;
use mallctx::ingest::{
    association_cdf, read_association_log, read_query_log, read_trajectories, sessionize, write_association_log,
    write_query_log, write_trajectories, ParsedLog, SessionizationConfig,
};
use mallctx::knowledge::{expand_category, expand_category_nodes, query_context, TermBag};
use mallctx::metrics::{accuracy_at_k, hits_at_k, mrr};
use mallctx::model::{
    AccessPoint, AssociationRecord, CategoryId, Hop, IntentLabel, QueryRecord, Shop, Trajectory, CATEGORY_COUNT,
};
use mallctx::predict::{item_item_scores, jaccard, top_k, top_k_weighted, weighted_scores, ItemSimilarity, VisitMatrix};
use mallctx::similarity::{contextual_similarity, top_k_categories};
use mallctx::spatial::voronoi_assign;
use mallctx::synth::{generate, SynthConfig};

fn t0() -> DateTime<Utc> {
    DateTime::from_timestamp(1_362_132_000, 0).unwrap()
}

// ---------- ingest ----------

/// Non-overlapping associations for a few devices, each device's rows in
/// time order with gaps that sometimes split visits.
fn association_rows() -> impl Strategy<Value = Vec<AssociationRecord>> {
    prop::collection::vec(
        prop::collection::vec((0..6usize, 30u64..2000, 0i64..2500), 1..12),
        1..4,
    )
    .prop_map(|devices| {
        let mut out = Vec::new();
        for (d, rows) in devices.into_iter().enumerate() {
            let mut t = t0() + Duration::hours(d as i64);
            for (ap, dur, gap) in rows {
                out.push(AssociationRecord {
                    device_id: format!("dev{d}"),
                    ap_id: format!("wap{ap:03}"),
                    start: t,
                    duration_s: dur,
                    bytes_down: dur * 10,
                    bytes_up: dur,
                });
                t += Duration::seconds(dur as i64 + gap);
            }
        }
        out
    })
}

fn known_aps() -> BTreeSet<String> {
    (0..6).map(|i| format!("wap{i:03}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sessionization_ignores_row_order(rows in association_rows(), seed in any::<u64>()) {
        let config = SessionizationConfig::default();
        let entry: BTreeSet<String> = ["wap000".to_string()].into();
        let mut shuffled = rows.clone();
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let empty = ParsedLog::<QueryRecord>::from_records(vec![]);
        let a = sessionize(&ParsedLog::from_records(rows), &empty, &known_aps(), &entry, &config).unwrap();
        let b = sessionize(&ParsedLog::from_records(shuffled), &empty, &known_aps(), &entry, &config).unwrap();
        prop_assert_eq!(a.trajectories, b.trajectories);
    }

    #[test]
    fn dwell_fits_in_the_visit_span(rows in association_rows()) {
        let config = SessionizationConfig::default();
        let empty = ParsedLog::<QueryRecord>::from_records(vec![]);
        let s = sessionize(&ParsedLog::from_records(rows.clone()), &empty, &known_aps(), &BTreeSet::new(), &config).unwrap();
        for t in &s.trajectories {
            prop_assert!(t.hops.iter().all(|h| h.dwell_s >= config.dwell_threshold_s));
            // the visit ends at the latest association end within the gap chain
            let mine: Vec<&AssociationRecord> = rows.iter().filter(|r| r.device_id == t.device_id && r.start >= t.visit_start).collect();
            let mut end = t.visit_start;
            for r in mine {
                if r.start - end > Duration::seconds(config.session_gap_s as i64) {
                    break;
                }
                end = end.max(r.end());
            }
            prop_assert!(t.total_dwell() as i64 <= (end - t.visit_start).num_seconds());
        }
    }

    #[test]
    fn cdf_is_monotone_in_unit_range(rows in association_rows(), bin in 1u64..900) {
        let cdf = association_cdf(&rows, bin).unwrap();
        prop_assert!(cdf.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 < w[1].0));
        prop_assert!(cdf.iter().all(|(_, f)| (0.0..=1.0).contains(f)));
        prop_assert_eq!(cdf.last().map(|c| c.1), Some(1.0));
    }

    #[test]
    fn logs_round_trip(rows in association_rows(), words in prop::collection::vec("[a-z]([a-z ]{0,10}[a-z])?", 1..5)) {
        let mut buf = Vec::new();
        write_association_log(&mut buf, &rows).unwrap();
        let back = read_association_log(buf.as_slice()).unwrap();
        prop_assert!(back.rejects.is_empty());
        prop_assert_eq!(&back.records, &rows);
        let mut again = Vec::new();
        write_association_log(&mut again, &back.records).unwrap();
        prop_assert_eq!(&again, &buf);

        let queries: Vec<QueryRecord> = words.iter().enumerate().map(|(i, w)| QueryRecord {
            device_id: "dev0".into(),
            ap_id: "wap001".into(),
            at: t0() + Duration::seconds(i as i64),
            text: w.clone(),
        }).collect();
        let mut qbuf = Vec::new();
        write_query_log(&mut qbuf, &queries).unwrap();
        let qback = read_query_log(qbuf.as_slice()).unwrap();
        prop_assert_eq!(qback.records, queries);
    }

    #[test]
    fn short_hops_are_refused(dwell in 0u64..600) {
        let hops = vec![Hop { ap_id: "wap001".into(), dwell_s: dwell }];
        prop_assert!(Trajectory::new("dev", t0(), hops, vec![], 600).is_err());
    }
}

#[test]
fn trajectories_round_trip() {
    let data = generate(&SynthConfig { seed: 4, n_visits: 60, complete_fraction: 0.5, ..SynthConfig::default() }).unwrap();
    let s = ingest_synth(&data, &SessionizationConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &s.trajectories).unwrap();
    let back = read_trajectories(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back, s.trajectories);
    let mut again = Vec::new();
    write_trajectories(&mut again, &back).unwrap();
    assert_eq!(again, buf);
    let fp = mallctx::model::FloorplanConfig::from_json(&data.floorplan.to_json()).unwrap();
    assert_eq!(fp.to_json(), data.floorplan.to_json());
}

// ---------- spatial ----------

fn layout() -> impl Strategy<Value = (Vec<AccessPoint>, Vec<Shop>)> {
    let aps = prop::collection::vec((-20i32..20, -20i32..20, 0u32..2), 1..12);
    let shops = prop::collection::vec((-25i32..25, -25i32..25, 0u32..3), 0..30);
    (aps, shops).prop_map(|(a, s)| {
        let aps = a
            .into_iter()
            .enumerate()
            .map(|(i, (x, y, f))| AccessPoint { id: format!("wap{i:03}"), x: x as f64, y: y as f64, floor: f })
            .collect();
        let shops = s
            .into_iter()
            .enumerate()
            .map(|(i, (x, y, f))| Shop {
                id: format!("shop{i:03}"),
                name: String::new(),
                category: "Cafe".into(),
                x: x as f64,
                y: y as f64,
                floor: f,
            })
            .collect();
        (aps, shops)
    })
}

fn brute_nearest(aps: &[AccessPoint], shop: &Shop) -> Option<String> {
    aps.iter()
        .filter(|a| a.floor == shop.floor)
        .map(|a| ((a.x - shop.x).powi(2) + (a.y - shop.y).powi(2), a.id.clone()))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

proptest! {
    #[test]
    fn voronoi_matches_brute_force((aps, shops) in layout()) {
        let a = voronoi_assign(&aps, &shops);
        for shop in &shops {
            let placed = a.cells.get(&shop.id);
            let unassigned = a.unassigned.contains(&shop.id);
            prop_assert!(placed.is_some() != unassigned);
            prop_assert_eq!(placed.cloned(), brute_nearest(&aps, shop));
        }
    }

    #[test]
    fn voronoi_ignores_translation((aps, shops) in layout(), dx in -50i32..50, dy in -50i32..50) {
        let shift = |x: f64, d: i32| x + d as f64;
        let moved_aps: Vec<AccessPoint> = aps.iter().map(|a| AccessPoint { x: shift(a.x, dx), y: shift(a.y, dy), ..a.clone() }).collect();
        let moved_shops: Vec<Shop> = shops.iter().map(|s| Shop { x: shift(s.x, dx), y: shift(s.y, dy), ..s.clone() }).collect();
        prop_assert_eq!(voronoi_assign(&aps, &shops), voronoi_assign(&moved_aps, &moved_shops));
    }
}

// ---------- knowledge graph and similarity ----------

fn bench() -> &'static (Workbench, Vec<Trajectory>) {
    static CELL: OnceLock<(Workbench, Vec<Trajectory>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = generate(&SynthConfig { seed: 11, n_visits: 80, ..SynthConfig::default() }).unwrap();
        let bench = Workbench::from_synth(&data).unwrap();
        let s = ingest_synth(&data, &SessionizationConfig::default()).unwrap();
        (bench, s.trajectories)
    })
}

fn roots() -> Vec<String> {
    fixtures::default_category_map().semantic_roots.values().cloned().collect()
}

fn phrases() -> Vec<&'static str> {
    let mut v: Vec<&str> = fixtures::LABELLED_QUERIES.iter().map(|q| q.0).collect();
    v.extend(["bondi beach", "weather tomorrow", "running shoes sale", "espresso machine"]);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expansion_grows_with_depth(root in 0usize..18, depth in 0usize..7) {
        let store = &bench().0.store;
        let root = &roots()[root];
        let shallow = expand_category(store, root, depth);
        let deep = expand_category(store, root, depth + 1);
        prop_assert!(shallow.terms().is_subset(&deep.terms()));
        let nodes = expand_category_nodes(store, root, depth);
        let distinct: BTreeSet<&&str> = nodes.iter().collect();
        prop_assert_eq!(distinct.len(), nodes.len());
    }

    #[test]
    fn query_context_is_additive(a in subsequence(phrases(), 0..5), b in subsequence(phrases(), 0..5)) {
        let store = &bench().0.store;
        let mut both = a.clone();
        both.extend(b.iter().copied());
        let mut union = query_context(store, &a, 2).document;
        union.merge(&query_context(store, &b, 2).document);
        prop_assert_eq!(query_context(store, &both, 2).document, union);
    }

    #[test]
    fn cosine_is_symmetric_bounded_and_scale_free(
        a in subsequence(phrases(), 1..4),
        b in subsequence(phrases(), 1..4),
        alpha in 1u32..6,
    ) {
        let (bench, _) = bench();
        let da = query_context(&bench.store, &a, 2).document;
        let db = query_context(&bench.store, &b, 2).document;
        let ab = bench.space.bag_cosine(&da, &db);
        prop_assert!((ab - bench.space.bag_cosine(&db, &da)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        let mut scaled = TermBag::new();
        for (t, n) in da.iter() {
            scaled.add_n(t, n * alpha);
        }
        let (c1, c2) = (bench.space.cosines(&da), bench.space.cosines(&scaled));
        for i in 0..CATEGORY_COUNT {
            prop_assert!((c1[i] - c2[i]).abs() < 1e-12);
        }
        prop_assert_eq!(top_k_categories(&c1, 18), top_k_categories(&c2, 18));
    }

    #[test]
    fn cs_is_bounded_by_dwell(cos in prop::array::uniform18(0.0f64..=1.0), t in prop::array::uniform18(0.0f64..=1.0)) {
        let cs = contextual_similarity(&cos, &t);
        for i in 0..CATEGORY_COUNT {
            prop_assert!(cs[i] <= t[i].min(1.0) + 1e-15);
        }
    }
}

// ---------- features ----------

fn check_summary_features(f: &FeatureVector) -> Result<(), TestCaseError> {
    let cs = &f.values[21..39];
    let max = cs.iter().copied().fold(0.0, f64::max);
    let sum: f64 = cs.iter().sum();
    prop_assert_eq!(f.values[39], max);
    prop_assert!((f.values[40] - sum).abs() < 1e-12);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feature_vector_ignores_query_order(pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let (bench, trajectories) = bench();
        let t = pick.get(trajectories);
        let f = bench.featurizer();
        let base = f.features(t);
        check_summary_features(&base)?;
        let mut shuffled = t.clone();
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        shuffled.queries.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(f.features(&shuffled), base);
    }
}

#[test]
fn missing_reference_documents_give_zero() {
    let (bench, trajectories) = bench();
    let mut f = bench.featurizer();
    f.refs = ReferenceDocs::default();
    for t in trajectories.iter().take(5) {
        let v = f.features(t);
        assert_eq!((v.values[41], v.values[42]), (0.0, 0.0));
    }
}

// ---------- classification ----------

fn dataset() -> impl Strategy<Value = Dataset> {
    (2usize..5, 10usize..40).prop_flat_map(|(width, n)| {
        (
            prop::collection::vec(prop::collection::vec(0u8..6, width), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(rows, flags)| {
                let mut labels: Vec<IntentLabel> =
                    flags.iter().map(|&b| if b { IntentLabel::Intentful } else { IntentLabel::Intentless }).collect();
                labels[0] = IntentLabel::Intentful;
                labels[1] = IntentLabel::Intentless;
                let rows = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
                Dataset::new((1..=width).map(|j| format!("F{j}")).collect(), rows, labels).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn posteriors_sum_to_one(data in dataset(), probe in prop::collection::vec(-1.0f64..7.0, 5)) {
        let model = train_dtnb(&data, 5).unwrap();
        let p = model.posterior(&probe[..data.width()]).unwrap();
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_selection_never_loses_accuracy(data in dataset()) {
        let model = train_dt(&data, 5).unwrap();
        let chosen = loo_accuracy(&data, 5, &model.dt.schema, &[]).unwrap();
        prop_assert!(chosen >= loo_accuracy(&data, 5, &[], &[]).unwrap());
        // no single extra feature improves the final schema
        for f in (0..data.width()).filter(|f| !model.dt.schema.contains(f)) {
            let mut more = model.dt.schema.clone();
            more.push(f);
            more.sort_unstable();
            prop_assert!(loo_accuracy(&data, 5, &more, &[]).unwrap() <= chosen);
        }
        let hybrid = train_dtnb(&data, 5).unwrap();
        let all: Vec<usize> = (0..data.width()).collect();
        prop_assert!(
            loo_accuracy(&data, 5, &hybrid.dt.schema, &hybrid.nb.features).unwrap()
                >= loo_accuracy(&data, 5, &all, &[]).unwrap()
        );
    }

    #[test]
    fn equal_frequency_bins_are_balanced(values in prop::collection::btree_set(-1000i32..1000, 5..80), bins in 2usize..8) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let disc = Discretizer::fit(&rows, bins).unwrap();
        let mut counts = vec![0usize; disc.bin_count(0)];
        for &v in &values {
            counts[disc.bin(0, v) as usize] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{:?}", counts);
        prop_assert_eq!(equal_frequency_edges(&values, bins).len() + 1, counts.len());
    }
}

// ---------- prediction and metrics ----------

fn visit_rows() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (2usize..9).prop_flat_map(|m| {
        prop::collection::vec(prop::collection::vec(any::<bool>(), m), 1..15).prop_map(move |rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, mut r)| {
                    r[i % m] = true;
                    r
                })
                .collect()
        })
    })
}

fn matrix_of(rows: &[Vec<bool>]) -> VisitMatrix {
    let m = rows[0].len();
    let names: Vec<String> = (0..m).map(|j| format!("ap{j}")).collect();
    let mut matrix = VisitMatrix::new(names.clone());
    for r in rows {
        matrix.push_row((0..m).filter(|&j| r[j]).map(|j| names[j].as_str())).unwrap();
    }
    matrix
}

proptest! {
    #[test]
    fn jaccard_is_symmetric(u in prop::collection::vec(any::<bool>(), 1..20), v in prop::collection::vec(any::<bool>(), 1..20)) {
        let n = u.len().min(v.len());
        let (u, v) = (&u[..n], &v[..n]);
        prop_assert_eq!(jaccard(u, v).unwrap(), jaccard(v, u).unwrap());
        if u.iter().any(|&b| b) {
            prop_assert_eq!(jaccard(u, u).unwrap(), 1.0);
        }
    }

    #[test]
    fn item_scores_ignore_row_order(rows in visit_rows(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let prefix: BTreeSet<String> = ["ap0".to_string()].into();
        let a = item_item_scores(&ItemSimilarity::fit(&matrix_of(&rows)), &prefix).unwrap();
        let b = item_item_scores(&ItemSimilarity::fit(&matrix_of(&shuffled)), &prefix).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn uniform_weight_keeps_ranking(rows in visit_rows(), w in 0.01f64..10.0) {
        let matrix = matrix_of(&rows);
        let prefix: BTreeSet<String> = ["ap0".to_string()].into();
        let base = item_item_scores(&ItemSimilarity::fit(&matrix), &prefix).unwrap();
        let ss: BTreeMap<String, f64> = matrix.aps().iter().map(|a| (a.clone(), w)).collect();
        let weighted = weighted_scores(&base, &ss);
        prop_assert_eq!(top_k_weighted(&weighted, &base, base.len()), top_k(&base, base.len()));
    }

    #[test]
    fn hits_grow_with_k_and_mrr_bounds(
        lists in prop::collection::vec((prop::collection::vec(0u8..12, 1..10), prop::collection::btree_set(0u8..12, 1..4)), 1..10)
    ) {
        let ranked: Vec<Vec<String>> = lists.iter().map(|(r, _)| {
            let mut seen = BTreeSet::new();
            r.iter().filter(|x| seen.insert(**x)).map(|x| format!("ap{x}")).collect()
        }).collect();
        let actual: Vec<BTreeSet<String>> = lists.iter().map(|(_, a)| a.iter().map(|x| format!("ap{x}")).collect()).collect();
        for (r, a) in ranked.iter().zip(&actual) {
            for k in 1..12 {
                prop_assert!(hits_at_k(r, a, k) <= hits_at_k(r, a, k + 1));
            }
        }
        let m = mrr(&ranked, &actual).unwrap();
        let acc1: f64 = ranked.iter().zip(&actual).map(|(r, a)| accuracy_at_k(r, a, 1).unwrap()).sum::<f64>() / ranked.len() as f64;
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!(m >= acc1 - 1e-12);
    }
}

#[test]
fn labels_use_registered_categories_only() {
    let (bench, _) = bench();
    let registered: BTreeSet<CategoryId> = CategoryId::all().collect();
    assert!(bench.ap_labels.values().all(|l| l.is_subset(&registered)));
    assert_eq!(bench.ap_labels.len(), bench.floorplan.aps.len());
}
