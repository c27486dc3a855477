//! End-to-end runs: intent classification and next-location prediction
//! over generated data, and the file-based pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{evaluate_classifier, train, ClassifierKind, CvScheme, Dataset, EvalReport, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::features::{write_feature_matrix, FeatureSet, FeatureVector, Featurizer, ReferenceDocs};
use crate::ingest::{
    association_cdf, read_association_log, read_query_log, sessionize, write_rejects,
    write_trajectories, ParsedLog, SessionizationConfig, Sessionized,
};
use crate::knowledge::{
    build_category_corpus, corpus_to_json, parse_triples, query_context, TripleStore, DEFAULT_EXPANSION_DEPTH,
    DEFAULT_QUERY_HOPS,
};
use crate::metrics::{mean_scores, popularity_order, sensitivity_remove_top_n, MetricsReport};
use crate::model::{ApLabels, CategoryMap, FloorplanConfig, IntentLabel, Trajectory};
use crate::predict::{
    item_item_scores, observed_queries, partition_at_first_query, top_k, top_k_weighted, user_user_scores,
    weighted_scores, write_predictions, ItemSimilarity, Method, PredictionRecord, VisitMatrix,
};
use crate::similarity::{contextual_similarity, dwell_fractions, fit_tfidf, semantic_weight_vector, CategorySpace};
use crate::spatial::{label_floorplan, labels_to_json};
use crate::synth::{self, SynthConfig, SynthData};

/// Fitted reference data shared by featurization and prediction.
pub struct Workbench {
    pub store: TripleStore,
    pub category_map: CategoryMap,
    pub floorplan: FloorplanConfig,
    pub ap_labels: ApLabels,
    pub space: CategorySpace,
    pub refs: ReferenceDocs,
    pub hops: usize,
}

impl Workbench {
    pub fn new(
        store: TripleStore,
        category_map: CategoryMap,
        floorplan: FloorplanConfig,
        stores: Option<&str>,
        crowd: Option<&str>,
        lambda: usize,
        hops: usize,
    ) -> Result<Self> {
        let corpus = build_category_corpus(&store, &category_map, lambda)?;
        let space = fit_tfidf(&corpus)?;
        let (_, ap_labels) = label_floorplan(&floorplan, &category_map)?;
        let refs = ReferenceDocs::from_lines(&store, stores, crowd, hops);
        Ok(Workbench {
            store,
            category_map,
            floorplan,
            ap_labels,
            space,
            refs,
            hops,
        })
    }

    pub fn from_synth(data: &SynthData) -> Result<Self> {
        let loaded = parse_triples(&data.kg_tsv);
        Workbench::new(
            loaded.store,
            data.category_map.clone(),
            data.floorplan.clone(),
            Some(&data.stores_text()),
            Some(&data.crowd_text()),
            DEFAULT_EXPANSION_DEPTH,
            DEFAULT_QUERY_HOPS,
        )
    }

    pub fn featurizer(&self) -> Featurizer<'_> {
        Featurizer {
            store: &self.store,
            space: &self.space,
            ap_labels: &self.ap_labels,
            refs: self.refs.clone(),
            hops: self.hops,
        }
    }
}

/// Sessionizes generated logs in memory.
pub fn ingest_synth(data: &SynthData, config: &SessionizationConfig) -> Result<Sessionized> {
    sessionize(
        &ParsedLog::from_records(data.associations.clone()),
        &ParsedLog::from_records(data.queries.clone()),
        &data.floorplan.ap_ids(),
        &data.floorplan.entry_exit_set(),
        config,
    )
}

/// Feature rows for the labelled complete visits, in trajectory order.
pub fn labelled_features(
    featurizer: &Featurizer,
    trajectories: &[Trajectory],
    labels: &BTreeMap<String, IntentLabel>,
) -> Vec<FeatureVector> {
    trajectories
        .iter()
        .filter(|t| t.complete)
        .filter_map(|t| {
            let label = labels.get(&t.id)?;
            let mut f = featurizer.features(t);
            f.label = Some(*label);
            Some(f)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentSeedResult {
    pub seed: u64,
    pub rows: usize,
    pub intentful: usize,
    /// (feature set, cross-validated accuracy)
    pub accuracy: Vec<(String, f64)>,
}

/// One seed of the intent study: generate, ingest, featurize the complete
/// labelled visits and cross-validate `kind` on each feature set.
pub fn intent_seed_run(
    config: &SynthConfig,
    kind: ClassifierKind,
    sets: &[FeatureSet],
    scheme: CvScheme,
) -> Result<IntentSeedResult> {
    let data = synth::generate(config)?;
    let bench = Workbench::from_synth(&data)?;
    let sessions = ingest_synth(&data, &SessionizationConfig::default())?;
    let labels: BTreeMap<String, IntentLabel> =
        data.visits.iter().map(|v| (v.trajectory_id.clone(), v.label)).collect();
    let rows = labelled_features(&bench.featurizer(), &sessions.trajectories, &labels);
    let mut accuracy = Vec::new();
    let mut intentful = 0;
    for set in sets {
        let ds = Dataset::from_features(&rows, set);
        intentful = ds.class_counts()[crate::classify::IF];
        let report = evaluate_classifier(kind, &ds, scheme, DEFAULT_BINS, config.seed)?;
        accuracy.push((set.to_string(), report.accuracy));
    }
    Ok(IntentSeedResult {
        seed: config.seed,
        rows: rows.len(),
        intentful,
        accuracy,
    })
}

/// Where the per-AP semantic weight comes from.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsSource {
    /// Category cosines of the observed queries.
    Cosine,
    /// Contextual similarity of the observed queries and the prefix dwell.
    Cs,
}

impl std::str::FromStr for SsSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(SsSource::Cosine),
            "cs" => Ok(SsSource::Cs),
            other => Err(Error::Config(format!("semantic weight source must be cosine or cs, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub n_test: usize,
    pub k_neighbors: usize,
    pub ss: SsSource,
    pub seed: u64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            n_test: 325,
            k_neighbors: 20,
            ss: SsSource::Cosine,
            seed: 0,
        }
    }
}

/// Full rankings of one test visit under every method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionCase {
    pub trajectory_id: String,
    pub prefix: Vec<String>,
    pub actual: BTreeSet<String>,
    pub rankings: BTreeMap<Method, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRun {
    pub cases: Vec<PredictionCase>,
    /// APs by training visit count, most visited first.
    pub popularity: Vec<String>,
    pub total_aps: usize,
}

/// Visits that can be split at their first query with something left to
/// predict, shuffled by `seed`, first `n` kept (sorted by index).
pub fn select_test_set(trajectories: &[Trajectory], n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| partition_at_first_query(t).is_ok_and(|p| !p.suffix.is_empty()))
        .map(|(i, _)| i)
        .collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

/// Ranks the unvisited APs of every test visit. The visit matrix holds the
/// full training visits plus every test prefix.
pub fn run_prediction(
    bench: &Workbench,
    trajectories: &[Trajectory],
    test: &[usize],
    config: &PredictionConfig,
) -> Result<PredictionRun> {
    let aps: Vec<String> = bench.floorplan.ap_ids().into_iter().collect();
    let mut matrix = VisitMatrix::new(aps.iter().cloned());
    let test_set: BTreeSet<usize> = test.iter().copied().collect();
    let mut training = VisitMatrix::new(aps.iter().cloned());
    for (i, t) in trajectories.iter().enumerate() {
        if !test_set.contains(&i) {
            matrix.push_row(t.ap_ids())?;
            training.push_row(t.ap_ids())?;
        }
    }
    let mut pending = Vec::with_capacity(test.len());
    for &i in test {
        let t = &trajectories[i];
        let part = partition_at_first_query(t)?;
        let row = matrix.push_row(part.prefix.iter().map(|h| h.ap_id.as_str()))?;
        pending.push((t, part, row));
    }
    let sim = ItemSimilarity::fit(&matrix);

    let mut cases = Vec::with_capacity(pending.len());
    for (t, part, row) in pending {
        let prefix: BTreeSet<String> = part.prefix.iter().map(|h| h.ap_id.clone()).collect();
        let actual: BTreeSet<String> = part.suffix.iter().map(|h| h.ap_id.clone()).collect();
        let base = item_item_scores(&sim, &prefix)?;
        let doc = query_context(&bench.store, &observed_queries(t, &part), bench.hops).document;
        let cosines = bench.space.cosines(&doc);
        let weights = match config.ss {
            SsSource::Cosine => cosines,
            SsSource::Cs => {
                let mut seen = t.clone();
                seen.hops = part.prefix.clone();
                contextual_similarity(&cosines, &dwell_fractions(&seen, &bench.ap_labels))
            }
        };
        let ss = semantic_weight_vector(&bench.ap_labels, &weights);
        let weighted = weighted_scores(&base, &ss);
        let uu = user_user_scores(&matrix, &prefix, config.k_neighbors, Some(row))?;
        let full = base.len();
        let mut rankings = BTreeMap::new();
        rankings.insert(Method::ItemItem, top_k(&base, full));
        rankings.insert(Method::ItemItemWeighted, top_k_weighted(&weighted, &base, full));
        rankings.insert(Method::UserUser, top_k(&uu, full));
        cases.push(PredictionCase {
            trajectory_id: t.id.clone(),
            prefix: prefix.into_iter().collect(),
            actual,
            rankings,
        });
    }
    Ok(PredictionRun {
        cases,
        popularity: popularity_order(&training.popularity()),
        total_aps: aps.len(),
    })
}

impl PredictionRun {
    fn lists(&self, method: Method) -> (Vec<Vec<String>>, Vec<BTreeSet<String>>) {
        self.cases
            .iter()
            .map(|c| (c.rankings[&method].clone(), c.actual.clone()))
            .unzip()
    }

    /// Top-k records, methods in fixed order within each visit.
    pub fn records(&self, k: usize) -> Vec<PredictionRecord> {
        let mut out = Vec::new();
        for c in &self.cases {
            for m in Method::ALL {
                out.push(PredictionRecord {
                    trajectory_id: c.trajectory_id.clone(),
                    method: m,
                    k,
                    predicted: c.rankings[&m].iter().take(k).cloned().collect(),
                    actual: c.actual.iter().cloned().collect(),
                });
            }
        }
        out
    }

    pub fn report(&self, method: Method, k: usize, removals: impl IntoIterator<Item = usize>) -> Result<MetricsReport> {
        let (ranked, actual) = self.lists(method);
        let (accuracy_at_k, mrr) = mean_scores(&ranked, &actual, k)?;
        let sensitivity = sensitivity_remove_top_n(&ranked, &actual, &self.popularity, removals, k, self.total_aps)?;
        Ok(MetricsReport {
            method: method.name().to_string(),
            k,
            accuracy_at_k,
            mrr,
            sensitivity,
        })
    }
}

/// One seed of the prediction study: generate `synth.n_visits` visits,
/// ingest, split and rank.
pub fn prediction_seed_run(synth_config: &SynthConfig, config: &PredictionConfig) -> Result<PredictionRun> {
    let data = synth::generate(synth_config)?;
    let bench = Workbench::from_synth(&data)?;
    let sessions = ingest_synth(&data, &SessionizationConfig::default())?;
    let test = select_test_set(&sessions.trajectories, config.n_test, config.seed);
    run_prediction(&bench, &sessions.trajectories, &test, config)
}

/// Files written by [`run_pipeline`], besides the generator's own.
pub const PIPELINE_OUTPUTS: [&str; 10] = [
    "trajectories.jsonl",
    "rejects.jsonl",
    "cdf.csv",
    "ap_labels.json",
    "corpus.json",
    "features.csv",
    "model.json",
    "eval_intent.json",
    "predictions.jsonl",
    "metrics.json",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub trajectories: usize,
    pub rejects: usize,
    pub labelled: usize,
    pub intent: EvalReport,
    pub metrics: Vec<MetricsReport>,
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializes");
    v.push(b'\n');
    v
}

/// Generator → files → ingest → corpus → features → train → predict →
/// evaluate, every stage reading the previous stage's files from `dir`.
pub fn run_pipeline(dir: &Path, synth_config: &SynthConfig, prediction: &PredictionConfig) -> Result<PipelineSummary> {
    let data = synth::generate(synth_config)?;
    data.write_to(dir)?;

    let floorplan = FloorplanConfig::from_json(&read(dir, synth::FLOORPLAN_FILE)?)?;
    let category_map = CategoryMap::from_json(&read(dir, synth::CATEGORY_MAP_FILE)?)?;
    let al = read_association_log(read(dir, synth::AL_FILE)?.as_bytes())?;
    let ql = read_query_log(read(dir, synth::QL_FILE)?.as_bytes())?;
    let config = SessionizationConfig::default();
    let sessions = sessionize(&al, &ql, &floorplan.ap_ids(), &floorplan.entry_exit_set(), &config)?;
    let trajectories = sessions.trajectories;
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &trajectories)?;
    write(dir, "trajectories.jsonl", &buf)?;
    let mut buf = Vec::new();
    write_rejects(&mut buf, &sessions.rejects)?;
    write(dir, "rejects.jsonl", &buf)?;
    let mut cdf = String::from("duration_bound_s,cumulative_fraction\n");
    for (bound, frac) in association_cdf(&al.records, 60)? {
        cdf.push_str(&format!("{bound},{frac}\n"));
    }
    write(dir, "cdf.csv", cdf.as_bytes())?;

    let store = parse_triples(&read(dir, synth::KG_FILE)?).store;
    let corpus = build_category_corpus(&store, &category_map, DEFAULT_EXPANSION_DEPTH)?;
    write(dir, "corpus.json", corpus_to_json(&corpus).as_bytes())?;
    let bench = Workbench::new(
        store,
        category_map,
        floorplan,
        Some(&read(dir, synth::STORES_FILE)?),
        Some(&read(dir, synth::CROWD_FILE)?),
        DEFAULT_EXPANSION_DEPTH,
        DEFAULT_QUERY_HOPS,
    )?;
    write(dir, "ap_labels.json", labels_to_json(&bench.ap_labels).as_bytes())?;

    let labels = synth::read_labels(&read(dir, synth::LABELS_FILE)?)?;
    let rows = labelled_features(&bench.featurizer(), &trajectories, &labels);
    let mut buf = Vec::new();
    write_feature_matrix(&mut buf, &rows)?;
    write(dir, "features.csv", &buf)?;
    let ds = Dataset::from_features(&rows, &FeatureSet::all());
    let model = train(ClassifierKind::Dtnb, &ds, DEFAULT_BINS)?;
    write(dir, "model.json", model.to_json().as_bytes())?;
    let intent = evaluate_classifier(
        ClassifierKind::Dtnb,
        &ds,
        CvScheme::KFold(10),
        DEFAULT_BINS,
        synth_config.seed,
    )?;
    write(dir, "eval_intent.json", &pretty(&intent))?;

    let test = select_test_set(&trajectories, prediction.n_test, prediction.seed);
    let run = run_prediction(&bench, &trajectories, &test, prediction)?;
    let mut buf = Vec::new();
    write_predictions(&mut buf, &run.records(10))?;
    write(dir, "predictions.jsonl", &buf)?;
    let metrics = Method::ALL
        .iter()
        .map(|&m| run.report(m, 10, 0..=20))
        .collect::<Result<Vec<_>>>()?;
    write(dir, "metrics.json", &pretty(&metrics))?;

    Ok(PipelineSummary {
        trajectories: trajectories.len(),
        rejects: sessions.rejects.len(),
        labelled: rows.len(),
        intent,
        metrics,
    })
}
