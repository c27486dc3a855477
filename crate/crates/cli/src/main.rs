use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use mallctx::classify::{evaluate_classifier, train, ClassifierKind, CvScheme, Dataset, DEFAULT_BINS};
use mallctx::experiment::{run_prediction, select_test_set, PredictionConfig, PredictionRun, SsSource, Workbench};
use mallctx::features::{read_feature_matrix, write_feature_matrix, FeatureSet, FeatureVector};
use mallctx::fixtures;
use mallctx::ingest::{
    association_cdf, read_association_log, read_query_log, read_trajectories, sessionize, write_rejects,
    write_trajectories, SessionizationConfig,
};
use mallctx::knowledge::{build_category_corpus, corpus_to_json, parse_triples, DEFAULT_EXPANSION_DEPTH, DEFAULT_QUERY_HOPS};
use mallctx::metrics::{mean_scores, MetricsReport};
use mallctx::model::{validate_deployment, CategoryMap, FloorplanConfig, Reject, Trajectory};
use mallctx::predict::{read_predictions, write_predictions, Method};
use mallctx::spatial::{label_floorplan, labels_to_json};
use mallctx::synth::{self, PersonaMix, SynthConfig};

#[derive(Parser, Debug)]
#[command(name = "mallctx", version, about = "Indoor visit intent and next-location pipeline")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write a run manifest (versions, seed, flags, input digests) here.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic mall, logs and labels.
    Synth(SynthArgs),
    /// Sessionize association and query logs into trajectories.
    Ingest(IngestArgs),
    /// Association-duration CDF.
    Cdf(CdfArgs),
    /// Label APs with the semantic categories of their shops.
    LabelAps(LabelArgs),
    /// Expand the 18 category documents from the knowledge graph.
    BuildCorpus(CorpusArgs),
    /// Feature matrix for complete trajectories.
    Features(FeaturesArgs),
    /// Fit an intent classifier.
    TrainIntent(TrainArgs),
    /// Cross-validate an intent classifier.
    EvalIntent(EvalIntentArgs),
    /// Rank next locations for held-out trajectories.
    Predict(PredictArgs),
    /// Accuracy@k and MRR from a predictions file.
    EvalPredict(EvalPredictArgs),
    /// Accuracy@k after removing the most popular APs.
    Sensitivity(SensitivityArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 176)]
    visits: usize,
    /// Share of intentful visitors.
    #[arg(long, default_value_t = 48.0 / 176.0)]
    intentful: f64,
    /// Share of visits that start and end at an entrance.
    #[arg(long, default_value_t = 1.0)]
    complete_fraction: f64,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    al: PathBuf,
    #[arg(long)]
    ql: PathBuf,
    #[arg(long)]
    floorplan: PathBuf,
    /// Directory for trajectories.jsonl and rejects.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 600)]
    dwell_threshold: u64,
    #[arg(long, default_value_t = 1800)]
    session_gap: u64,
    /// Drop short associations before summing dwell per AP.
    #[arg(long)]
    filter_before_aggregation: bool,
}

#[derive(Args, Debug)]
struct CdfArgs {
    #[arg(long)]
    al: PathBuf,
    #[arg(long, default_value_t = 60)]
    bin: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    floorplan: PathBuf,
    /// Category map JSON; the bundled one when omitted.
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EXPANSION_DEPTH)]
    lambda: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Inputs shared by every stage that needs the fitted category space.
#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    floorplan: PathBuf,
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Store names, one per line.
    #[arg(long)]
    stores: Option<PathBuf>,
    /// Crowd keywords, one per line.
    #[arg(long)]
    crowd: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EXPANSION_DEPTH)]
    lambda: usize,
    #[arg(long, default_value_t = DEFAULT_QUERY_HOPS)]
    hops: usize,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[command(flatten)]
    bench: BenchArgs,
    #[arg(long)]
    trajectories: PathBuf,
    /// labels CSV (trajectory_id,label); rows without one get `?`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ClassifierArgs {
    /// Feature matrix CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "dtnb")]
    classifier: ClassifierKind,
    #[arg(long, default_value = "phy+cyb+cont")]
    features: FeatureSet,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalIntentArgs {
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[arg(long, default_value = "kfold:10")]
    cv: CvScheme,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictionArgs {
    #[command(flatten)]
    bench: BenchArgs,
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long, default_value_t = 325)]
    n_test: usize,
    #[arg(long, default_value_t = 20)]
    k_neighbors: usize,
    /// Semantic weight source: cosine or cs.
    #[arg(long, default_value = "cosine")]
    ss: SsSource,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    prediction: PredictionArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalPredictArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Cut-off; defaults to the length the predictions were written with.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    #[command(flatten)]
    prediction: PredictionArgs,
    #[arg(long, default_value_t = 20)]
    max_removed: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    seed: u64,
    args: Vec<String>,
    inputs: &'a BTreeMap<String, String>,
}

/// Reads inputs and remembers their digests for the manifest.
#[derive(Default)]
struct Inputs(BTreeMap<String, String>);

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|e| mallctx::Error::io(path, e))?;
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.0.insert(path.display().to_string(), digest);
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    fn categories(&mut self, path: Option<&Path>) -> Result<CategoryMap> {
        match path {
            Some(p) => Ok(CategoryMap::from_json(&self.read(p)?)?),
            None => Ok(fixtures::default_category_map()),
        }
    }

    fn trajectories(&mut self, path: &Path) -> Result<Vec<Trajectory>> {
        Ok(read_trajectories(&self.read(path)?)?)
    }

    fn bench(&mut self, a: &BenchArgs) -> Result<Workbench> {
        let floorplan = FloorplanConfig::from_json(&self.read(&a.floorplan)?)?;
        let categories = self.categories(a.categories.as_deref())?;
        let loaded = parse_triples(&self.read(&a.kg)?);
        if !loaded.rejects.is_empty() {
            log::warn!("{} malformed knowledge-graph lines skipped", loaded.rejects.len());
        }
        let stores = a.stores.as_deref().map(|p| self.read(p)).transpose()?;
        let crowd = a.crowd.as_deref().map(|p| self.read(p)).transpose()?;
        let bench = Workbench::new(
            loaded.store,
            categories,
            floorplan,
            stores.as_deref(),
            crowd.as_deref(),
            a.lambda,
            a.hops,
        )?;
        Ok(bench)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| mallctx::Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| mallctx::Error::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write(path, &bytes)
}

fn tag_rejects(rejects: Vec<Reject>, source: &str) -> impl Iterator<Item = Reject> + '_ {
    rejects.into_iter().map(move |r| Reject {
        reason: format!("{source}: {}", r.reason),
        ..r
    })
}

fn run_predictions(inputs: &mut Inputs, a: &PredictionArgs, seed: u64) -> Result<PredictionRun> {
    let bench = inputs.bench(&a.bench)?;
    let trajectories = inputs.trajectories(&a.trajectories)?;
    let config = PredictionConfig {
        n_test: a.n_test,
        k_neighbors: a.k_neighbors,
        ss: a.ss,
        seed,
    };
    let test = select_test_set(&trajectories, config.n_test, seed);
    if test.is_empty() {
        bail!(mallctx::Error::InvalidInput("no trajectory has a query with later hops to predict".into()));
    }
    info!("{} test visits of {}", test.len(), trajectories.len());
    Ok(run_prediction(&bench, &trajectories, &test, &config)?)
}

fn dataset(inputs: &mut Inputs, a: &ClassifierArgs) -> Result<Dataset> {
    let rows = read_feature_matrix(inputs.read(&a.input)?.as_bytes())?;
    let ds = Dataset::from_features(&rows, &a.features);
    if ds.is_empty() {
        bail!(mallctx::Error::EmptyTrainingSet);
    }
    Ok(ds)
}

fn run(cli: &Cli, inputs: &mut Inputs) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => {
            let config = SynthConfig {
                seed: cli.seed,
                n_visits: a.visits,
                mix: PersonaMix {
                    intentful: a.intentful,
                    intentless: 1.0 - a.intentful,
                },
                complete_fraction: a.complete_fraction,
                ..SynthConfig::default()
            };
            let data = synth::generate(&config)?;
            fs::create_dir_all(&a.out).map_err(|e| mallctx::Error::io(&a.out, e))?;
            data.write_to(&a.out)?;
            println!("{} visits, {} associations, {} queries", data.visits.len(), data.associations.len(), data.queries.len());
        }
        Command::Ingest(a) => {
            let floorplan = FloorplanConfig::from_json(&inputs.read(&a.floorplan)?)?;
            let report = validate_deployment(&floorplan);
            if !report.is_valid() {
                bail!(mallctx::Error::Config(format!("floorplan is invalid: {:?}", report.violations)));
            }
            let al = read_association_log(inputs.read(&a.al)?.as_bytes())?;
            let ql = read_query_log(inputs.read(&a.ql)?.as_bytes())?;
            let config = SessionizationConfig {
                dwell_threshold_s: a.dwell_threshold,
                session_gap_s: a.session_gap,
                filter_after_aggregation: !a.filter_before_aggregation,
                ..SessionizationConfig::default()
            };
            let s = sessionize(&al, &ql, &floorplan.ap_ids(), &floorplan.entry_exit_set(), &config)?;
            let mut rejects: Vec<Reject> = tag_rejects(al.rejects.clone(), "association log")
                .chain(tag_rejects(ql.rejects.clone(), "query log"))
                .collect();
            rejects.extend(s.rejects);
            let mut buf = Vec::new();
            write_trajectories(&mut buf, &s.trajectories)?;
            write(&a.out.join("trajectories.jsonl"), &buf)?;
            let mut buf = Vec::new();
            write_rejects(&mut buf, &rejects)?;
            write(&a.out.join("rejects.jsonl"), &buf)?;
            let complete = s.trajectories.iter().filter(|t| t.complete).count();
            println!("{} trajectories ({complete} complete), {} rejects", s.trajectories.len(), rejects.len());
        }
        Command::Cdf(a) => {
            let al = read_association_log(inputs.read(&a.al)?.as_bytes())?;
            let mut out = String::from("duration_bound_s,cumulative_fraction\n");
            for (bound, frac) in association_cdf(&al.records, a.bin)? {
                out.push_str(&format!("{bound},{frac}\n"));
            }
            write(&a.out, out.as_bytes())?;
        }
        Command::LabelAps(a) => {
            let floorplan = FloorplanConfig::from_json(&inputs.read(&a.floorplan)?)?;
            let categories = inputs.categories(a.categories.as_deref())?;
            let (assignment, labels) = label_floorplan(&floorplan, &categories)?;
            if !assignment.unassigned.is_empty() {
                log::warn!("{} shops have no AP on their floor", assignment.unassigned.len());
            }
            write(&a.out, labels_to_json(&labels).as_bytes())?;
        }
        Command::BuildCorpus(a) => {
            let store = parse_triples(&inputs.read(&a.kg)?).store;
            let categories = inputs.categories(a.categories.as_deref())?;
            let corpus = build_category_corpus(&store, &categories, a.lambda)?;
            write(&a.out, corpus_to_json(&corpus).as_bytes())?;
            println!("{} category documents", corpus.len());
        }
        Command::Features(a) => {
            let bench = inputs.bench(&a.bench)?;
            let trajectories = inputs.trajectories(&a.trajectories)?;
            let labels = match &a.labels {
                Some(p) => synth::read_labels(&inputs.read(p)?)?,
                None => BTreeMap::new(),
            };
            let f = bench.featurizer();
            f.warn_missing_refs();
            let rows: Vec<FeatureVector> = trajectories
                .iter()
                .filter(|t| t.complete)
                .map(|t| FeatureVector {
                    label: labels.get(&t.id).copied(),
                    ..f.features(t)
                })
                .collect();
            let mut buf = Vec::new();
            write_feature_matrix(&mut buf, &rows)?;
            write(&a.out, &buf)?;
            println!("{} rows", rows.len());
        }
        Command::TrainIntent(a) => {
            let ds = dataset(inputs, &a.classifier)?;
            let model = train(a.classifier.classifier, &ds, a.classifier.bins)?;
            write(&a.out, model.to_json().as_bytes())?;
        }
        Command::EvalIntent(a) => {
            let ds = dataset(inputs, &a.classifier)?;
            let c = &a.classifier;
            let report = evaluate_classifier(c.classifier, &ds, a.cv, c.bins, cli.seed)?;
            write_json(&a.out, &report)?;
            println!("accuracy {:.4}, weighted F {:.4}", report.accuracy, report.weighted.f_score);
        }
        Command::Predict(a) => {
            let run = run_predictions(inputs, &a.prediction, cli.seed)?;
            let mut buf = Vec::new();
            write_predictions(&mut buf, &run.records(a.prediction.k))?;
            write(&a.out, &buf)?;
        }
        Command::EvalPredict(a) => {
            let records = read_predictions(&inputs.read(&a.predictions)?)?;
            let Some(written_k) = records.iter().map(|r| r.k).min() else {
                bail!(mallctx::Error::InvalidInput("predictions file is empty".into()));
            };
            let k = a.k.unwrap_or(written_k);
            if k > written_k {
                bail!(mallctx::Error::Config(format!("k = {k} exceeds the {written_k} predictions per visit")));
            }
            let mut reports = Vec::new();
            for m in Method::ALL {
                let (ranked, actual): (Vec<Vec<String>>, Vec<BTreeSet<String>>) = records
                    .iter()
                    .filter(|r| r.method == m)
                    .map(|r| (r.predicted.clone(), r.actual.iter().cloned().collect()))
                    .unzip();
                if ranked.is_empty() {
                    continue;
                }
                let (accuracy_at_k, mrr) = mean_scores(&ranked, &actual, k)?;
                reports.push(MetricsReport {
                    method: m.name().to_string(),
                    k,
                    accuracy_at_k,
                    mrr,
                    sensitivity: Vec::new(),
                });
            }
            write_json(&a.out, &reports)?;
        }
        Command::Sensitivity(a) => {
            let run = run_predictions(inputs, &a.prediction, cli.seed)?;
            let reports = Method::ALL
                .iter()
                .map(|&m| run.report(m, a.prediction.k, 0..=a.max_removed))
                .collect::<mallctx::Result<Vec<_>>>()?;
            write_json(&a.out, &reports)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.downcast_ref::<mallctx::Error>().is_some_and(mallctx::Error::is_io) || e.downcast_ref::<std::io::Error>().is_some()
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let mut inputs = Inputs::default();
    let result = run(&cli, &mut inputs).and_then(|()| match &cli.manifest {
        Some(path) => write_json(
            path,
            &Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                seed: cli.seed,
                args: std::env::args().skip(1).collect(),
                inputs: &inputs.0,
            },
        ),
        None => Ok(()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
