use std::path::Path;
use std::process::{Command, Output};

fn mallctx(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mallctx"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mallctx(dir, args);
    assert!(out.status.success(), "{args:?}");
    String::from_utf8(out.stdout).unwrap()
}

const BENCH: [&str; 10] = [
    "--floorplan",
    "d/floorplan.json",
    "--kg",
    "d/kg.tsv",
    "--categories",
    "d/category_map.json",
    "--stores",
    "d/stores.txt",
    "--crowd",
    "d/crowd.txt",
];

fn with_bench<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(BENCH.iter()).chain(tail).copied().collect()
}

/// synth → ingest → corpus → features → eval → predict → eval-predict.
fn pipeline(dir: &Path) {
    ok(dir, &["synth", "--seed", "7", "--out", "d", "--visits", "300", "--complete-fraction", "0.5"]);
    let ingest = ok(dir, &["ingest", "--al", "d/al.csv", "--ql", "d/ql.csv", "--floorplan", "d/floorplan.json", "--out", "o"]);
    assert!(ingest.contains(", 0 rejects"), "{ingest}");
    assert_eq!(std::fs::read_to_string(dir.join("o/rejects.jsonl")).unwrap(), "");
    ok(dir, &["cdf", "--al", "d/al.csv", "--out", "o/cdf.csv"]);
    ok(dir, &["label-aps", "--floorplan", "d/floorplan.json", "--categories", "d/category_map.json", "--out", "o/ap_labels.json"]);
    ok(dir, &["build-corpus", "--kg", "d/kg.tsv", "--categories", "d/category_map.json", "--lambda", "5", "--out", "o/corpus.json"]);
    ok(dir, &with_bench(&["features"], &["--trajectories", "o/trajectories.jsonl", "--labels", "d/labels.csv", "--out", "o/features.csv"]));
    ok(dir, &["train-intent", "--input", "o/features.csv", "--classifier", "dtnb", "--out", "o/model.json"]);
    ok(
        dir,
        &[
            "eval-intent", "--input", "o/features.csv", "--classifier", "dtnb", "--features", "phy+cyb+cont", "--seed", "7",
            "--out", "o/eval.json", "--manifest", "o/manifest.json",
        ],
    );
    ok(dir, &with_bench(&["predict"], &["--trajectories", "o/trajectories.jsonl", "--seed", "7", "--out", "o/pred.jsonl"]));
    ok(dir, &["eval-predict", "--predictions", "o/pred.jsonl", "--out", "o/metrics.json"]);
    ok(
        dir,
        &with_bench(&["sensitivity"], &["--trajectories", "o/trajectories.jsonl", "--seed", "7", "--max-removed", "5", "--out", "o/sens.json"]),
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let corpus = json(&dir.path().join("o/corpus.json"));
    assert_eq!(corpus.as_array().map(Vec::len), Some(18));
    let eval = json(&dir.path().join("o/eval.json"));
    assert!(eval["accuracy"].is_f64());
    assert!(eval["weighted"]["f_score"].is_f64());
    let manifest = json(&dir.path().join("o/manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["inputs"]["o/features.csv"].as_str().map(str::len), Some(64));
    let metrics = json(&dir.path().join("o/metrics.json"));
    assert_eq!(metrics.as_array().map(Vec::len), Some(3));
    let sens = json(&dir.path().join("o/sens.json"));
    assert_eq!(sens[0]["sensitivity"].as_array().map(Vec::len), Some(6));
}

#[test]
fn same_flags_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let mut compared = 0;
    for sub in ["d", "o"] {
        for entry in std::fs::read_dir(a.path().join(sub)).unwrap() {
            let name = entry.unwrap().file_name();
            let left = std::fs::read(a.path().join(sub).join(&name)).unwrap();
            let right = std::fs::read(b.path().join(sub).join(&name)).unwrap();
            assert!(left == right, "{sub}/{name:?} differs");
            compared += 1;
        }
    }
    assert!(compared >= 18);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mallctx(dir.path(), &["ingest", "--bogus"]).status.code(), Some(1));
    assert_eq!(mallctx(dir.path(), &["cdf", "--al", "missing.csv", "--out", "x.csv"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.csv"), "a,b\n").unwrap();
    assert_eq!(mallctx(dir.path(), &["cdf", "--al", "bad.csv", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(mallctx(dir.path(), &["--help"]).status.code(), Some(0));
}
