use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unionsearch"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn unionsearch")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = run(dir, &full);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Synthetic lake, store and HNSW manifest in a fresh temp dir.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok_json(p, &["synth", "--out", "s", "--groups", "4", "--tables-per-group", "4", "--seed", "3"]);
    ok_json(p, &["embed", "--lake", "s/lake", "--out", "store.smbe", "--dim", "128"]);
    ok_json(p, &["index", "--store", "store.smbe", "--type", "hnsw", "--out", "hnsw.json"]);
    ok_json(p, &["index", "--store", "store.smbe", "--type", "lsh", "--out", "lsh.json"]);
    dir
}

fn hit_ids(v: &Value, q: usize) -> Vec<String> {
    v["queries"][q]["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["table_id"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn full_pipeline_over_synthetic_lake() {
    let dir = workspace();
    let p = dir.path();
    assert!(p.join("store.smbe.json").is_file());
    assert!(p.join("store.smbe.idf.json").is_file());
    assert!(p.join("hnsw.hnsw.json").is_file());

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(p.join("hnsw.json")).unwrap()).unwrap();
    assert_eq!(manifest["index_type"], "hnsw");
    assert!(Path::new(manifest["store_path"].as_str().unwrap()).is_absolute());

    let linear = ok_json(p, &["query", "--store", "store.smbe", "--table", "g001_t000", "--k", "3"]);
    assert_eq!(linear["config"]["mode"], "linear");
    assert_eq!(linear["config"]["k"], 3);
    let ids = hit_ids(&linear, 0);
    assert_eq!(ids.len(), 3);
    assert!(ids.iter().all(|t| t.starts_with("g001_") && t != "g001_t000"), "{ids:?}");

    for m in ["hnsw.json", "lsh.json"] {
        let v = ok_json(p, &["query", "--manifest", m, "--table", "g001_t000", "--k", "3"]);
        assert_eq!(hit_ids(&v, 0), ids, "{m}");
    }

    let bench = ok_json(p, &["bench", "--manifest", "hnsw.json", "--gt", "s/groundtruth.csv", "--k", "3"]);
    assert_eq!(bench["queries"].as_array().unwrap().len(), 16);
    assert!(bench["map"].as_f64().unwrap() > 0.95, "{}", bench["map"]);
    assert_eq!(bench["config"]["mode"], "hnsw");

    let cl = ok_json(p, &["cluster", "--store", "store.smbe", "--labels", "s/labels.csv"]);
    assert!(cl["purity"].as_f64().unwrap() > 0.9);
    let total: usize = cl["clusters"].as_array().unwrap().iter().map(|c| c.as_array().unwrap().len()).sum();
    assert_eq!(total, cl["columns"].as_u64().unwrap() as usize);
}

#[test]
fn query_csv_matches_stored_vectors() {
    let dir = workspace();
    let p = dir.path();
    let by_file = ok_json(p, &["query", "--store", "store.smbe", "--query", "s/lake/g002_t001.csv", "--k", "4"]);
    let by_id = ok_json(p, &["query", "--store", "store.smbe", "--table", "g002_t001", "--k", "4"]);
    assert_eq!(by_file["queries"][0]["query"], "g002_t001");
    assert_eq!(hit_ids(&by_file, 0), hit_ids(&by_id, 0));
    assert!(!hit_ids(&by_file, 0).contains(&"g002_t001".to_string()));
}

#[test]
fn text_output_and_config_file() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(p.join("cfg.json"), r#"{"k": 7, "query": {"k": 2}}"#).unwrap();
    let v = ok_json(p, &["--config", "cfg.json", "query", "--store", "store.smbe", "--table", "g000_t000"]);
    assert_eq!(v["config"]["k"], 2);
    assert_eq!(hit_ids(&v, 0).len(), 2);

    let out = run(p, &["query", "--store", "store.smbe", "--table", "g000_t000", "--k", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("query g000_t000"), "{text}");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn usage_errors_exit_2() {
    let dir = workspace();
    let p = dir.path();
    let cases: &[&[&str]] = &[
        &["query", "--store", "store.smbe", "--table", "g000_t000", "--k", "0"],
        &["query", "--store", "store.smbe", "--table", "g000_t000", "--tau", "1.5"],
        &["query", "--store", "store.smbe", "--table", "g000_t000", "--mode", "hnsw"],
        &["query", "--manifest", "lsh.json", "--table", "g000_t000", "--mode", "hnsw"],
        &["query", "--store", "store.smbe", "--table", "nope"],
        &["query", "--store", "missing.smbe", "--table", "g000_t000"],
        &["query", "--table", "g000_t000"],
        &["bench", "--store", "store.smbe", "--gt", "missing.csv"],
        &["cluster", "--store", "store.smbe", "--theta", "1.01"],
        &["embed", "--lake", "no_such_dir", "--out", "x.smbe"],
        &["embed", "--lake", "s/lake", "--out", "x.smbe", "--method", "bogus"],
        &["index", "--store", "store.smbe", "--type", "kd", "--out", "x.json"],
        &["--workers", "0", "synth", "--out", "w"],
        &["synth", "--out", "w", "--min-cols", "5", "--max-cols", "2"],
        &["query"],
    ];
    for args in cases {
        let out = run(p, args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn corrupt_store_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("bad.smbe"), b"SMBX\x01garbage").unwrap();
    let out = run(p, &["query", "--store", "bad.smbe", "--table", "a"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for out in ["a", "b"] {
        ok_json(p, &["synth", "--out", out, "--groups", "3", "--seed", "11"]);
    }
    let read = |d: &str| {
        let mut files: Vec<_> = std::fs::read_dir(p.join(d).join("lake"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(read("a"), read("b"));
    assert_eq!(
        std::fs::read(p.join("a/groundtruth.csv")).unwrap(),
        std::fs::read(p.join("b/groundtruth.csv")).unwrap()
    );
}

#[test]
fn seeded_hnsw_build_is_reproducible() {
    let dir = workspace();
    let p = dir.path();
    ok_json(p, &["index", "--store", "store.smbe", "--type", "hnsw", "--seed", "9", "--out", "a.json"]);
    ok_json(p, &["index", "--store", "store.smbe", "--type", "hnsw", "--seed", "9", "--out", "b.json"]);
    assert_eq!(std::fs::read(p.join("a.hnsw.json")).unwrap(), std::fs::read(p.join("b.hnsw.json")).unwrap());
}

#[test]
fn bench_records_repeats() {
    let dir = workspace();
    let p = dir.path();
    let v = ok_json(p, &["bench", "--store", "store.smbe", "--gt", "s/groundtruth.csv", "--repeats", "5"]);
    assert_eq!(v["repeats"], 5);
    assert_eq!(v["config"]["repeats"], 5);
    assert!(v["mean_time_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn orthogonal_groups_form_two_clusters() {
    use unionsearch_core::embed::write_store;
    use unionsearch_core::{ColumnEmbedding, EmbeddingStore};
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let store = EmbeddingStore::from_entries(
        4,
        [
            ColumnEmbedding::new("a", 0, vec![1.0, 0.0, 0.0, 0.0]),
            ColumnEmbedding::new("a", 1, vec![0.0, 0.0, 1.0, 0.0]),
            ColumnEmbedding::new("b", 0, vec![0.9, 0.1, 0.0, 0.0]),
            ColumnEmbedding::new("b", 1, vec![0.0, 0.0, 0.95, 0.05]),
        ],
    )
    .unwrap();
    write_store(&store, &p.join("o.smbe")).unwrap();
    std::fs::write(p.join("labels.csv"), "table_id,col_idx,label\na,0,x\nb,0,x\na,1,y\nb,1,y\n").unwrap();
    let v = ok_json(p, &["cluster", "--store", "o.smbe", "--labels", "labels.csv"]);
    assert_eq!(v["n_clusters"], 2);
    assert_eq!(v["purity"], 1.0);
}

#[test]
fn linear_and_hnsw_agree_on_planted_top1() {
    use unionsearch_core::embed::write_store;
    use unionsearch_core::synth::{planted_duplicate, PlantedSpec};
    use unionsearch_core::{ColumnEmbedding, EmbeddingStore};
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let lake = planted_duplicate(&PlantedSpec {
        n_tables: 300,
        seed: 5,
        ..PlantedSpec::default()
    })
    .unwrap();
    let mut entries: Vec<ColumnEmbedding> = lake.store.entries().to_vec();
    for (i, v) in lake.query.columns.iter().enumerate() {
        entries.push(ColumnEmbedding::new("query", i, v.clone()));
    }
    let store = EmbeddingStore::from_entries(lake.store.dim(), entries).unwrap();
    write_store(&store, &p.join("p.smbe")).unwrap();
    ok_json(p, &["index", "--store", "p.smbe", "--type", "hnsw", "--out", "p.json"]);
    let lin = ok_json(p, &["query", "--store", "p.smbe", "--table", "query", "--k", "1"]);
    let ann = ok_json(p, &["query", "--manifest", "p.json", "--table", "query", "--k", "1"]);
    assert_eq!(hit_ids(&lin, 0), vec![lake.planted.clone()]);
    assert_eq!(hit_ids(&ann, 0), hit_ids(&lin, 0));
}
