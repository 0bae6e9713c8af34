mod common;

use std::collections::BTreeMap;

use unionsearch_core::catalog::{load_lake, load_table};
use unionsearch_core::embed::{embed_catalog, embed_table, read_store, write_store};
use unionsearch_core::eval::{run_benchmark, GroundTruth};
use unionsearch_core::preprocess::compute_idf;
use unionsearch_core::search::topk_search;
use unionsearch_core::synth::{generate, SynthSpec};
use unionsearch_core::{cosine, EmbedConfig, QuerySpec, QueryTable};

#[test]
fn lake_on_disk_to_ranked_results() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_groups: 5,
        tables_per_group: 4,
        seed: 3,
        ..SynthSpec::default()
    };
    generate(&spec).unwrap().write(dir.path()).unwrap();
    std::fs::write(dir.path().join("lake/notes.txt"), "ignored").unwrap();

    let catalog = load_lake(&dir.path().join("lake")).unwrap();
    assert_eq!(catalog.len(), 20);
    let stats = compute_idf(&catalog);
    let cfg = EmbedConfig::default();
    let store = embed_catalog(&catalog, &stats, &cfg).unwrap();
    assert_eq!(store.len(), catalog.total_columns);

    let path = dir.path().join("e.smbe");
    write_store(&store, &path).unwrap();
    let store = read_store(&path).unwrap();

    // Re-embedding a lake table from its CSV reproduces the stored vectors.
    let table = load_table(&dir.path().join("lake/g002_t001.csv")).unwrap();
    let query = QueryTable {
        table_id: Some(table.table_id.clone()),
        columns: embed_table(&table, &stats, &cfg).into_iter().map(|e| e.vector).collect(),
    };
    assert_eq!(query, QueryTable::from_store(&store, "g002_t001").unwrap());

    let out = topk_search(&query, &store, None, &QuerySpec { k: 3, ..QuerySpec::default() }).unwrap();
    let ids = out.results.table_ids();
    assert_eq!(ids.len(), 3);
    assert!(ids.iter().all(|id| id.starts_with("g002")), "{:?}", out.results);

    let gt = GroundTruth::load(&dir.path().join("groundtruth.csv")).unwrap();
    let queries: Vec<QueryTable> = store.table_ids().map(|id| QueryTable::from_store(&store, id).unwrap()).collect();
    let report = run_benchmark(&store, None, &queries, &gt, &QuerySpec { k: 3, ..QuerySpec::default() }, 2, serde_json::json!({})).unwrap();
    assert_eq!(report.queries.len(), 20);
    assert!((report.map - 1.0).abs() < 1e-12);
    assert!((report.mean_recall - 1.0).abs() < 1e-12);
}

#[test]
fn disjoint_groups_have_no_qualifying_cross_edges() {
    let (store, _) = common::embedded_synth(&SynthSpec {
        n_groups: 2,
        tables_per_group: 6,
        seed: 8,
        ..SynthSpec::default()
    });
    let mut cross = 0;
    for a in store.entries() {
        for b in store.entries() {
            if a.table_id[..4] != b.table_id[..4] && cosine(&a.vector, &b.vector).unwrap() >= 0.5 {
                cross += 1;
            }
        }
    }
    assert_eq!(cross, 0);
}

#[test]
fn bad_files_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("good.csv"), "a,b\n1,2\n").unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    std::fs::create_dir(dir.path().join("sub")).unwrap();
    std::fs::write(dir.path().join("sub/good.csv"), "x\ny\n").unwrap();
    let catalog = load_lake(dir.path()).unwrap();
    let ids: Vec<&str> = catalog.iter().map(|t| t.table_id.as_str()).collect();
    assert_eq!(ids, ["good", "good~2"]);
    assert_eq!(catalog.skipped.len(), 1);
    assert_eq!(catalog.total_columns, 3);
}

#[test]
fn every_sampling_method_embeds_a_lake() {
    let lake = generate(&SynthSpec { n_groups: 3, tables_per_group: 3, ..SynthSpec::default() }).unwrap();
    let catalog = unionsearch_core::LakeCatalog::from_tables(lake.tables);
    let stats = compute_idf(&catalog);
    let mut sizes = BTreeMap::new();
    for method in unionsearch_core::SamplingMethod::ALL {
        let cfg = EmbedConfig { method, max_len: 32, ..EmbedConfig::default() };
        let store = embed_catalog(&catalog, &stats, &cfg).unwrap();
        for e in store.entries() {
            assert!((e.l2_norm() - 1.0).abs() < 1e-5, "{method}");
        }
        sizes.insert(method.as_str(), store.len());
    }
    assert!(sizes.values().all(|&n| n == catalog.total_columns));
}
