use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use unionsearch_core::ann::{AnnIndex, HnswIndex, HnswParams, IndexManifest, IndexType, LshIndex, LshParams};
use unionsearch_core::catalog::{load_lake, load_table};
use unionsearch_core::embed::{embed_catalog, embed_table, read_store, write_store};
use unionsearch_core::eval::{cluster_columns, load_labels, purity, run_benchmark, run_query, ClusterConfig, GroundTruth};
use unionsearch_core::preprocess::compute_idf;
use unionsearch_core::synth::{generate, SynthSpec};
use unionsearch_core::{EmbedConfig, EmbeddingStore, Pruning, QuerySpec, QueryTable, Retrieval, SamplingMethod, TokenStats};

use crate::config::FileConfig;
use crate::{BenchArgs, CliError, ClusterArgs, EmbedArgs, IndexArgs, QueryArgs, SearchArgs, Source, SynthArgs};

pub struct Output {
    pub json: bool,
}

impl Output {
    fn emit(&self, value: &serde_json::Value, text: impl FnOnce() -> String) -> Result<(), CliError> {
        let s = if self.json {
            serde_json::to_string_pretty(value).context("serializing output")? + "\n"
        } else {
            text()
        };
        let mut stdout = std::io::stdout().lock();
        match stdout.write_all(s.as_bytes()).and_then(|_| stdout.flush()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(e.into())),
            _ => Ok(()),
        }
    }
}

/// What `embed` records next to a store so queries can be embedded the
/// same way as the lake.
#[derive(Debug, Serialize, Deserialize)]
pub struct StoreSidecar {
    pub embed: EmbedConfig,
    pub lake: PathBuf,
    pub tables: usize,
    pub columns: usize,
    pub skipped: Vec<PathBuf>,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

pub fn embed(args: &EmbedArgs, cfg: &FileConfig, out: &Output) -> Result<(), CliError> {
    let defaults = EmbedConfig::default();
    let embed_cfg = EmbedConfig {
        method: cfg.pick_parsed::<SamplingMethod>(args.method.as_deref(), "method", defaults.method)?,
        max_len: cfg.pick(args.max_len, "max_len", defaults.max_len)?,
        dim: cfg.pick(args.dim, "dim", defaults.dim)?,
        seed: cfg.pick(args.seed, "seed", defaults.seed)?,
        hash_version: defaults.hash_version,
    };
    embed_cfg.validate()?;

    let catalog = load_lake(&args.lake)?;
    info!("loaded {} tables, {} columns", catalog.len(), catalog.total_columns);
    let stats = compute_idf(&catalog);
    let store = embed_catalog(&catalog, &stats, &embed_cfg)?;
    write_store(&store, &args.out)?;

    let sidecar = StoreSidecar {
        embed: embed_cfg.clone(),
        lake: args.lake.clone(),
        tables: catalog.len(),
        columns: store.len(),
        skipped: catalog.skipped.iter().map(|(p, _)| p.clone()).collect(),
    };
    write_json(&with_suffix(&args.out, ".json"), &sidecar)?;
    write_json(&with_suffix(&args.out, ".idf.json"), &stats)?;

    out.emit(&json!({ "store": args.out, "sidecar": sidecar }), || {
        format!(
            "embedded {} columns of {} tables ({}, dim {}) into {}\n",
            store.len(),
            catalog.len(),
            embed_cfg.method,
            embed_cfg.dim,
            args.out.display()
        )
    })
}

pub fn index(args: &IndexArgs, cfg: &FileConfig, out: &Output) -> Result<(), CliError> {
    require_file(&args.store, "store")?;
    let index_type: IndexType = cfg.pick_parsed(args.index_type.as_deref(), "type", IndexType::Hnsw)?;
    let seed = cfg.pick(args.seed, "seed", 0)?;
    let store = read_store(&args.store)?;
    let index = match index_type {
        IndexType::Lsh => {
            let d = LshParams::default();
            let params = LshParams {
                hyperplanes: cfg.pick(args.hyperplanes, "hyperplanes", d.hyperplanes)?,
                bands: cfg.pick(args.bands, "bands", d.bands)?,
            };
            AnnIndex::Lsh(LshIndex::build(&store, params, seed)?)
        }
        IndexType::Hnsw => {
            let d = HnswParams::default();
            let params = HnswParams {
                m: cfg.pick(args.m, "m", d.m)?,
                ef_construction: cfg.pick(args.ef_construction, "ef_construction", d.ef_construction)?,
                ef_search: cfg.pick(args.ef_search, "ef_search", d.ef_search)?,
            };
            AnnIndex::Hnsw(HnswIndex::build(&store, params, seed)?)
        }
    };
    let type_name = match index_type {
        IndexType::Lsh => "lsh",
        IndexType::Hnsw => "hnsw",
    };
    let index_path = args.out.with_extension(format!("{type_name}.json"));
    index.save(&index_path)?;
    let store_path = std::fs::canonicalize(&args.store).with_context(|| format!("resolving {}", args.store.display()))?;
    let index_name = PathBuf::from(index_path.file_name().expect("index path has a file name"));
    let manifest = IndexManifest::for_index(&index, store_path, index_name);
    manifest.write(&args.out)?;
    let value = serde_json::to_value(&manifest).context("serializing manifest")?;
    out.emit(&value, || {
        format!(
            "built {type_name} index over {} columns: {} (manifest {})\n",
            store.len(),
            index_path.display(),
            args.out.display()
        )
    })
}

struct Loaded {
    store_path: PathBuf,
    store: EmbeddingStore,
    index: Option<AnnIndex>,
}

fn load_source(src: &Source) -> Result<Loaded, CliError> {
    match (&src.manifest, &src.store) {
        (Some(m), _) => {
            require_file(m, "manifest")?;
            let manifest = IndexManifest::read(m)?;
            let store_path = manifest.resolve(m, &manifest.store_path);
            let index_path = manifest.resolve(m, &manifest.index_path);
            require_file(&store_path, "store")?;
            require_file(&index_path, "index")?;
            let store = read_store(&store_path)?;
            let index = AnnIndex::load(&index_path)?;
            Ok(Loaded {
                store_path,
                store,
                index: Some(index),
            })
        }
        (None, Some(s)) => {
            require_file(s, "store")?;
            Ok(Loaded {
                store_path: s.clone(),
                store: read_store(s)?,
                index: None,
            })
        }
        (None, None) => Err(CliError::Usage("one of --manifest or --store is required".into())),
    }
}

fn query_spec(args: &SearchArgs, cfg: &FileConfig, loaded: &mut Loaded) -> Result<QuerySpec, CliError> {
    let d = QuerySpec::default();
    let default_mode = match &loaded.index {
        Some(AnnIndex::Lsh(_)) => Retrieval::Lsh,
        Some(AnnIndex::Hnsw(_)) => Retrieval::Hnsw,
        None => Retrieval::Linear,
    };
    let spec = QuerySpec {
        k: cfg.pick(args.k, "k", d.k)?,
        tau: cfg.pick(args.tau, "tau", d.tau)?,
        retrieval: cfg.pick_parsed(args.mode.as_deref(), "mode", default_mode)?,
        pruning: cfg.pick_parsed::<Pruning>(args.pruning.as_deref(), "pruning", d.pruning)?,
        top_n: cfg.pick(args.top_n, "top_n", d.top_n)?,
    };
    spec.validate()?;
    let matches = matches!(
        (spec.retrieval, &loaded.index),
        (Retrieval::Linear, _) | (Retrieval::Lsh, Some(AnnIndex::Lsh(_))) | (Retrieval::Hnsw, Some(AnnIndex::Hnsw(_)))
    );
    if !matches {
        return Err(CliError::Usage(format!(
            "mode `{}` needs a manifest for a {} index",
            spec.retrieval, spec.retrieval
        )));
    }
    let ef: Option<usize> = match args.ef_search {
        Some(v) => Some(v),
        None => cfg.get("ef_search")?,
    };
    if let (Some(ef), Some(AnnIndex::Hnsw(h))) = (ef, &mut loaded.index) {
        if ef == 0 {
            return Err(CliError::Usage("ef_search must be >= 1".into()));
        }
        h.set_ef_search(ef);
    }
    Ok(spec)
}

fn spec_json(spec: &QuerySpec, loaded: &Loaded) -> serde_json::Value {
    json!({
        "k": spec.k,
        "tau": spec.tau,
        "mode": spec.retrieval.to_string(),
        "pruning": spec.pruning.to_string(),
        "top_n": spec.top_n,
        "store": loaded.store_path,
        "index": loaded.index.as_ref().map(|i| json!({ "params": i.params_json(), "seed": i.seed() })),
    })
}

/// Embeds a query CSV with the lake's settings and document frequencies.
fn embed_query(path: &Path, store_path: &Path, store: &EmbeddingStore) -> Result<QueryTable, CliError> {
    require_file(path, "query table")?;
    let sidecar_path = with_suffix(store_path, ".json");
    let idf_path = with_suffix(store_path, ".idf.json");
    if !sidecar_path.is_file() || !idf_path.is_file() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "embedding a query CSV needs {} and {} (written by `embed`)",
            sidecar_path.display(),
            idf_path.display()
        )));
    }
    let sidecar: StoreSidecar = read_json(&sidecar_path)?;
    let stats: TokenStats = read_json(&idf_path)?;
    sidecar.embed.validate()?;
    if sidecar.embed.dim != store.dim() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "sidecar dim {} does not match store dim {}",
            sidecar.embed.dim,
            store.dim()
        )));
    }
    let table = load_table(path)?;
    let columns = embed_table(&table, &stats, &sidecar.embed)
        .into_iter()
        .map(|e| e.vector)
        .collect();
    Ok(QueryTable {
        table_id: Some(table.table_id),
        columns,
    })
}

pub fn query(args: &QueryArgs, cfg: &FileConfig, out: &Output) -> Result<(), CliError> {
    if args.queries.is_empty() && args.tables.is_empty() {
        return Err(CliError::Usage("give at least one --query CSV or --table id".into()));
    }
    let mut loaded = load_source(&args.source)?;
    let spec = query_spec(&args.search, cfg, &mut loaded)?;

    let mut queries = Vec::new();
    for path in &args.queries {
        queries.push((path.display().to_string(), embed_query(path, &loaded.store_path, &loaded.store)?));
    }
    for id in &args.tables {
        let q = QueryTable::from_store(&loaded.store, id)
            .ok_or_else(|| CliError::Usage(format!("table `{id}` is not in the store")))?;
        queries.push((format!("store:{id}"), q));
    }

    let mut results = Vec::new();
    let mut text = String::new();
    for (source, q) in &queries {
        let outcome = run_query(q, &loaded.store, loaded.index.as_ref(), &spec)?;
        let id = q.table_id.clone().unwrap_or_default();
        text += &format!("query {id} ({source})\n");
        for (rank, hit) in outcome.results.hits.iter().enumerate() {
            let kind = match hit.score_kind {
                unionsearch_core::ScoreKind::Exact => "",
                unionsearch_core::ScoreKind::LowerBound => " (lower bound)",
            };
            text += &format!("{:>4}. {:<40} {:.6}{kind}\n", rank + 1, hit.table_id, hit.score);
        }
        results.push(json!({
            "query": id,
            "source": source,
            "results": outcome.results.hits,
            "stats": outcome.stats,
        }));
    }
    out.emit(&json!({ "config": spec_json(&spec, &loaded), "queries": results }), || text)
}

pub fn bench(args: &BenchArgs, cfg: &FileConfig, out: &Output) -> Result<(), CliError> {
    require_file(&args.gt, "ground truth")?;
    let mut loaded = load_source(&args.source)?;
    let spec = query_spec(&args.search, cfg, &mut loaded)?;
    let repeats = cfg.pick(args.repeats, "repeats", 1usize)?;
    if repeats == 0 {
        return Err(CliError::Usage("repeats must be >= 1".into()));
    }
    let gt = GroundTruth::load(&args.gt)?;
    let unresolved = gt.unresolved(loaded.store.table_ids());
    if !unresolved.is_empty() {
        warn!("{} ground-truth ids are not in the store", unresolved.len());
    }

    let mut queries = Vec::new();
    let mut missing = Vec::new();
    for id in gt.relevant.keys() {
        match QueryTable::from_store(&loaded.store, id) {
            Some(q) => queries.push(q),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        warn!("{} queries are not in the store and were skipped", missing.len());
    }
    let mut config = spec_json(&spec, &loaded);
    config["repeats"] = json!(repeats);
    config["ground_truth"] = json!(args.gt);
    let mut report = run_benchmark(&loaded.store, loaded.index.as_ref(), &queries, &gt, &spec, repeats, config)?;
    report.skipped.extend(missing);
    let value = serde_json::to_value(&report).context("serializing report")?;
    out.emit(&value, || report.render())
}

pub fn cluster(args: &ClusterArgs, cfg: &FileConfig, out: &Output) -> Result<(), CliError> {
    let d = ClusterConfig::default();
    let cluster_cfg = ClusterConfig {
        theta: cfg.pick(args.theta, "theta", d.theta)?,
        exact_pair_limit: cfg.pick(args.exact_pair_limit, "exact_pair_limit", d.exact_pair_limit)?,
        ann_neighbors: cfg.pick(None, "ann_neighbors", d.ann_neighbors)?,
    };
    if !(cluster_cfg.theta > 0.0 && cluster_cfg.theta <= 1.0) {
        return Err(CliError::Usage(format!("theta must be in (0, 1], got {}", cluster_cfg.theta)));
    }
    require_file(&args.store, "store")?;
    let labels = match &args.labels {
        Some(p) => {
            require_file(p, "labels")?;
            Some(load_labels(p)?)
        }
        None => None,
    };
    let store = read_store(&args.store)?;
    let clusters = cluster_columns(&store, &cluster_cfg)?;
    let score = labels.as_ref().map(|l| purity(&clusters, l));
    let names: Vec<Vec<String>> = clusters
        .iter()
        .map(|c| c.iter().map(ToString::to_string).collect())
        .collect();
    let value = json!({
        "config": cluster_cfg,
        "columns": store.len(),
        "n_clusters": clusters.len(),
        "purity": score,
        "clusters": names,
    });
    out.emit(&value, || {
        let mut s = format!("{} columns in {} clusters (theta {})\n", store.len(), clusters.len(), cluster_cfg.theta);
        if let Some(p) = score {
            s += &format!("purity {p:.4}\n");
        }
        for (i, c) in names.iter().enumerate() {
            s += &format!("{i}: {}\n", c.join(" "));
        }
        s
    })
}

pub fn synth(args: &SynthArgs, cfg: &FileConfig, out: &Output) -> Result<(), CliError> {
    let d = SynthSpec::default();
    let spec = SynthSpec {
        n_groups: cfg.pick(args.groups, "groups", d.n_groups)?,
        tables_per_group: cfg.pick(args.tables_per_group, "tables_per_group", d.tables_per_group)?,
        min_cols: cfg.pick(args.min_cols, "min_cols", d.min_cols)?,
        max_cols: cfg.pick(args.max_cols, "max_cols", d.max_cols)?,
        min_rows: cfg.pick(args.min_rows, "min_rows", d.min_rows)?,
        max_rows: cfg.pick(args.max_rows, "max_rows", d.max_rows)?,
        vocab_size: cfg.pick(args.vocab_size, "vocab_size", d.vocab_size)?,
        noise_rate: cfg.pick(args.noise, "noise", d.noise_rate)?,
        seed: cfg.pick(args.seed, "seed", d.seed)?,
    };
    let lake = generate(&spec)?;
    lake.write(&args.out)?;
    let columns: usize = lake.tables.iter().map(|t| t.width()).sum();
    let value = json!({
        "config": spec,
        "lake": args.out.join("lake"),
        "ground_truth": args.out.join("groundtruth.csv"),
        "labels": args.out.join("labels.csv"),
        "tables": lake.tables.len(),
        "columns": columns,
    });
    out.emit(&value, || {
        format!(
            "wrote {} tables ({} columns) to {}\n",
            lake.tables.len(),
            columns,
            args.out.join("lake").display()
        )
    })
}
