//! Benchmark harness: ground truth, ranked-retrieval metrics, timed query
//! runs and column clustering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{AnnIndex, HnswIndex, HnswParams};
use crate::embed::{dot, ColumnKey, EmbeddingStore};
use crate::error::{Error, Result};
use crate::search::{topk_linear, topk_search, Pruning, QuerySpec, QueryTable, Retrieval, SearchResultList};

/// Relevant lake tables per query table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub relevant: BTreeMap<String, BTreeSet<String>>,
}

fn strip_csv(id: &str) -> &str {
    id.strip_suffix(".csv").unwrap_or(id)
}

impl GroundTruth {
    pub fn insert(&mut self, query: impl Into<String>, table: impl Into<String>) {
        self.relevant.entry(query.into()).or_default().insert(table.into());
    }

    pub fn get(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query)
    }

    /// Reads a `query_table,data_lake_table` CSV. A trailing `.csv` on ids is
    /// dropped and self-pairs are ignored, since search never returns the
    /// query table itself.
    pub fn load(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(csv_err)?;
        let headers = reader.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Format(format!("{}: missing `{name}` column", path.display())))
        };
        let (q, t) = (col("query_table")?, col("data_lake_table")?);
        let mut gt = GroundTruth::default();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let (Some(query), Some(table)) = (record.get(q), record.get(t)) else {
                continue;
            };
            let (query, table) = (strip_csv(query.trim()), strip_csv(table.trim()));
            if query.is_empty() || table.is_empty() {
                continue;
            }
            if query == table {
                gt.relevant.entry(query.to_string()).or_default();
            } else {
                gt.insert(query, table);
            }
        }
        Ok(gt)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rows = vec![["query_table".to_string(), "data_lake_table".to_string()]];
        for (q, tables) in &self.relevant {
            rows.extend(tables.iter().map(|t| [q.clone(), t.clone()]));
        }
        for row in rows {
            w.write_record(&row).map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Ids (queries or relevant tables) that do not name a known table.
    /// They are kept, so they still count in recall denominators.
    pub fn unresolved<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let known: BTreeSet<&str> = known.into_iter().collect();
        let mut out = BTreeSet::new();
        for (q, tables) in &self.relevant {
            for id in std::iter::once(q).chain(tables) {
                if !known.contains(id.as_str()) {
                    out.insert(id.clone());
                }
            }
        }
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
}

/// AP@k, P@k and R@k of a ranking.
///
/// `P@k = hits/k`, `R@k = hits/|relevant|`, and AP@k averages the precision
/// at each relevant rank within the top `k`, normalized by
/// `min(k, |relevant|)`. All three are 0 when nothing is relevant.
pub fn metrics_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> Metrics {
    assert!(k >= 1, "k must be >= 1");
    if relevant.is_empty() {
        return Metrics {
            ap: 0.0,
            precision: 0.0,
            recall: 0.0,
        };
    }
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (i, id) in ranked.iter().take(k).enumerate() {
        if relevant.contains(id.as_ref()) {
            hits += 1;
            precision_sum += hits as f64 / (i + 1) as f64;
        }
    }
    Metrics {
        ap: precision_sum / k.min(relevant.len()) as f64,
        precision: hits as f64 / k as f64,
        recall: hits as f64 / relevant.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub query: String,
    pub metrics: Metrics,
    /// Mean wall time over the repeats, in milliseconds.
    pub time_ms: f64,
    pub exact_calls: usize,
    pub results: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: serde_json::Value,
    pub k: usize,
    pub repeats: usize,
    pub queries: Vec<QueryReport>,
    pub skipped: Vec<String>,
    pub map: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_time_ms: f64,
    pub p95_time_ms: f64,
}

impl BenchReport {
    /// Plain-text table of the per-query rows and the aggregates.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<32} {:>8} {:>8} {:>8} {:>10}\n",
            "query",
            format!("AP@{}", self.k),
            format!("P@{}", self.k),
            format!("R@{}", self.k),
            "time(ms)"
        );
        for q in &self.queries {
            out += &format!(
                "{:<32} {:>8.4} {:>8.4} {:>8.4} {:>10.3}\n",
                q.query, q.metrics.ap, q.metrics.precision, q.metrics.recall, q.time_ms
            );
        }
        out += &format!(
            "{:<32} {:>8.4} {:>8.4} {:>8.4} {:>10.3}\n",
            format!("MEAN ({} queries)", self.queries.len()),
            self.map,
            self.mean_precision,
            self.mean_recall,
            self.mean_time_ms
        );
        out += &format!("p95 query time: {:.3} ms\n", self.p95_time_ms);
        if !self.skipped.is_empty() {
            out += &format!("skipped: {}\n", self.skipped.join(", "));
        }
        out
    }
}

/// Runs one query the way the benchmark does: plain linear scan when
/// retrieval is linear and pruning is off, filter-and-verify otherwise.
pub fn run_query(
    query: &QueryTable,
    store: &EmbeddingStore,
    index: Option<&AnnIndex>,
    spec: &QuerySpec,
) -> Result<crate::search::SearchOutcome> {
    if spec.retrieval == Retrieval::Linear && spec.pruning == Pruning::Off {
        topk_linear(query, store, spec)
    } else {
        topk_search(query, store, index, spec)
    }
}

/// Runs every query `repeats` times and scores the rankings against `gt`.
///
/// Queries run in parallel on the current rayon pool; each query's time is
/// the mean over its repeats and excludes index construction. Queries
/// without an id or without ground truth are skipped with a warning.
pub fn run_benchmark(
    store: &EmbeddingStore,
    index: Option<&AnnIndex>,
    queries: &[QueryTable],
    gt: &GroundTruth,
    spec: &QuerySpec,
    repeats: usize,
    config: serde_json::Value,
) -> Result<BenchReport> {
    spec.validate()?;
    let repeats = repeats.max(1);
    let mut skipped = Vec::new();
    let mut runnable = Vec::new();
    for q in queries {
        match q.table_id.as_deref() {
            Some(id) if gt.get(id).is_some() => runnable.push((id, q)),
            other => {
                let name = other.unwrap_or("<unnamed>").to_string();
                warn!("no ground truth for query {name}; skipped");
                skipped.push(name);
            }
        }
    }

    let reports: Vec<QueryReport> = runnable
        .par_iter()
        .map(|(id, q)| {
            let mut total = 0.0;
            let mut last: Option<(SearchResultList, usize)> = None;
            for _ in 0..repeats {
                let start = Instant::now();
                let out = run_query(q, store, index, spec)?;
                total += start.elapsed().as_secs_f64() * 1e3;
                last = Some((out.results, out.stats.exact_calls));
            }
            let (results, exact_calls) = last.expect("at least one repeat");
            let ranked = results.table_ids();
            Ok(QueryReport {
                query: id.to_string(),
                metrics: metrics_at_k(&ranked, gt.get(id).unwrap(), spec.k),
                time_ms: total / repeats as f64,
                exact_calls,
                results: ranked,
            })
        })
        .collect::<Result<_>>()?;

    let n = reports.len().max(1) as f64;
    let mean = |f: fn(&QueryReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mut times: Vec<f64> = reports.iter().map(|r| r.time_ms).collect();
    times.sort_by(f64::total_cmp);
    let p95 = if times.is_empty() {
        0.0
    } else {
        times[((0.95 * times.len() as f64).ceil() as usize).clamp(1, times.len()) - 1]
    };
    Ok(BenchReport {
        config,
        k: spec.k,
        repeats,
        map: mean(|r| r.metrics.ap),
        mean_precision: mean(|r| r.metrics.precision),
        mean_recall: mean(|r| r.metrics.recall),
        mean_time_ms: mean(|r| r.time_ms),
        p95_time_ms: p95,
        queries: reports,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub theta: f64,
    /// Above this many columns, similar pairs come from an HNSW index
    /// instead of all-pairs enumeration.
    pub exact_pair_limit: usize,
    /// Neighbors fetched per column in the HNSW path.
    pub ann_neighbors: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            theta: 0.6,
            exact_pair_limit: 100_000,
            ann_neighbors: 32,
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the graph linking columns with cosine above
/// `theta`. Every column lands in exactly one cluster; clusters are ordered
/// by their first column in store order.
pub fn cluster_columns(store: &EmbeddingStore, cfg: &ClusterConfig) -> Result<Vec<Vec<ColumnKey>>> {
    if !(cfg.theta > 0.0 && cfg.theta <= 1.0) {
        return Err(Error::InvalidParam(format!("theta must be in (0, 1], got {}", cfg.theta)));
    }
    let n = store.len();
    let unit: Vec<Vec<f32>> = store
        .entries()
        .iter()
        .map(|e| {
            let mut v = e.vector.clone();
            crate::embed::l2_normalize(&mut v);
            v
        })
        .collect();

    let edges: Vec<(usize, usize)> = if n <= cfg.exact_pair_limit {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let unit = &unit;
                (i + 1..n).filter_map(move |j| (dot(&unit[i], &unit[j]) as f64 >= cfg.theta).then_some((i, j)))
            })
            .collect()
    } else {
        let index = HnswIndex::build(store, HnswParams::default(), 0)?;
        let mut edges = Vec::new();
        for i in 0..n {
            for (j, sim) in index.search(store, &unit[i], cfg.ann_neighbors)? {
                if j != i && sim >= cfg.theta {
                    edges.push((i, j));
                }
            }
        }
        edges
    };

    let mut ds = DisjointSet::new(n);
    for (a, b) in edges {
        ds.union(a, b);
    }
    let mut clusters: BTreeMap<usize, Vec<ColumnKey>> = BTreeMap::new();
    for i in 0..n {
        let root = ds.find(i);
        clusters.entry(root).or_default().push(store.entry(i).key());
    }
    Ok(clusters.into_values().collect())
}

/// Fraction of labeled columns whose label is their cluster's majority
/// label. Unlabeled columns are ignored.
pub fn purity(clusters: &[Vec<ColumnKey>], labels: &HashMap<ColumnKey, String>) -> f64 {
    let mut majority_total = 0usize;
    let mut labeled = 0usize;
    for cluster in clusters {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for key in cluster {
            if let Some(label) = labels.get(key) {
                *counts.entry(label).or_insert(0) += 1;
                labeled += 1;
            }
        }
        majority_total += counts.values().copied().max().unwrap_or(0);
    }
    if labeled == 0 {
        0.0
    } else {
        majority_total as f64 / labeled as f64
    }
}

/// Reads a `table_id,col_idx,label` CSV of column types.
pub fn load_labels(path: &Path) -> Result<HashMap<ColumnKey, String>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut labels = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let (Some(table), Some(col), Some(label)) = (record.get(0), record.get(1), record.get(2)) else {
            return Err(Error::Format(format!("{}: expected table_id,col_idx,label", path.display())));
        };
        let col: usize = col
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad column index `{col}`", path.display())))?;
        labels.insert(ColumnKey::new(table.trim(), col), label.to_string());
    }
    Ok(labels)
}
