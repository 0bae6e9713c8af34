//! Top-k table union search.
//!
//! [`topk_linear`] scores every lake table exactly. [`topk_search`] first
//! collects candidate tables (all tables, or the union of index lookups for
//! each query column) and walks them in table-id order, keeping a bounded
//! heap of the best `k`. Once the heap is full, bounds on a candidate's score
//! decide whether the exact matching is needed at all:
//!
//! * [`Pruning::ExactEquiv`] only discards a candidate whose upper bound
//!   cannot beat the current k-th score, so its ranking is identical to an
//!   exact scan of the same candidates.
//! * [`Pruning::Fast`] additionally admits a candidate whose lower bound
//!   already beats the k-th score without verifying it. Such entries carry
//!   [`ScoreKind::LowerBound`] and the ranking may differ from the exact one.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ann::AnnIndex;
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::matching::{build_graph, exact_match, lower_bound, upper_bound};

/// Slack on the upper-bound discard test. The greedy bound and the exact
/// matching sum the same weights in different orders, so an exact score can
/// exceed its bound by a few ulps.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retrieval {
    Linear,
    Lsh,
    Hnsw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pruning {
    Off,
    Fast,
    ExactEquiv,
}

impl FromStr for Retrieval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Retrieval::Linear),
            "lsh" => Ok(Retrieval::Lsh),
            "hnsw" => Ok(Retrieval::Hnsw),
            other => Err(Error::InvalidParam(format!("unknown retrieval mode `{other}`"))),
        }
    }
}

impl FromStr for Pruning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Pruning::Off),
            "fast" => Ok(Pruning::Fast),
            "exact_equiv" => Ok(Pruning::ExactEquiv),
            other => Err(Error::InvalidParam(format!("unknown pruning mode `{other}`"))),
        }
    }
}

impl fmt::Display for Retrieval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Retrieval::Linear => "linear",
            Retrieval::Lsh => "lsh",
            Retrieval::Hnsw => "hnsw",
        })
    }
}

impl fmt::Display for Pruning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pruning::Off => "off",
            Pruning::Fast => "fast",
            Pruning::ExactEquiv => "exact_equiv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub k: usize,
    pub tau: f64,
    pub retrieval: Retrieval,
    pub pruning: Pruning,
    /// Nearest columns fetched per query column from an HNSW index.
    pub top_n: usize,
}

impl Default for QuerySpec {
    fn default() -> Self {
        QuerySpec {
            k: 10,
            tau: 0.5,
            retrieval: Retrieval::Linear,
            pruning: Pruning::ExactEquiv,
            top_n: 64,
        }
    }
}

impl QuerySpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParam("k must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParam(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidParam("top_n must be >= 1".into()));
        }
        Ok(())
    }
}

/// Column vectors of a query table. A `table_id` that also names a lake
/// table excludes that table from the results.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTable {
    pub table_id: Option<String>,
    pub columns: Vec<Vec<f32>>,
}

impl QueryTable {
    /// Uses a lake table's own stored vectors as the query.
    pub fn from_store(store: &EmbeddingStore, table_id: &str) -> Option<Self> {
        let columns = store.table_vectors(table_id)?.into_iter().map(<[f32]>::to_vec).collect();
        Some(QueryTable {
            table_id: Some(table_id.to_string()),
            columns,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Exact,
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub table_id: String,
    pub score: f64,
    pub score_kind: ScoreKind,
}

impl SearchHit {
    /// Result order: higher score first, then smaller table id.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.table_id.cmp(&other.table_id))
    }
}

/// Heap entry ordered so that the worst hit is the maximum.
#[derive(Debug)]
struct Worst(SearchHit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Bounded heap of the `k` best hits with the k-th best on top.
struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Score of the k-th best hit.
    fn threshold(&self) -> f64 {
        self.heap.peek().map_or(f64::NEG_INFINITY, |w| w.0.score)
    }

    fn offer(&mut self, hit: SearchHit) {
        if !self.is_full() {
            self.heap.push(Worst(hit));
        } else if Worst(hit.clone()) < *self.heap.peek().unwrap() {
            self.heap.pop();
            self.heap.push(Worst(hit));
        }
    }

    /// Unconditionally replaces the k-th best hit.
    fn replace_top(&mut self, hit: SearchHit) {
        self.heap.pop();
        self.heap.push(Worst(hit));
    }

    fn into_sorted(self) -> Vec<SearchHit> {
        let mut hits: Vec<SearchHit> = self.heap.into_iter().map(|w| w.0).collect();
        hits.sort_by(SearchHit::rank_cmp);
        hits
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchResultList {
    pub hits: Vec<SearchHit>,
}

impl SearchResultList {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn table_ids(&self) -> Vec<String> {
        self.hits.iter().map(|h| h.table_id.clone()).collect()
    }
}

/// Work counters of one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub candidates: usize,
    pub exact_calls: usize,
    pub lb_admitted: usize,
    pub ub_discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub results: SearchResultList,
    pub stats: SearchStats,
}

fn check_query(query: &QueryTable, store: &EmbeddingStore) -> Result<()> {
    if query.columns.is_empty() {
        return Err(Error::InvalidParam("query table has no columns".into()));
    }
    for c in &query.columns {
        if c.len() != store.dim() {
            return Err(Error::DimensionMismatch {
                expected: store.dim(),
                actual: c.len(),
            });
        }
    }
    Ok(())
}

/// Exact scores for every lake table, keeping the best `k`.
pub fn topk_linear(query: &QueryTable, store: &EmbeddingStore, spec: &QuerySpec) -> Result<SearchOutcome> {
    spec.validate()?;
    check_query(query, store)?;
    let mut top = TopK::new(spec.k);
    let mut stats = SearchStats::default();
    for table_id in store.table_ids() {
        if query.table_id.as_deref() == Some(table_id) {
            continue;
        }
        stats.candidates += 1;
        let vectors = store.table_vectors(table_id).expect("listed table");
        let g = build_graph(&query.columns, &vectors, spec.tau)?;
        stats.exact_calls += 1;
        top.offer(SearchHit {
            table_id: table_id.to_string(),
            score: exact_match(&g).score,
            score_kind: ScoreKind::Exact,
        });
    }
    Ok(SearchOutcome {
        results: SearchResultList { hits: top.into_sorted() },
        stats,
    })
}

/// Candidate tables for a query, in table-id order, without the query's own
/// table.
pub fn collect_candidates(
    query: &QueryTable,
    store: &EmbeddingStore,
    index: Option<&AnnIndex>,
    spec: &QuerySpec,
) -> Result<BTreeSet<String>> {
    let mut tables: BTreeSet<String> = match spec.retrieval {
        Retrieval::Linear => store.table_ids().map(str::to_string).collect(),
        Retrieval::Lsh | Retrieval::Hnsw => {
            let index = match (spec.retrieval, index) {
                (Retrieval::Lsh, Some(i @ AnnIndex::Lsh(_))) | (Retrieval::Hnsw, Some(i @ AnnIndex::Hnsw(_))) => i,
                _ => {
                    return Err(Error::InvalidParam(format!(
                        "retrieval `{}` needs a matching index",
                        spec.retrieval
                    )))
                }
            };
            let mut tables = BTreeSet::new();
            for column in &query.columns {
                tables.extend(index.find_candidates(store, column, spec.tau, spec.top_n)?.tables);
            }
            tables
        }
    };
    if let Some(own) = &query.table_id {
        tables.remove(own);
    }
    Ok(tables)
}

/// Filter-and-verify top-k search.
pub fn topk_search(
    query: &QueryTable,
    store: &EmbeddingStore,
    index: Option<&AnnIndex>,
    spec: &QuerySpec,
) -> Result<SearchOutcome> {
    spec.validate()?;
    check_query(query, store)?;
    let candidates = collect_candidates(query, store, index, spec)?;
    let mut top = TopK::new(spec.k);
    let mut stats = SearchStats {
        candidates: candidates.len(),
        ..SearchStats::default()
    };

    for table_id in candidates {
        let vectors = store.table_vectors(&table_id).expect("candidate from store");
        let g = build_graph(&query.columns, &vectors, spec.tau)?;
        let exact_hit = |stats: &mut SearchStats| {
            stats.exact_calls += 1;
            SearchHit {
                table_id: table_id.clone(),
                score: exact_match(&g).score,
                score_kind: ScoreKind::Exact,
            }
        };
        if !top.is_full() {
            let hit = exact_hit(&mut stats);
            top.offer(hit);
            continue;
        }
        let x = top.threshold();
        match spec.pruning {
            Pruning::Off => {
                let hit = exact_hit(&mut stats);
                top.offer(hit);
            }
            Pruning::ExactEquiv => {
                // Later candidates have larger ids, so a tie with the k-th
                // score never displaces it.
                if g.edges().is_empty() || upper_bound(&g) + BOUND_SLACK <= x {
                    stats.ub_discarded += 1;
                    continue;
                }
                let hit = exact_hit(&mut stats);
                top.offer(hit);
            }
            Pruning::Fast => {
                let lb = lower_bound(&g);
                if lb > x {
                    stats.lb_admitted += 1;
                    top.replace_top(SearchHit {
                        table_id: table_id.clone(),
                        score: lb,
                        score_kind: ScoreKind::LowerBound,
                    });
                } else if upper_bound(&g) <= x {
                    stats.ub_discarded += 1;
                } else {
                    let hit = exact_hit(&mut stats);
                    if hit.score > x {
                        top.replace_top(hit);
                    }
                }
            }
        }
    }
    Ok(SearchOutcome {
        results: SearchResultList { hits: top.into_sorted() },
        stats,
    })
}
