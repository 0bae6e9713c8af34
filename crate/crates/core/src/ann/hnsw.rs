//! Hierarchical navigable small world graph under cosine distance.
//!
//! Nodes are store entries, inserted in store order. Each node draws a top
//! layer from an exponential distribution (seeded), so the whole build is
//! reproducible for a given store and seed. A new node picks its links with
//! the diversity heuristic, up to `m` on upper layers and `2m` on layer 0.
//! The reverse links go into the neighbors' lists, which drop their farthest
//! entry when over capacity.

use std::cmp::{Ordering, Reverse};
use std::cell::RefCell;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{dot, ColumnEmbedding, EmbeddingStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 16,
            ef_construction: 100,
            ef_search: 64,
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::InvalidParam(format!("bad HNSW parameters {self:?}")));
        }
        Ok(())
    }
}

/// Distance to a node, ordered by distance then node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    dist: f32,
    id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HnswIndex {
    params: HnswParams,
    seed: u64,
    dim: usize,
    entry: Option<u32>,
    max_level: usize,
    /// `links[node][level]` for levels `0..=top level of node`.
    links: Vec<Vec<Vec<u32>>>,
    /// Distances parallel to `links`, kept only while building.
    #[serde(skip)]
    link_dists: Vec<Vec<Vec<f32>>>,
    /// `1 / ‖v‖`, or 0 for zero vectors.
    inv_norms: Vec<f32>,
}

struct Graph<'a> {
    entries: &'a [ColumnEmbedding],
    inv_norms: &'a [f32],
}

impl Graph<'_> {
    fn vector(&self, id: u32) -> &[f32] {
        &self.entries[id as usize].vector
    }

    fn dist_to(&self, q: &[f32], q_inv: f32, id: u32) -> f32 {
        let id = id as usize;
        1.0 - dot(q, &self.entries[id].vector) * q_inv * self.inv_norms[id]
    }
}

/// Visited marks as generation stamps, reused across searches on a thread.
struct Visited {
    stamps: Vec<u32>,
    generation: u32,
}

thread_local! {
    static VISITED: RefCell<Option<Visited>> = const { RefCell::new(None) };
}

impl Visited {
    fn take(n: usize) -> Self {
        let mut v = VISITED
            .with(|c| c.borrow_mut().take())
            .unwrap_or(Visited {
                stamps: Vec::new(),
                generation: 0,
            });
        if v.stamps.len() < n {
            v.stamps.resize(n, 0);
        }
        v.generation = v.generation.wrapping_add(1);
        if v.generation == 0 {
            v.stamps.fill(0);
            v.generation = 1;
        }
        v
    }

    /// True if `id` was not yet visited.
    fn insert(&mut self, id: u32) -> bool {
        let slot = &mut self.stamps[id as usize];
        let fresh = *slot != self.generation;
        *slot = self.generation;
        fresh
    }

    fn give_back(self) {
        VISITED.with(|c| *c.borrow_mut() = Some(self));
    }
}

fn inv_norm(v: &[f32]) -> f32 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        1.0 / n
    } else {
        0.0
    }
}

impl HnswIndex {
    pub fn build(store: &EmbeddingStore, params: HnswParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut index = HnswIndex {
            params,
            seed,
            dim: store.dim(),
            entry: None,
            max_level: 0,
            links: Vec::with_capacity(store.len()),
            link_dists: Vec::with_capacity(store.len()),
            inv_norms: store.entries().iter().map(|e| inv_norm(&e.vector)).collect(),
        };
        let inv_norms = std::mem::take(&mut index.inv_norms);
        let graph = Graph {
            entries: store.entries(),
            inv_norms: &inv_norms,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let level_mult = 1.0 / (params.m as f64).ln();
        for id in 0..store.len() as u32 {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let level = ((-u.ln() * level_mult).floor() as usize).min(32);
            index.insert(&graph, id, level);
        }
        index.inv_norms = inv_norms;
        index.link_dists = Vec::new();
        Ok(index)
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, graph: &Graph, id: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        self.link_dists.push(vec![Vec::new(); level + 1]);
        let Some(mut ep) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return;
        };
        let q = graph.vector(id);
        let q_inv = graph.inv_norms[id as usize];
        let mut ep_dist = graph.dist_to(q, q_inv, ep);
        for lc in (level + 1..=self.max_level).rev() {
            (ep, ep_dist) = self.greedy_step(graph, q, q_inv, ep, ep_dist, lc);
        }
        let mut entry_points = vec![Scored { dist: ep_dist, id: ep }];
        for lc in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(graph, q, q_inv, &entry_points, self.params.ef_construction, lc);
            let chosen = self.select_neighbors(graph, &found, self.max_links(lc));
            self.links[id as usize][lc] = chosen.iter().map(|s| s.id).collect();
            self.link_dists[id as usize][lc] = chosen.iter().map(|s| s.dist).collect();
            for s in &chosen {
                self.link(s.id, id, s.dist, lc);
            }
            entry_points = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
    }

    /// Adds `new` to `node`'s list at `level`. A full list drops its
    /// farthest link if `new` is closer.
    fn link(&mut self, node: u32, new: u32, dist: f32, level: usize) {
        let cap = self.max_links(level);
        let list = &mut self.links[node as usize][level];
        let dists = &mut self.link_dists[node as usize][level];
        if list.len() < cap {
            list.push(new);
            dists.push(dist);
            return;
        }
        let (worst, &worst_dist) = dists
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("full list is nonempty");
        if dist < worst_dist {
            list[worst] = new;
            dists[worst] = dist;
        }
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every already kept neighbor; top up with the closest pruned
    /// candidates. `candidates` must be sorted by distance.
    fn select_neighbors(&self, graph: &Graph, candidates: &[Scored], m: usize) -> Vec<Scored> {
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &c in candidates {
            if kept.len() >= m {
                break;
            }
            let cv = graph.vector(c.id);
            let c_inv = graph.inv_norms[c.id as usize];
            let diverse = kept.iter().all(|k| graph.dist_to(cv, c_inv, k.id) > c.dist);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy_step(&self, graph: &Graph, q: &[f32], q_inv: f32, mut ep: u32, mut ep_dist: f32, level: usize) -> (u32, f32) {
        loop {
            let mut improved = false;
            for &n in &self.links[ep as usize][level] {
                let d = graph.dist_to(q, q_inv, n);
                if (Scored { dist: d, id: n }) < (Scored { dist: ep_dist, id: ep }) {
                    ep = n;
                    ep_dist = d;
                    improved = true;
                }
            }
            if !improved {
                return (ep, ep_dist);
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` nodes sorted by distance.
    fn search_layer(&self, graph: &Graph, q: &[f32], q_inv: f32, entry: &[Scored], ef: usize, level: usize) -> Vec<Scored> {
        let mut visited = Visited::take(self.links.len().max(graph.entries.len()));
        for s in entry {
            visited.insert(s.id);
        }
        let mut frontier: BinaryHeap<Reverse<Scored>> = entry.iter().copied().map(Reverse).collect();
        let mut best: BinaryHeap<Scored> = entry.iter().copied().collect();
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(cur)) = frontier.pop() {
            if best.len() >= ef && cur > *best.peek().unwrap() {
                break;
            }
            for &n in &self.links[cur.id as usize][level] {
                if !visited.insert(n) {
                    continue;
                }
                let cand = Scored {
                    dist: graph.dist_to(q, q_inv, n),
                    id: n,
                };
                if best.len() < ef || cand < *best.peek().unwrap() {
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        visited.give_back();
        best.into_sorted_vec()
    }

    /// Approximate `k` nearest store entries to `q`, as `(offset, cosine)`
    /// sorted by decreasing similarity. The beam width is
    /// `max(ef_search, k)`.
    pub fn search(&self, store: &EmbeddingStore, q: &[f32], k: usize) -> Result<Vec<(usize, f64)>> {
        self.search_ef(store, q, k, self.params.ef_search.max(k))
    }

    pub fn search_ef(&self, store: &EmbeddingStore, q: &[f32], k: usize, ef: usize) -> Result<Vec<(usize, f64)>> {
        self.check_store(store)?;
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        let Some(mut ep) = self.entry else {
            return Ok(Vec::new());
        };
        let graph = Graph {
            entries: store.entries(),
            inv_norms: &self.inv_norms,
        };
        let q_inv = inv_norm(q);
        let mut ep_dist = graph.dist_to(q, q_inv, ep);
        for lc in (1..=self.max_level).rev() {
            (ep, ep_dist) = self.greedy_step(&graph, q, q_inv, ep, ep_dist, lc);
        }
        let found = self.search_layer(&graph, q, q_inv, &[Scored { dist: ep_dist, id: ep }], ef.max(k), 0);
        Ok(found
            .into_iter()
            .take(k)
            .map(|s| (s.id as usize, 1.0 - s.dist as f64))
            .collect())
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    /// Overrides the query-time beam width.
    pub fn set_ef_search(&mut self, ef: usize) {
        self.params.ef_search = ef.max(1);
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Neighbor list of `node` at `level` (empty above the node's top level).
    pub fn neighbors(&self, node: usize, level: usize) -> &[u32] {
        self.links[node].get(level).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of nodes reachable from the entry point on layer 0.
    pub fn reachable_at_base(&self) -> usize {
        let Some(entry) = self.entry else { return 0 };
        let mut seen = vec![false; self.links.len()];
        let mut stack = vec![entry];
        seen[entry as usize] = true;
        let mut count = 0;
        while let Some(n) = stack.pop() {
            count += 1;
            for &m in &self.links[n as usize][0] {
                if !std::mem::replace(&mut seen[m as usize], true) {
                    stack.push(m);
                }
            }
        }
        count
    }

    pub(crate) fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        if store.dim() != self.dim || store.len() != self.links.len() {
            return Err(Error::InvalidParam(format!(
                "HNSW index was built over {} vectors of dim {}, store has {} of dim {}",
                self.links.len(),
                self.dim,
                store.len(),
                store.dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{l2_normalize, ColumnEmbedding};
    use rand_distr::{Distribution, StandardNormal};

    fn random_store(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingStore::from_entries(
            dim,
            (0..n).map(|i| {
                let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                l2_normalize(&mut v);
                ColumnEmbedding::new(format!("t{i:05}"), 0, v)
            }),
        )
        .unwrap()
    }

    #[test]
    fn singleton() {
        let s = random_store(1, 8, 0);
        let idx = HnswIndex::build(&s, HnswParams::default(), 0).unwrap();
        let q = vec![1.0; 8];
        let hits = idx.search(&s, &q, 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, 0);
    }

    #[test]
    fn empty_store() {
        let s = EmbeddingStore::new(8).unwrap();
        let idx = HnswIndex::build(&s, HnswParams::default(), 0).unwrap();
        assert!(idx.search(&s, &[0.0; 8], 3).unwrap().is_empty());
    }

    #[test]
    fn link_caps_and_connectivity() {
        let s = random_store(2000, 16, 3);
        let p = HnswParams {
            m: 8,
            ef_construction: 64,
            ef_search: 32,
        };
        let idx = HnswIndex::build(&s, p, 5).unwrap();
        for node in 0..idx.len() {
            assert!(idx.neighbors(node, 0).len() <= 16);
            for level in 1..=idx.max_level() {
                assert!(idx.neighbors(node, level).len() <= 8);
            }
        }
        assert_eq!(idx.reachable_at_base(), 2000);
    }

    #[test]
    fn build_is_reproducible() {
        let s = random_store(500, 16, 4);
        let a = HnswIndex::build(&s, HnswParams::default(), 42).unwrap();
        let b = HnswIndex::build(&s, HnswParams::default(), 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let s = random_store(10, 8, 0);
        let idx = HnswIndex::build(&s, HnswParams::default(), 0).unwrap();
        assert!(matches!(idx.search(&s, &[1.0; 4], 1), Err(Error::DimensionMismatch { .. })));
        let other = random_store(11, 8, 0);
        assert!(idx.search(&other, &[1.0; 8], 1).is_err());
    }
}
