//! Table unionability by maximum-weight bipartite matching.
//!
//! Columns of the query table `S` form the left side and columns of a lake
//! table `T` the right side. An edge joins two columns whose similarity is at
//! least `tau`; the table score `U(S, T)` is the weight of a maximum-weight
//! matching. Two greedy passes over the edges in descending weight give cheap
//! bounds: [`upper_bound`] ignores the one-to-one constraint and
//! [`lower_bound`] enforces it greedily.

use serde::{Deserialize, Serialize};

use crate::embed::cosine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub left: usize,
    pub right: usize,
    pub weight: f64,
}

/// Thresholded bipartite similarity graph.
///
/// Edges are kept sorted by weight descending, ties broken by
/// `(left, right)` ascending, which is the order both greedy bounds use.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionabilityGraph {
    left_size: usize,
    right_size: usize,
    edges: Vec<Edge>,
    tau: f64,
}

impl UnionabilityGraph {
    /// Builds a graph from precomputed similarities, keeping those `>= tau`.
    pub fn from_scores(
        left_size: usize,
        right_size: usize,
        scores: impl IntoIterator<Item = (usize, usize, f64)>,
        tau: f64,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for (left, right, weight) in scores {
            if left >= left_size || right >= right_size {
                return Err(Error::InvalidParam(format!(
                    "edge ({left}, {right}) outside a {left_size}x{right_size} graph"
                )));
            }
            if !weight.is_finite() {
                return Err(Error::InvalidParam(format!("edge ({left}, {right}) has weight {weight}")));
            }
            if weight >= tau {
                edges.push(Edge { left, right, weight });
            }
        }
        edges.sort_by(|a, b| {
            b.weight
                .total_cmp(&a.weight)
                .then(a.left.cmp(&b.left))
                .then(a.right.cmp(&b.right))
        });
        let mut pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.left, e.right)).collect();
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParam("duplicate edge".into()));
        }
        Ok(UnionabilityGraph {
            left_size,
            right_size,
            edges,
            tau,
        })
    }

    pub fn left_size(&self) -> usize {
        self.left_size
    }

    pub fn right_size(&self) -> usize {
        self.right_size
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Edges in descending weight order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weight(&self, left: usize, right: usize) -> Option<f64> {
        self.edges
            .iter()
            .find(|e| e.left == left && e.right == right)
            .map(|e| e.weight)
    }

    /// The same graph with the sides swapped.
    pub fn transposed(&self) -> Self {
        let scores = self.edges.iter().map(|e| (e.right, e.left, e.weight));
        Self::from_scores(self.right_size, self.left_size, scores, self.tau)
            .expect("transposing a valid graph")
    }
}

/// Connects column `i` of `s` to column `j` of `t` when their cosine is at
/// least `tau`.
pub fn build_graph<A, B>(s: &[A], t: &[B], tau: f64) -> Result<UnionabilityGraph>
where
    A: AsRef<[f32]>,
    B: AsRef<[f32]>,
{
    if s.is_empty() || t.is_empty() {
        return Err(Error::InvalidParam("both tables need at least one column".into()));
    }
    let mut scores = Vec::with_capacity(s.len() * t.len());
    for (i, a) in s.iter().enumerate() {
        for (j, b) in t.iter().enumerate() {
            scores.push((i, j, cosine(a.as_ref(), b.as_ref())?));
        }
    }
    UnionabilityGraph::from_scores(s.len(), t.len(), scores, tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub score: f64,
    pub pairs: Vec<(usize, usize)>,
}

/// Maximum-weight matching (not necessarily perfect) of the graph.
///
/// Only vertices touched by an edge take part. They are padded to a square
/// assignment problem where non-edges cost 0, and solved with the
/// shortest-augmenting-path Hungarian method in `O(n^3)`. Edges with
/// non-positive weight are never worth taking and are dropped.
pub fn exact_match(g: &UnionabilityGraph) -> MatchResult {
    let edges: Vec<&Edge> = g.edges.iter().filter(|e| e.weight > 0.0).collect();
    if edges.is_empty() {
        return MatchResult {
            score: 0.0,
            pairs: Vec::new(),
        };
    }

    let compact = |ids: &mut Vec<usize>| {
        ids.sort_unstable();
        ids.dedup();
    };
    let mut rows: Vec<usize> = edges.iter().map(|e| e.left).collect();
    let mut cols: Vec<usize> = edges.iter().map(|e| e.right).collect();
    compact(&mut rows);
    compact(&mut cols);

    let n = rows.len().max(cols.len());
    let mut weight = vec![0.0f64; n * n];
    for e in &edges {
        let r = rows.binary_search(&e.left).unwrap();
        let c = cols.binary_search(&e.right).unwrap();
        weight[r * n + c] = e.weight;
    }

    let assignment = hungarian_max(&weight, n);
    let mut pairs = Vec::new();
    let mut score = 0.0;
    for (r, &c) in assignment.iter().enumerate() {
        let w = weight[r * n + c];
        if r < rows.len() && c < cols.len() && w > 0.0 {
            pairs.push((rows[r], cols[c]));
            score += w;
        }
    }
    pairs.sort_unstable();
    MatchResult { score, pairs }
}

/// Solves the square assignment problem maximizing total weight.
/// Returns the column assigned to each row.
fn hungarian_max(weight: &[f64], n: usize) -> Vec<usize> {
    // Potentials-based Hungarian algorithm on costs = -weight, 1-indexed with
    // column 0 as a virtual source.
    let cost = |i: usize, j: usize| -weight[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

/// Greedy sum of the heaviest edges without the one-to-one constraint,
/// stopping once every column of either side is covered or the edges run
/// out. Never smaller than the exact score.
pub fn upper_bound(g: &UnionabilityGraph) -> f64 {
    greedy(g, false)
}

/// Greedy matching by descending weight: take an edge if neither endpoint is
/// matched yet. Never larger than the exact score.
pub fn lower_bound(g: &UnionabilityGraph) -> f64 {
    greedy(g, true)
}

fn greedy(g: &UnionabilityGraph, one_to_one: bool) -> f64 {
    let mut left = vec![false; g.left_size];
    let mut right = vec![false; g.right_size];
    let (mut left_covered, mut right_covered) = (0, 0);
    let mut total = 0.0;
    for e in &g.edges {
        if left_covered == g.left_size || right_covered == g.right_size {
            break;
        }
        if one_to_one && (left[e.left] || right[e.right]) {
            continue;
        }
        total += e.weight;
        if !std::mem::replace(&mut left[e.left], true) {
            left_covered += 1;
        }
        if !std::mem::replace(&mut right[e.right], true) {
            right_covered += 1;
        }
    }
    total
}
