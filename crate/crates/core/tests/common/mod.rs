#![allow(dead_code)]

use rand::Rng;
use unionsearch_core::UnionabilityGraph;

/// Best total weight over every injective partial assignment of left
/// vertices to right vertices.
pub fn brute_force(g: &UnionabilityGraph) -> f64 {
    let mut w = vec![vec![None; g.right_size()]; g.left_size()];
    for e in g.edges() {
        w[e.left][e.right] = Some(e.weight);
    }
    fn go(row: usize, w: &[Vec<Option<f64>>], used: &mut Vec<bool>) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = go(row + 1, w, used);
        for j in 0..used.len() {
            if let (false, Some(x)) = (used[j], w[row][j]) {
                used[j] = true;
                best = best.max(x + go(row + 1, w, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, &w, &mut vec![false; g.right_size()])
}

/// Random graph up to `max_side` per side with weights in `[tau, 1]`.
pub fn random_graph(rng: &mut impl Rng, max_side: usize, tau: f64) -> UnionabilityGraph {
    let n = rng.random_range(1..=max_side);
    let m = rng.random_range(1..=max_side);
    let density: f64 = rng.random_range(0.1..=1.0);
    let mut scores = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.random_bool(density) {
                scores.push((i, j, rng.random_range(tau..=1.0)));
            }
        }
    }
    UnionabilityGraph::from_scores(n, m, scores, tau).unwrap()
}

use unionsearch_core::embed::embed_catalog;
use unionsearch_core::eval::GroundTruth;
use unionsearch_core::preprocess::compute_idf;
use unionsearch_core::synth::{generate, SynthSpec};
use unionsearch_core::{EmbedConfig, EmbeddingStore, LakeCatalog};

/// Generates a synthetic lake and embeds it with the baseline embedder.
pub fn embedded_synth(spec: &SynthSpec) -> (EmbeddingStore, GroundTruth) {
    let lake = generate(spec).unwrap();
    let catalog = LakeCatalog::from_tables(lake.tables);
    let stats = compute_idf(&catalog);
    let store = embed_catalog(&catalog, &stats, &EmbedConfig::default()).unwrap();
    (store, lake.ground_truth)
}
