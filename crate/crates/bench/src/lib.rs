//! Seeded fixtures shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unionsearch_core::synth::{random_unit_vector, vector_at_cosine};
use unionsearch_core::{ColumnEmbedding, EmbeddingStore, QueryTable, UnionabilityGraph};

/// `n x m` graph with uniform weights in `[0, 1)`, thresholded at `tau`.
pub fn random_graph(n: usize, m: usize, tau: f64, seed: u64) -> UnionabilityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            scores.push((i, j, rng.random::<f64>()));
        }
    }
    UnionabilityGraph::from_scores(n, m, scores, tau).expect("valid graph")
}

/// Store of `n_tables` tables with `cols` columns each. Tables come in
/// groups of eight whose columns sit near shared centroids, so that a
/// query has a handful of genuinely unionable neighbors.
pub fn clustered_store(n_tables: usize, cols: usize, dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n_tables * cols);
    let mut centroids: Vec<Vec<f32>> = Vec::new();
    for t in 0..n_tables {
        if t % 8 == 0 {
            centroids = (0..cols).map(|_| random_unit_vector(&mut rng, dim)).collect();
        }
        for (c, centroid) in centroids.iter().enumerate() {
            let v = vector_at_cosine(&mut rng, centroid, 0.8);
            entries.push(ColumnEmbedding::new(format!("t{t:06}"), c, v));
        }
    }
    EmbeddingStore::from_entries(dim, entries).expect("valid store")
}

/// First table of `store` as a query.
pub fn first_query(store: &EmbeddingStore) -> QueryTable {
    let id = store.table_ids().next().expect("non-empty store").to_string();
    QueryTable::from_store(store, &id).expect("table present")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(random_graph(5, 6, 0.3, 1).edges(), random_graph(5, 6, 0.3, 1).edges());
        let a = clustered_store(16, 3, 32, 2);
        assert_eq!(a.len(), 48);
        assert_eq!(a.table_count(), 16);
        assert_eq!(a.entries(), clustered_store(16, 3, 32, 2).entries());
        assert_eq!(first_query(&a).columns.len(), 3);
    }
}
