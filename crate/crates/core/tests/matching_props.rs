mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unionsearch_core::matching::{exact_match, lower_bound, upper_bound};
use unionsearch_core::UnionabilityGraph;

use common::{brute_force, random_graph};

fn arb_graph(max_side: usize) -> impl Strategy<Value = UnionabilityGraph> {
    (1..=max_side, 1..=max_side, 0.05f64..1.0).prop_flat_map(|(n, m, tau)| {
        prop::collection::vec(prop::option::of(0.0f64..=1.0), n * m).prop_map(move |cells| {
            let scores = cells
                .iter()
                .enumerate()
                .filter_map(|(i, w)| w.map(|w| (i / m, i % m, w)));
            UnionabilityGraph::from_scores(n, m, scores, tau).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn bounds_sandwich_exact(g in arb_graph(10)) {
        let exact = exact_match(&g).score;
        prop_assert!(lower_bound(&g) <= exact + 1e-9);
        prop_assert!(exact <= upper_bound(&g) + 1e-9);
    }

    #[test]
    fn exact_equals_oracle(g in arb_graph(6)) {
        prop_assert!((exact_match(&g).score - brute_force(&g)).abs() < 1e-9);
    }

    #[test]
    fn matching_is_injective_and_consistent(g in arb_graph(10)) {
        let r = exact_match(&g);
        let mut lefts: Vec<_> = r.pairs.iter().map(|p| p.0).collect();
        let mut rights: Vec<_> = r.pairs.iter().map(|p| p.1).collect();
        lefts.dedup();
        rights.sort_unstable();
        rights.dedup();
        prop_assert_eq!(lefts.len(), r.pairs.len());
        prop_assert_eq!(rights.len(), r.pairs.len());
        let total: f64 = r.pairs.iter().map(|&(i, j)| g.weight(i, j).unwrap()).sum();
        prop_assert!((total - r.score).abs() < 1e-9);
    }

    #[test]
    fn swapping_sides_keeps_the_score(g in arb_graph(10)) {
        let t = g.transposed();
        prop_assert!((exact_match(&g).score - exact_match(&t).score).abs() < 1e-9);
        prop_assert!((upper_bound(&g) - upper_bound(&t)).abs() < 1e-9);
        prop_assert!((lower_bound(&g) - lower_bound(&t)).abs() < 1e-9);
    }

    #[test]
    fn raising_tau_never_raises_the_score(g in arb_graph(8), bump in 0.0f64..0.5) {
        let tau2 = (g.tau() + bump).min(1.0);
        let scores = g.edges().iter().map(|e| (e.left, e.right, e.weight));
        let g2 = UnionabilityGraph::from_scores(g.left_size(), g.right_size(), scores, tau2).unwrap();
        prop_assert!(exact_match(&g2).score <= exact_match(&g).score + 1e-9);
        prop_assert!(upper_bound(&g2) <= upper_bound(&g) + 1e-9);
        prop_assert!(lower_bound(&g2) <= lower_bound(&g) + 1e-9);
    }
}

#[test]
fn seeded_graphs_agree_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..300 {
        let g = random_graph(&mut rng, 7, 0.5);
        assert!((exact_match(&g).score - brute_force(&g)).abs() < 1e-9);
    }
}

#[test]
fn dense_equal_weights_match_min_side() {
    let scores = (0..4).flat_map(|i| (0..6).map(move |j| (i, j, 0.75)));
    let g = UnionabilityGraph::from_scores(4, 6, scores, 0.5).unwrap();
    assert!((exact_match(&g).score - 3.0).abs() < 1e-12);
    // Ties go to column 0 first; its six edges cover the right side.
    assert!((upper_bound(&g) - 4.5).abs() < 1e-12);
    assert!((lower_bound(&g) - 3.0).abs() < 1e-12);
}
