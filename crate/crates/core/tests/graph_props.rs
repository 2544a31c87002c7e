mod common;

use nalgebra::DVector;
use passivity_opt::graph::Digraph;
use proptest::prelude::*;

/// Transitive closure by repeated squaring of the boolean reachability matrix.
fn closure(g: &Digraph) -> Vec<Vec<bool>> {
    let n = g.n_nodes();
    // reach[a][b]: information flows from b to a.
    let mut reach: Vec<Vec<bool>> = (0..n).map(|a| (0..n).map(|b| a == b || g.has_edge(a, b)).collect()).collect();
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                if reach[a][k] && reach[k][b] {
                    reach[a][b] = true;
                }
            }
        }
    }
    reach
}

fn binary_graph() -> impl Strategy<Value = Digraph> {
    (1usize..=5).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let w: Vec<f64> =
                bits.iter().enumerate().map(|(k, &b)| if b && k / n != k % n { 1.0 } else { 0.0 }).collect();
            Digraph::from_row_major(n, &w).unwrap()
        })
    })
}

fn weighted_graph() -> impl Strategy<Value = Digraph> {
    (1usize..=6).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..5.0], n * n).prop_map(move |mut w| {
            for i in 0..n {
                w[i * n + i] = 0.0;
            }
            Digraph::from_row_major(n, &w).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn laplacian_rows_sum_to_zero(g in weighted_graph()) {
        let l = g.laplacian();
        for r in 0..g.n_nodes() {
            prop_assert!(l.row(r).sum().abs() <= 1e-12);
        }
    }

    #[test]
    fn balance_matches_column_sums(g in weighted_graph(), tol in 1e-9f64..1e-1) {
        let col_sums = g.laplacian().row_sum();
        let worst = col_sums.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert_eq!(g.is_weight_balanced(tol), worst <= tol);
    }

    #[test]
    fn balanced_symmetric_part_is_psd(g in common::balanced_graph(6, false), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        prop_assert!(g.is_weight_balanced(1e-9));
        let l = g.laplacian();
        let sym = &l + l.transpose();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let eta = DVector::from_fn(g.n_nodes(), |_, _| rng.gen_range(-1.0..1.0));
            prop_assert!(eta.dot(&(&sym * &eta)) >= -1e-12);
        }
    }

    #[test]
    fn components_match_reachability(g in binary_graph()) {
        let reach = closure(&g);
        let comps = g.strongly_connected_components();
        let n = g.n_nodes();
        let mut owner = vec![usize::MAX; n];
        for (c, nodes) in comps.iter().enumerate() {
            for &v in nodes {
                prop_assert_eq!(owner[v], usize::MAX, "node {} listed twice", v);
                owner[v] = c;
            }
        }
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(owner[a] == owner[b], reach[a][b] && reach[b][a]);
            }
        }
    }
}
