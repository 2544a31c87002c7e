mod common;

use passivity_opt::gains::{
    assign_subgraph_gains, max_consensus, max_consensus_threshold, sigma_threshold_degree, sigma_threshold_eigen,
    GainProfile, SubgraphProfile,
};
use passivity_opt::graph::SwitchingSchedule;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn max_consensus_reaches_central_max(
        g in common::strongly_connected_graph(8),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = g.n_nodes();
        let local: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let central = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d = max_consensus(&g, &local, n);
        prop_assert!(d.iter().all(|&v| v == central), "{:?} vs {}", d, central);
        let th = max_consensus_threshold(&g, &local, n);
        prop_assert!(th.iter().all(|&v| v == 1.0 / (2.0 * central)));
    }

    #[test]
    fn thresholds_positive_on_balanced_connected(
        g in common::balanced_graph(6, true),
        nus in prop::collection::vec(-100.0f64..-1e-3, 6),
    ) {
        let n = g.n_nodes();
        let nus = &nus[..n];
        let nu_bar = nus.iter().copied().fold(0.0, f64::min);
        let eig = sigma_threshold_eigen(&g, nu_bar).unwrap();
        let deg = sigma_threshold_degree(&g.in_degrees(), nus).unwrap();
        prop_assert!(eig > 0.0 && eig.is_finite());
        prop_assert!(deg > 0.0 && deg.is_finite());
        // A constant gain below the degree bound is always admissible.
        let schedule = SwitchingSchedule::constant(g);
        let tmpl = [SubgraphProfile { anchor: None, profile: GainProfile::constant(0.5 * deg) }];
        prop_assert!(assign_subgraph_gains(&schedule, nus, &tmpl, 1.0).is_ok());
    }

    #[test]
    fn eigen_threshold_invariant_under_relabeling(
        g in common::balanced_graph(6, true),
        perm_seed in any::<u64>(),
        nu_bar in -100.0f64..-1e-3,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..g.n_nodes()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let a = sigma_threshold_eigen(&g, nu_bar).unwrap();
        let b = sigma_threshold_eigen(&g.permuted(&perm), nu_bar).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn subgraph_gains_equal_within_components(
        modes in prop::collection::vec(common::balanced_graph(5, false), 1..4)
            .prop_filter("same node count", |v| v.iter().all(|g| g.n_nodes() == v[0].n_nodes())),
        anchor in 0usize..5,
    ) {
        let n = modes[0].n_nodes();
        let schedule = SwitchingSchedule::cyclic(modes.clone(), 0.5).unwrap();
        let nus = vec![-0.1; n];
        let tmpl = [
            SubgraphProfile { anchor: Some(anchor % n), profile: GainProfile::sin(1e-3, 5e-4) },
            SubgraphProfile { anchor: None, profile: GainProfile::cos(2e-3, 5e-4) },
        ];
        let gains = assign_subgraph_gains(&schedule, &nus, &tmpl, 2.0).unwrap();
        for (mode, g) in modes.iter().enumerate() {
            for comp in g.strongly_connected_components() {
                for t in [0.0, 0.3, 1.7] {
                    let s = gains.eval(t, mode, n);
                    prop_assert!(comp.iter().all(|&i| s[i] == s[comp[0]] && s[i] > 0.0));
                }
            }
        }
    }
}
