#![allow(dead_code)]

use std::sync::Arc;

use passivity_opt::dynamics::Network;
use passivity_opt::graph::Digraph;
use passivity_opt::objective::{make_example1, make_example2, Objective, Quadratic, SharedObjective};
use passivity_opt::passivity::{AgentDesign, AgentParams};
use proptest::prelude::*;

/// A directed cycle through `order[..len]` with weight `w`.
fn add_cycle(edges: &mut Vec<(usize, usize, f64)>, order: &[usize], len: usize, w: f64) {
    for k in 0..len {
        edges.push((order[k], order[(k + 1) % len], w));
    }
}

fn merge(n: usize, edges: &[(usize, usize, f64)]) -> Digraph {
    let mut w = vec![0.0; n * n];
    for &(i, j, a) in edges {
        if i != j {
            w[i * n + j] += a;
        }
    }
    Digraph::from_row_major(n, &w).unwrap()
}

/// Weight-balanced digraphs built as sums of weighted directed cycles.
/// With `connected`, the first cycle visits every node.
pub fn balanced_graph(max_n: usize, connected: bool) -> impl Strategy<Value = Digraph> {
    (2..=max_n).prop_flat_map(move |n| {
        let cycle = (Just((0..n).collect::<Vec<_>>()).prop_shuffle(), 2..=n, 0.1f64..3.0);
        (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), 0.1f64..3.0, prop::collection::vec(cycle, 0..4))
            .prop_map(move |(n, first, w0, extra)| {
                let mut edges = Vec::new();
                let len0 = if connected { n } else { 2 };
                add_cycle(&mut edges, &first, len0, w0);
                for (order, len, w) in extra {
                    add_cycle(&mut edges, &order, len, w);
                }
                merge(n, &edges)
            })
    })
}

/// Strongly connected digraphs (not necessarily balanced): a Hamiltonian cycle plus
/// random extra edges.
pub fn strongly_connected_graph(max_n: usize) -> impl Strategy<Value = Digraph> {
    (1..=max_n).prop_flat_map(|n| {
        let extra = prop::collection::vec((0..n, 0..n, 0.1f64..2.0), 0..2 * n);
        (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), extra).prop_map(|(n, order, extra)| {
            let mut edges = Vec::new();
            if n > 1 {
                add_cycle(&mut edges, &order, n, 1.0);
            }
            edges.extend(extra);
            merge(n, &edges)
        })
    })
}

pub fn catalog() -> Vec<SharedObjective> {
    (1..=4).map(|i| make_example1(i).unwrap()).chain((1..=4).map(|i| make_example2(i).unwrap())).collect()
}

pub fn example2_objectives() -> Vec<SharedObjective> {
    (1..=4).map(|i| make_example2(i).unwrap()).collect()
}

/// Scalar agents with `alpha = beta = gamma = J = K = C = 1`, the given indices and a
/// storage parameter twice its bound.
pub fn unit_network(fs: Vec<SharedObjective>, nus: &[f64]) -> Network {
    let agents = fs
        .iter()
        .zip(nus)
        .map(|(f, &nu)| {
            let d = AgentDesign::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
            let eta = 2.0 * d.eta_bound(f.mu());
            AgentParams::new(d, nu, eta, f.mu()).unwrap()
        })
        .collect();
    Network::new(agents, fs).unwrap()
}

/// `n` scalar quadratics with curvature in `[0.1, 2]` and centres in `[-3, 3]`.
pub fn random_quadratics(n: usize) -> impl Strategy<Value = Vec<SharedObjective>> {
    prop::collection::vec((0.05f64..1.0, -3.0f64..3.0), n).prop_map(|v| {
        v.into_iter().map(|(w, c)| Arc::new(Quadratic::scalar(w, c).unwrap()) as SharedObjective).collect()
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn objective_name(f: &dyn Objective) -> String {
    f.name()
}
