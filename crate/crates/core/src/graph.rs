//! Weighted digraphs, their Laplacians, and piecewise-constant switching schedules.
//!
//! Edge convention: `a[i][j] > 0` means node `i` receives information from node `j`.
//! In-degree of `i` is the row sum, out-degree the column sum, and the Laplacian
//! is `L = diag(in-degrees) - A`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Absolute tolerance used when checking `d_in == d_out`.
pub const DEFAULT_BALANCE_TOL: f64 = 1e-9;

/// Boundaries closer than this are treated as coincident.
pub const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("graph must have at least one node")]
    Empty,
    #[error("adjacency has {len} entries, expected {expected}")]
    BadLength { len: usize, expected: usize },
    #[error("self-loop weight a[{0}][{0}] must be zero")]
    SelfLoop(usize),
    #[error("edge weight a[{i}][{j}] = {w} is negative or not finite")]
    BadWeight { i: usize, j: usize, w: f64 },
    #[error("schedule has no segments")]
    NoSegments,
    #[error("first segment must start at t = 0, got {0}")]
    FirstStart(f64),
    #[error("segment start times must be strictly increasing (segment {0})")]
    NotIncreasing(usize),
    #[error("segment {segment} refers to mode {mode}, but only {modes} modes exist")]
    BadMode { segment: usize, mode: usize, modes: usize },
    #[error("mode {mode} has {got} nodes, expected {expected}")]
    NodeCountMismatch { mode: usize, got: usize, expected: usize },
    #[error("period {period} must exceed the last segment start {last}")]
    BadPeriod { period: f64, last: f64 },
    #[error("dwell time must be positive, got {0}")]
    BadDwell(f64),
    #[error("window must be positive, got {0}")]
    BadWindow(f64),
    #[error("horizon {horizon} is shorter than window {window}")]
    BadHorizon { horizon: f64, window: f64 },
}

/// Directed weighted graph stored as a dense adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    adjacency: DMatrix<f64>,
}

impl Digraph {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight { i, j, w });
                }
                if i == j && w != 0.0 {
                    return Err(GraphError::SelfLoop(i));
                }
            }
        }
        Ok(Self { adjacency })
    }

    /// Builds a graph from a dense row-major list of `n * n` weights.
    pub fn from_row_major(n: usize, weights: &[f64]) -> Result<Self, GraphError> {
        if weights.len() != n * n {
            return Err(GraphError::BadLength { len: weights.len(), expected: n * n });
        }
        Self::new(DMatrix::from_row_slice(n, n, weights))
    }

    /// Builds a graph from `(receiver, sender, weight)` triples.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            a[(i, j)] = w;
        }
        Self::new(a)
    }

    /// Unit-weight directed ring where node `i` receives from `i + 1 (mod n)`.
    pub fn directed_ring(n: usize) -> Self {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Self::from_edges(n, &edges).expect("ring weights are valid")
    }

    /// Graph without edges.
    pub fn empty(n: usize) -> Self {
        Self::new(DMatrix::zeros(n, n)).expect("zero weights are valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn weight(&self, receiver: usize, sender: usize) -> f64 {
        self.adjacency[(receiver, sender)]
    }

    pub fn has_edge(&self, receiver: usize, sender: usize) -> bool {
        self.adjacency[(receiver, sender)] > 0.0
    }

    pub fn has_edges(&self) -> bool {
        self.adjacency.iter().any(|&w| w > 0.0)
    }

    pub fn in_degree(&self, i: usize) -> f64 {
        self.adjacency.row(i).sum()
    }

    pub fn out_degree(&self, i: usize) -> f64 {
        self.adjacency.column(i).sum()
    }

    pub fn in_degrees(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.in_degree(i)).collect()
    }

    /// `L = W_in - A`; every row sums to zero.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            // Summing the row directly keeps the zero row sum exact.
            l[(i, i)] = self.in_degree(i);
        }
        l
    }

    /// True iff `|d_in(i) - d_out(i)| <= tol` for every node.
    pub fn is_weight_balanced(&self, tol: f64) -> bool {
        (0..self.n_nodes()).all(|i| (self.in_degree(i) - self.out_degree(i)).abs() <= tol)
    }

    /// Strongly connected components (Tarjan). Members are sorted and components are
    /// ordered by their smallest member.
    pub fn strongly_connected_components(&self) -> Vec<Vec<usize>> {
        let mut comps = tarjan(self);
        for c in &mut comps {
            c.sort_unstable();
        }
        comps.sort_unstable_by_key(|c| c[0]);
        comps
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected_components().len() == 1
    }

    /// Edgewise maximum of two graphs on the same node set.
    pub fn union(&self, other: &Digraph) -> Digraph {
        assert_eq!(self.n_nodes(), other.n_nodes(), "union of graphs with different sizes");
        let a = self.adjacency.zip_map(&other.adjacency, f64::max);
        Digraph { adjacency: a }
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Digraph {
        let n = self.n_nodes();
        assert_eq!(perm.len(), n);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(perm[i], perm[j])] = self.adjacency[(i, j)];
            }
        }
        Digraph { adjacency: a }
    }
}

// Edges point from sender j to receiver i; SCCs do not depend on orientation, so we
// walk the "receives from" relation directly.
fn tarjan(g: &Digraph) -> Vec<Vec<usize>> {
    let n = g.n_nodes();
    let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| g.has_edge(i, j)).collect()).collect();

    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut comps = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (node, next neighbour position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// One constant-topology interval of a schedule: active from `start` until the next
/// segment begins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub mode: usize,
}

/// A concrete time interval `[start, end)` during which `mode` is active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occurrence {
    pub start: f64,
    pub end: f64,
    pub mode: usize,
}

/// Piecewise-constant, right-continuous graph signal `G(t)`.
///
/// Graphs are stored once per mode; segments refer to modes by index. A periodic
/// schedule repeats its segment list every `period` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    modes: Vec<Digraph>,
    segments: Vec<Segment>,
    period: Option<f64>,
}

impl SwitchingSchedule {
    pub fn new(modes: Vec<Digraph>, segments: Vec<Segment>, period: Option<f64>) -> Result<Self, GraphError> {
        let first = segments.first().ok_or(GraphError::NoSegments)?;
        if first.start != 0.0 {
            return Err(GraphError::FirstStart(first.start));
        }
        for (k, w) in segments.windows(2).enumerate() {
            if !(w[1].start > w[0].start) {
                return Err(GraphError::NotIncreasing(k + 1));
            }
        }
        for (k, s) in segments.iter().enumerate() {
            if s.mode >= modes.len() {
                return Err(GraphError::BadMode { segment: k, mode: s.mode, modes: modes.len() });
            }
        }
        let n = modes[0].n_nodes();
        for (m, g) in modes.iter().enumerate() {
            if g.n_nodes() != n {
                return Err(GraphError::NodeCountMismatch { mode: m, got: g.n_nodes(), expected: n });
            }
        }
        if let Some(p) = period {
            let last = segments.last().expect("non-empty").start;
            if !(p > last) || !p.is_finite() {
                return Err(GraphError::BadPeriod { period: p, last });
            }
        }
        Ok(Self { modes, segments, period })
    }

    /// A single graph for all time.
    pub fn constant(graph: Digraph) -> Self {
        Self { modes: vec![graph], segments: vec![Segment { start: 0.0, mode: 0 }], period: None }
    }

    /// Visits the modes in order, each for `dwell` seconds, repeating forever.
    pub fn cyclic(modes: Vec<Digraph>, dwell: f64) -> Result<Self, GraphError> {
        if !(dwell > 0.0) {
            return Err(GraphError::BadDwell(dwell));
        }
        let segments = (0..modes.len()).map(|k| Segment { start: k as f64 * dwell, mode: k }).collect();
        let period = modes.len() as f64 * dwell;
        Self::new(modes, segments, Some(period))
    }

    /// Draws a mode uniformly at random every `dwell` seconds up to `horizon`, using a
    /// ChaCha8 stream seeded with `seed`. The last drawn mode persists after `horizon`.
    pub fn random(modes: Vec<Digraph>, dwell: f64, horizon: f64, seed: u64) -> Result<Self, GraphError> {
        if !(dwell > 0.0) {
            return Err(GraphError::BadDwell(dwell));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = ((horizon / dwell).ceil() as usize).max(1);
        let n_modes = modes.len().max(1);
        let segments =
            (0..count).map(|k| Segment { start: k as f64 * dwell, mode: rng.gen_range(0..n_modes) }).collect();
        Self::new(modes, segments, None)
    }

    pub fn modes(&self) -> &[Digraph] {
        &self.modes
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn n_nodes(&self) -> usize {
        self.modes[0].n_nodes()
    }

    /// Index of the mode active at `t` (right-continuous).
    pub fn mode_at(&self, t: f64) -> usize {
        let local = match self.period {
            Some(p) => {
                let r = t.rem_euclid(p);
                // Snap values that are a rounding error below a full period.
                if p - r <= TIME_EPS {
                    0.0
                } else {
                    r
                }
            }
            None => t,
        };
        let k = self.segments.partition_point(|s| s.start <= local + TIME_EPS);
        self.segments[k.saturating_sub(1)].mode
    }

    pub fn graph_at(&self, t: f64) -> &Digraph {
        &self.modes[self.mode_at(t)]
    }

    /// First switching instant strictly after `t`, if any.
    pub fn next_switch_after(&self, t: f64) -> Option<f64> {
        match self.period {
            Some(p) => {
                let cycle = (t / p).floor();
                for c in [cycle, cycle + 1.0] {
                    let base = c * p;
                    for s in &self.segments {
                        let b = base + s.start;
                        if b > t + TIME_EPS {
                            return Some(b);
                        }
                    }
                }
                Some((cycle + 2.0) * p)
            }
            None => {
                let k = self.segments.partition_point(|s| s.start <= t + TIME_EPS);
                self.segments.get(k).map(|s| s.start)
            }
        }
    }

    /// All constant-topology intervals intersecting `[0, horizon)`, clipped to it.
    pub fn occurrences(&self, horizon: f64) -> Vec<Occurrence> {
        let mut out = Vec::new();
        let mut t = 0.0;
        while t < horizon - TIME_EPS {
            let mode = self.mode_at(t);
            let end = self.next_switch_after(t).unwrap_or(f64::INFINITY).min(horizon);
            out.push(Occurrence { start: t, end, mode });
            t = end;
        }
        out
    }

    /// Edgewise-max union of every graph active somewhere in `[from, to)`.
    pub fn union_over(&self, from: f64, to: f64) -> Digraph {
        let mut acc = self.graph_at(from).clone();
        let mut t = from;
        while let Some(next) = self.next_switch_after(t) {
            if next >= to - TIME_EPS {
                break;
            }
            acc = acc.union(self.graph_at(next));
            t = next;
        }
        acc
    }

    /// Distinct window start points used for joint-connectivity checks: `0` and every
    /// switching instant up to `last`.
    fn window_starts(&self, last: f64) -> Vec<f64> {
        let mut starts = vec![0.0];
        let mut t = 0.0;
        while let Some(next) = self.next_switch_after(t) {
            if next > last + TIME_EPS {
                break;
            }
            starts.push(next);
            t = next;
        }
        starts
    }
}

/// Checks uniform joint strong connectivity over a finite horizon.
///
/// For every start `t_k` in `{0} ∪ {switching instants} ∩ [0, horizon - window]` the
/// union of graphs active on `[t_k, t_k + window)` must be strongly connected.
/// Periodic schedules are checked over one period plus one window, which covers
/// every distinct window.
pub fn is_ujsc(schedule: &SwitchingSchedule, window: f64, horizon: f64) -> Result<bool, GraphError> {
    if !(window > 0.0) {
        return Err(GraphError::BadWindow(window));
    }
    let horizon = match schedule.period() {
        Some(p) => p + window,
        None => horizon,
    };
    if horizon < window {
        return Err(GraphError::BadHorizon { horizon, window });
    }
    Ok(schedule
        .window_starts(horizon - window)
        .into_iter()
        .all(|t| schedule.union_over(t, t + window).is_strongly_connected()))
}

/// Infimum of the UJSC windows over `[0, horizon)`: every window strictly longer than
/// the returned value satisfies [`is_ujsc`]. `None` if the union of all graphs from
/// time zero never becomes strongly connected before `horizon`. Window starts whose
/// union only completes past `horizon` are ignored.
pub fn min_ujsc_window(schedule: &SwitchingSchedule, horizon: f64) -> Option<f64> {
    let horizon = match schedule.period() {
        Some(p) => 2.0 * p,
        None => horizon,
    };
    let mut worst: f64 = 0.0;
    for start in schedule.window_starts(horizon) {
        let mut acc = schedule.graph_at(start).clone();
        let mut t = start;
        loop {
            if acc.is_strongly_connected() {
                worst = worst.max(t - start);
                break;
            }
            match schedule.next_switch_after(t) {
                Some(next) if next < horizon - TIME_EPS => {
                    acc = acc.union(schedule.graph_at(next));
                    t = next;
                }
                _ if start == 0.0 => return None,
                _ => return Some(worst),
            }
        }
    }
    Some(worst)
}
