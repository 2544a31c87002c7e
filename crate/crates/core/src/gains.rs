//! Coupling-gain thresholds, distributed max-consensus, and time-varying gain schedules.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Digraph, SwitchingSchedule};

/// Relative cutoff below which a Laplacian eigenvalue is treated as zero.
pub const ZERO_EIG_REL_TOL: f64 = 1e-9;

/// Interior sample count per interval when checking time-varying gains.
pub const GAIN_SAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("Laplacian is identically zero")]
    ZeroLaplacian,
    #[error("smallest IFP index must be negative, got {0}")]
    NonNegativeIndex(f64),
    #[error("IFP indices must be non-positive, got {0}")]
    PositiveIndex(f64),
    #[error("all products d_i |nu_i| are zero; the degree bound is unbounded")]
    Degenerate,
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(
        "coupling gain {sigma} of agents {component:?} at t = {t} violates the degree-based bound \
         0 < sigma < 1/(2 max d_j |nu_j|) = {bound}"
    )]
    BoundViolated { component: Vec<usize>, t: f64, sigma: f64, bound: f64 },
    #[error("coupling gain {sigma} of agent {agent} at t = {t} is not positive")]
    NotPositive { agent: usize, t: f64, sigma: f64 },
    #[error("agents {a} and {b} share a strongly connected component in mode {mode} but have different gains")]
    UnequalInComponent { mode: usize, a: usize, b: usize },
    #[error("no gain profile applies to component {component:?} of mode {mode}")]
    NoProfile { mode: usize, component: Vec<usize> },
    #[error("cannot parse gain expression `{0}`")]
    Parse(String),
}

/// `s_+(L + L^T) / (-2 nu_bar s_N(L^T L))`.
pub fn sigma_threshold_eigen(g: &Digraph, nu_bar: f64) -> Result<f64, GainError> {
    if !(nu_bar < 0.0) {
        return Err(GainError::NonNegativeIndex(nu_bar));
    }
    let l = g.laplacian();
    let sym = &l + l.transpose();
    let gram = l.transpose() * &l;
    let gram_eig = SymmetricEigen::new(gram).eigenvalues;
    let s_n = gram_eig.max();
    if !(s_n > 0.0) {
        return Err(GainError::ZeroLaplacian);
    }
    let sym_eig = SymmetricEigen::new(sym).eigenvalues;
    let cutoff = ZERO_EIG_REL_TOL * sym_eig.amax();
    let s_plus = sym_eig.iter().copied().filter(|&e| e > cutoff).fold(f64::INFINITY, f64::min);
    if !s_plus.is_finite() {
        return Err(GainError::ZeroLaplacian);
    }
    Ok(s_plus / (-2.0 * nu_bar * s_n))
}

/// `1 / (2 max_i d_i |nu_i|)`; infinite bounds are reported as [`GainError::Degenerate`].
pub fn sigma_threshold_degree(degrees: &[f64], nus: &[f64]) -> Result<f64, GainError> {
    if degrees.len() != nus.len() {
        return Err(GainError::LengthMismatch { expected: degrees.len(), got: nus.len() });
    }
    if let Some(&nu) = nus.iter().find(|&&nu| nu > 0.0) {
        return Err(GainError::PositiveIndex(nu));
    }
    let worst = degrees.iter().zip(nus).map(|(d, nu)| d * nu.abs()).fold(0.0, f64::max);
    if worst <= 0.0 {
        return Err(GainError::Degenerate);
    }
    Ok(1.0 / (2.0 * worst))
}

/// Runs `D_i <- max(D_i, max_{j in N_i} D_j)` synchronously for `max_iters` rounds.
pub fn max_consensus(g: &Digraph, local: &[f64], max_iters: usize) -> Vec<f64> {
    let n = g.n_nodes();
    assert_eq!(local.len(), n, "one value per node");
    let mut d = local.to_vec();
    let mut next = d.clone();
    for _ in 0..max_iters {
        for i in 0..n {
            next[i] = (0..n).filter(|&j| g.has_edge(i, j)).map(|j| d[j]).fold(d[i], f64::max);
        }
        if next == d {
            break;
        }
        std::mem::swap(&mut d, &mut next);
    }
    d
}

/// Per-agent degree thresholds `1 / (2 D_i)` after max-consensus on `D_i(0) = d_i |nu_i|`.
pub fn max_consensus_threshold(g: &Digraph, local: &[f64], max_iters: usize) -> Vec<f64> {
    max_consensus(g, local, max_iters).into_iter().map(|d| 1.0 / (2.0 * d)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Sin,
    Cos,
}

/// Scalar coupling gain as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainProfile {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * wave(omega t + phase)`
    Sinusoidal {
        offset: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
        wave: Wave,
    },
}

impl GainProfile {
    pub fn constant(value: f64) -> Self {
        GainProfile::Constant { value }
    }

    pub fn sin(offset: f64, amplitude: f64) -> Self {
        GainProfile::Sinusoidal { offset, amplitude, omega: 1.0, phase: 0.0, wave: Wave::Sin }
    }

    pub fn cos(offset: f64, amplitude: f64) -> Self {
        GainProfile::Sinusoidal { offset, amplitude, omega: 1.0, phase: 0.0, wave: Wave::Cos }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            GainProfile::Constant { value } => value,
            GainProfile::Sinusoidal { offset, amplitude, omega, phase, wave } => {
                let arg = omega * t + phase;
                offset
                    + amplitude
                        * match wave {
                            Wave::Sin => arg.sin(),
                            Wave::Cos => arg.cos(),
                        }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, GainProfile::Constant { .. })
    }

    /// Sampled `(min, max)` over `[start, end]`: both endpoints plus
    /// [`GAIN_SAMPLES`] interior points.
    pub fn sampled_range(&self, start: f64, end: f64) -> (f64, f64) {
        if let GainProfile::Constant { value } = *self {
            return (value, value);
        }
        let mut lo = self.eval(start).min(self.eval(end));
        let mut hi = self.eval(start).max(self.eval(end));
        for k in 1..=GAIN_SAMPLES {
            let t = start + (end - start) * k as f64 / (GAIN_SAMPLES + 1) as f64;
            let v = self.eval(t);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Parses `c`, `a + b*sin(t)`, `a - b*cos(w*t)` and similar forms.
    pub fn parse(expr: &str) -> Result<Self, GainError> {
        let err = || GainError::Parse(expr.to_string());
        let s: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
        if let Ok(v) = s.parse::<f64>() {
            return Ok(GainProfile::constant(v));
        }
        let (wave, at) = match (s.find("sin("), s.find("cos(")) {
            (Some(i), None) => (Wave::Sin, i),
            (None, Some(i)) => (Wave::Cos, i),
            _ => return Err(err()),
        };
        let inner = s[at + 4..].strip_suffix(')').ok_or_else(err)?;
        let omega = match inner {
            "t" => 1.0,
            _ => inner.strip_suffix("*t").ok_or_else(err)?.parse::<f64>().map_err(|_| err())?,
        };
        let head = &s[..at];
        // head is "<offset><sign><amp>*" or "<offset><sign>" or "" / "<amp>*"
        let head = head.strip_suffix('*').unwrap_or(head);
        let split = head.rfind(['+', '-']).filter(|&i| i > 0);
        let (offset, amp_str) = match split {
            Some(i) => (head[..i].parse::<f64>().map_err(|_| err())?, &head[i..]),
            None => (0.0, head),
        };
        let amplitude = match amp_str {
            "" | "+" => 1.0,
            "-" => -1.0,
            a => a.parse::<f64>().map_err(|_| err())?,
        };
        Ok(GainProfile::Sinusoidal { offset, amplitude, omega, phase: 0.0, wave })
    }
}

impl fmt::Display for GainProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GainProfile::Constant { value } => write!(f, "{value}"),
            GainProfile::Sinusoidal { offset, amplitude, omega, phase, wave } => {
                let w = match wave {
                    Wave::Sin => "sin",
                    Wave::Cos => "cos",
                };
                write!(f, "{offset} + {amplitude}*{w}({omega}*t + {phase})")
            }
        }
    }
}

/// A gain template for one strongly connected component. A template with an anchor
/// applies to the component containing that agent; the first template without an
/// anchor is the fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubgraphProfile {
    pub anchor: Option<usize>,
    pub profile: GainProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Constant,
    Sinusoidal,
    PerSubgraph,
}

/// Per-agent gains `sigma_i(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSchedule {
    /// One profile shared by every agent.
    Uniform(GainProfile),
    /// `per_mode[mode][agent]`: profile used by `agent` while `mode` is active.
    PerSubgraph { per_mode: Vec<Vec<GainProfile>> },
}

impl GainSchedule {
    pub fn kind(&self) -> GainKind {
        match self {
            GainSchedule::Uniform(p) if p.is_constant() => GainKind::Constant,
            GainSchedule::Uniform(_) => GainKind::Sinusoidal,
            GainSchedule::PerSubgraph { .. } => GainKind::PerSubgraph,
        }
    }

    /// True if the gains never change while a mode is active.
    pub fn is_time_invariant(&self) -> bool {
        match self {
            GainSchedule::Uniform(p) => p.is_constant(),
            GainSchedule::PerSubgraph { per_mode } => per_mode.iter().flatten().all(GainProfile::is_constant),
        }
    }

    pub fn profile(&self, mode: usize, agent: usize) -> &GainProfile {
        match self {
            GainSchedule::Uniform(p) => p,
            GainSchedule::PerSubgraph { per_mode } => &per_mode[mode][agent],
        }
    }

    /// Writes `sigma_i(t)` for every agent while `mode` is active.
    pub fn eval_into(&self, t: f64, mode: usize, out: &mut [f64]) {
        match self {
            GainSchedule::Uniform(p) => out.fill(p.eval(t)),
            GainSchedule::PerSubgraph { per_mode } => {
                for (o, p) in out.iter_mut().zip(&per_mode[mode]) {
                    *o = p.eval(t);
                }
            }
        }
    }

    pub fn eval(&self, t: f64, mode: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.eval_into(t, mode, &mut out);
        out
    }
}

/// Builds per-mode, per-component gain assignments without checking bounds.
pub fn build_subgraph_gains(
    schedule: &SwitchingSchedule,
    profiles: &[SubgraphProfile],
) -> Result<GainSchedule, GainError> {
    let n = schedule.n_nodes();
    let fallback = profiles.iter().find(|p| p.anchor.is_none());
    let mut per_mode = Vec::with_capacity(schedule.modes().len());
    for (mode, g) in schedule.modes().iter().enumerate() {
        let mut row = vec![GainProfile::constant(f64::NAN); n];
        for comp in g.strongly_connected_components() {
            let chosen = profiles
                .iter()
                .find(|p| p.anchor.is_some_and(|a| comp.contains(&a)))
                .or(fallback)
                .ok_or_else(|| GainError::NoProfile { mode, component: comp.clone() })?;
            for &i in &comp {
                row[i] = chosen.profile;
            }
        }
        per_mode.push(row);
    }
    Ok(GainSchedule::PerSubgraph { per_mode })
}

/// Assigns one profile per strongly connected component of every mode and checks
/// `0 < sigma < 1 / (2 max_{j in component} d_j |nu_j|)` on every active interval in
/// `[0, horizon)`.
pub fn assign_subgraph_gains(
    schedule: &SwitchingSchedule,
    nus: &[f64],
    profiles: &[SubgraphProfile],
    horizon: f64,
) -> Result<GainSchedule, GainError> {
    let gains = build_subgraph_gains(schedule, profiles)?;
    check_admissible(schedule, &gains, nus, horizon)?;
    Ok(gains)
}

/// Verifies positivity, equality within components, and the per-component degree
/// bound for every mode occurrence in `[0, horizon)`.
pub fn check_admissible(
    schedule: &SwitchingSchedule,
    gains: &GainSchedule,
    nus: &[f64],
    horizon: f64,
) -> Result<(), GainError> {
    let n = schedule.n_nodes();
    if nus.len() != n {
        return Err(GainError::LengthMismatch { expected: n, got: nus.len() });
    }
    for occ in schedule.occurrences(horizon) {
        let g = &schedule.modes()[occ.mode];
        for comp in g.strongly_connected_components() {
            let first = gains.profile(occ.mode, comp[0]);
            if let Some(&other) = comp.iter().find(|&&i| gains.profile(occ.mode, i) != first) {
                return Err(GainError::UnequalInComponent { mode: occ.mode, a: comp[0], b: other });
            }
            let (lo, hi) = first.sampled_range(occ.start, occ.end);
            if !(lo > 0.0) {
                return Err(GainError::NotPositive { agent: comp[0], t: occ.start, sigma: lo });
            }
            let worst = comp.iter().map(|&j| g.in_degree(j) * nus[j].abs()).fold(0.0, f64::max);
            if worst > 0.0 {
                let bound = 1.0 / (2.0 * worst);
                if !(hi < bound) {
                    return Err(GainError::BoundViolated { component: comp, t: occ.start, sigma: hi, bound });
                }
            }
        }
    }
    Ok(())
}

/// Only checks that every gain is positive on `[0, horizon)`.
pub fn check_positive(schedule: &SwitchingSchedule, gains: &GainSchedule, horizon: f64) -> Result<(), GainError> {
    for occ in schedule.occurrences(horizon) {
        for i in 0..schedule.n_nodes() {
            let (lo, _) = gains.profile(occ.mode, i).sampled_range(occ.start, occ.end);
            if !(lo > 0.0) {
                return Err(GainError::NotPositive { agent: i, t: occ.start, sigma: lo });
            }
        }
    }
    Ok(())
}

/// Both coupling-gain thresholds for one graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeThresholds {
    pub mode: usize,
    pub sigma_eig: Option<f64>,
    pub sigma_deg: Option<f64>,
    pub components: Vec<Vec<usize>>,
    /// Degree bound of each component, aligned with `components`.
    pub component_sigma_deg: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    /// Smallest eigenvalue-based bound over all modes.
    pub sigma_eig: Option<f64>,
    /// Smallest degree-based bound over all modes.
    pub sigma_deg: Option<f64>,
    pub per_graph: Vec<ModeThresholds>,
}

pub fn threshold_report(schedule: &SwitchingSchedule, nus: &[f64]) -> ThresholdReport {
    let nu_bar = nus.iter().copied().fold(0.0, f64::min);
    let per_graph: Vec<ModeThresholds> = schedule
        .modes()
        .iter()
        .enumerate()
        .map(|(mode, g)| {
            let components = g.strongly_connected_components();
            let component_sigma_deg = components
                .iter()
                .map(|c| {
                    let d: Vec<f64> = c.iter().map(|&i| g.in_degree(i)).collect();
                    let v: Vec<f64> = c.iter().map(|&i| nus[i]).collect();
                    sigma_threshold_degree(&d, &v).ok()
                })
                .collect();
            ModeThresholds {
                mode,
                sigma_eig: sigma_threshold_eigen(g, nu_bar).ok(),
                sigma_deg: sigma_threshold_degree(&g.in_degrees(), nus).ok(),
                components,
                component_sigma_deg,
            }
        })
        .collect();
    let min_opt = |it: &mut dyn Iterator<Item = Option<f64>>| it.flatten().reduce(f64::min);
    ThresholdReport {
        sigma_eig: min_opt(&mut per_graph.iter().map(|m| m.sigma_eig)),
        sigma_deg: min_opt(&mut per_graph.iter().map(|m| m.sigma_deg)),
        per_graph,
    }
}

/// Helper for tests and diagnostics: the symmetric-part spectrum of a Laplacian.
pub fn symmetric_part_eigenvalues(l: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(l + l.transpose()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycles() -> Digraph {
        Digraph::from_edges(4, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).unwrap()
    }

    #[test]
    fn eigen_threshold_ring() {
        let ring = Digraph::directed_ring(4);
        assert!((sigma_threshold_eigen(&ring, -1.0).unwrap() - 0.25).abs() < 1e-12);
        assert!((sigma_threshold_eigen(&ring, -90.0).unwrap() - 0.25 / 90.0).abs() < 1e-12);
        let a = sigma_threshold_eigen(&ring, -3.0).unwrap();
        let b = sigma_threshold_eigen(&ring, -6.0).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-14);
        assert_eq!(sigma_threshold_eigen(&Digraph::empty(3), -1.0), Err(GainError::ZeroLaplacian));
        assert_eq!(sigma_threshold_eigen(&ring, 0.0), Err(GainError::NonNegativeIndex(0.0)));
    }

    #[test]
    fn degree_threshold_examples() {
        let s = sigma_threshold_degree(&[1.0; 4], &[-0.31, -0.49, -1.0, -0.68]).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        let s = sigma_threshold_degree(&[1.0; 4], &[-89.96, -37.77, -20.0, -12.0]).unwrap();
        assert!((s - 0.0056).abs() < 1e-4);
        let small = sigma_threshold_degree(&[1.0; 2], &[-1e-9, -1e-10]).unwrap();
        assert!(small > 1e8);
        assert_eq!(sigma_threshold_degree(&[1.0, 1.0], &[0.0, 0.0]), Err(GainError::Degenerate));
        assert!(matches!(sigma_threshold_degree(&[1.0], &[0.5]), Err(GainError::PositiveIndex(_))));
    }

    #[test]
    fn max_consensus_examples() {
        let ring = Digraph::directed_ring(4);
        let d = max_consensus(&ring, &[89.96, 37.77, 20.0, 12.0], 4);
        assert_eq!(d, vec![89.96; 4]);
        // Node i receives from i + 1, so the maximum at node 0 reaches node 3 first.
        let d1 = max_consensus(&ring, &[89.96, 37.77, 20.0, 12.0], 1);
        assert_eq!(d1, vec![89.96, 37.77, 20.0, 89.96]);

        assert_eq!(max_consensus(&Digraph::empty(1), &[3.0], 5), vec![3.0]);
        assert_eq!(max_consensus(&two_cycles(), &[1.0, 2.0, 5.0, 4.0], 4), vec![2.0, 2.0, 5.0, 5.0]);

        let th = max_consensus_threshold(&ring, &[1.0, 0.5, 0.25, 0.1], 4);
        assert_eq!(th, vec![0.5; 4]);
    }

    #[test]
    fn parse_gain_expressions() {
        assert_eq!(GainProfile::parse("0.005").unwrap(), GainProfile::constant(0.005));
        assert_eq!(GainProfile::parse("0.35 + 0.1*cos(t)").unwrap(), GainProfile::cos(0.35, 0.1));
        assert_eq!(GainProfile::parse("0.3+sin(t)").unwrap(), GainProfile::sin(0.3, 1.0));
        assert_eq!(
            GainProfile::parse("1 - 0.5*sin(2*t)").unwrap(),
            GainProfile::Sinusoidal { offset: 1.0, amplitude: -0.5, omega: 2.0, phase: 0.0, wave: Wave::Sin }
        );
        assert!(GainProfile::parse("tan(t)").is_err());
        assert!(GainProfile::parse("0.3 + sin(x)").is_err());
    }

    #[test]
    fn subgraph_assignment_follows_anchors() {
        let sched = SwitchingSchedule::constant(two_cycles());
        let profiles = [
            SubgraphProfile { anchor: Some(1), profile: GainProfile::sin(0.3, 0.1) },
            SubgraphProfile { anchor: None, profile: GainProfile::cos(0.35, 0.1) },
        ];
        let nus = [-0.31, -0.49, -1.0, -0.68];
        let gains = assign_subgraph_gains(&sched, &nus, &profiles, 20.0).unwrap();
        assert_eq!(gains.kind(), GainKind::PerSubgraph);
        let s = gains.eval(1.0, 0, 4);
        assert_eq!(s[0], s[1]);
        assert_eq!(s[2], s[3]);
        assert!((s[0] - (0.3 + 0.1 * 1f64.sin())).abs() < 1e-15);
        assert!((s[2] - (0.35 + 0.1 * 1f64.cos())).abs() < 1e-15);
    }

    #[test]
    fn constant_gain_above_bound_is_rejected() {
        let sched = SwitchingSchedule::constant(Digraph::directed_ring(4));
        let nus = [-0.31, -0.49, -1.0, -0.68];
        let err = check_admissible(&sched, &GainSchedule::Uniform(GainProfile::constant(0.6)), &nus, 10.0);
        assert!(matches!(err, Err(GainError::BoundViolated { bound, .. }) if (bound - 0.5).abs() < 1e-12));
        assert!(check_admissible(&sched, &GainSchedule::Uniform(GainProfile::constant(0.45)), &nus, 10.0).is_ok());
    }

    #[test]
    fn single_component_shares_one_profile() {
        let sched = SwitchingSchedule::constant(Digraph::directed_ring(4));
        let profiles = [
            SubgraphProfile { anchor: Some(2), profile: GainProfile::constant(0.2) },
            SubgraphProfile { anchor: None, profile: GainProfile::constant(0.3) },
        ];
        let gains = assign_subgraph_gains(&sched, &[-1.0; 4], &profiles, 1.0).unwrap();
        assert_eq!(gains.eval(0.0, 0, 4), vec![0.2; 4]);
    }

    #[test]
    fn literal_unit_amplitude_profiles_are_inadmissible() {
        let sched = SwitchingSchedule::constant(two_cycles());
        let profiles = [
            SubgraphProfile { anchor: Some(1), profile: GainProfile::sin(0.3, 1.0) },
            SubgraphProfile { anchor: None, profile: GainProfile::cos(0.35, 1.0) },
        ];
        let res = assign_subgraph_gains(&sched, &[-0.31, -0.49, -1.0, -0.68], &profiles, 10.0);
        assert!(res.is_err());
    }

    #[test]
    fn missing_fallback_is_reported() {
        let sched = SwitchingSchedule::constant(two_cycles());
        let profiles = [SubgraphProfile { anchor: Some(0), profile: GainProfile::constant(0.1) }];
        assert!(matches!(build_subgraph_gains(&sched, &profiles), Err(GainError::NoProfile { .. })));
    }

    #[test]
    fn report_for_ring() {
        let sched = SwitchingSchedule::constant(Digraph::directed_ring(4));
        let r = threshold_report(&sched, &[-89.96, -37.77, -20.0, -12.0]);
        assert!((r.sigma_deg.unwrap() - 1.0 / (2.0 * 89.96)).abs() < 1e-15);
        assert!((r.sigma_eig.unwrap() - 0.25 / 89.96).abs() < 1e-12);
        assert_eq!(r.per_graph[0].components, vec![vec![0, 1, 2, 3]]);
    }
}
