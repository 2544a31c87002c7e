//! Turns an [`ExperimentConfig`] into a validated network, analyzes it, runs it and
//! writes artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use passivity_opt::dynamics::{
    centralized_optimum, check_nonsingular, conserved_directions, linearized_system_matrix, reduced_spectral_abscissa,
    spectral_abscissa, Algorithm, LoopDiagnostics, Network, NetworkState, OptimalPoint,
};
use passivity_opt::gains::{
    build_subgraph_gains, check_admissible, check_positive, max_consensus_threshold, threshold_report, GainKind,
    GainProfile, GainSchedule, SubgraphProfile, ThresholdReport,
};
use passivity_opt::graph::{is_ujsc, min_ujsc_window, Digraph, Segment, SwitchingSchedule, DEFAULT_BALANCE_TOL};
use passivity_opt::objective::{make_example1, make_example2, Quadratic, SharedObjective};
use passivity_opt::passivity::{ifp_index_relaxed, AgentDesign, AgentParams, DEFAULT_ETA_GRID};
use passivity_opt::sim::{
    integrate, summarize, uniform_initial, write_csv, RunSummary, Scenario, SimConfig, SimError, Trajectory,
};

use crate::config::{AgentMatrices, ExperimentConfig, GraphSpec, MatrixSpec, ModeSpec, ObjectiveSpec, Selection};

pub const COND_SCHEMA: &str = "config schema";
pub const COND_CONVEXITY: &str = "strong convexity of every local objective";
pub const COND_COUPLING: &str = "output coupling K_i J_i = C^T";
pub const COND_IFP: &str = "non-positive IFP index";
pub const COND_BALANCE: &str = "weight balance of every graph";
pub const COND_INIT: &str = "initial condition sum_i K_i lam_i(0) = 0";
pub const COND_GAIN_BOUND: &str = "gain bound 0 < sigma_i(t) < 1/(2 max_j d_j |nu_j|) within each component";
pub const COND_GAIN_POSITIVE: &str = "positive coupling gain";
pub const COND_UJSC: &str = "uniform joint strong connectivity";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{condition} violated: {detail}")]
    Validation { condition: &'static str, detail: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(condition: &'static str, detail: impl ToString) -> ExperimentError {
    ExperimentError::Validation { condition, detail: detail.to_string() }
}

/// Command-line adjustments applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub gain: Option<String>,
    pub allow_inadmissible_gain: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(dt) = self.dt {
            cfg.sim.dt = dt;
        }
        if let Some(t) = self.t_end {
            cfg.sim.t_end = t;
        }
        if let Some(g) = &self.gain {
            cfg.gains.profile = Some(g.clone());
            cfg.gains.subgraph = None;
        }
    }
}

/// Outcome of one hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub condition: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentReport {
    pub agent: usize,
    pub objective: String,
    pub mu: f64,
    pub lip: f64,
    pub nu_pinned: Option<f64>,
    pub nu_minimax: f64,
    pub eta: f64,
    pub nu_relaxed: f64,
    /// Index used by the algorithm and the gain rules.
    pub nu_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeReport {
    pub mode: usize,
    pub balanced: bool,
    pub strongly_connected: bool,
    /// Strongly connected components, 1-based agents.
    pub components: Vec<Vec<usize>>,
    pub sigma_eig: Option<f64>,
    pub sigma_deg: Option<f64>,
    pub component_sigma_deg: Vec<Option<f64>>,
    /// Per-agent degree bound after distributed max-consensus over this graph.
    pub max_consensus_sigma: Vec<f64>,
    /// Same bounds evaluated with the computed minimax indices.
    pub sigma_eig_computed: Option<f64>,
    pub sigma_deg_computed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UjscReport {
    pub checked_window: Option<f64>,
    pub verdict: bool,
    /// Every window strictly longer than this satisfies the condition.
    pub min_window: Option<f64>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizationReport {
    pub sigma: f64,
    pub spectral_abscissa: f64,
    /// Abscissa on the subspace where the multiplier sum is zero.
    pub reduced_spectral_abscissa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub name: String,
    pub reproduces: Option<String>,
    pub algorithm: Algorithm,
    pub n_agents: usize,
    pub dim: usize,
    pub agents: Vec<AgentReport>,
    pub nu_pinned: Option<Vec<f64>>,
    pub nu_computed: Vec<f64>,
    pub sigma_eig: Option<f64>,
    pub sigma_deg: Option<f64>,
    pub modes: Vec<ModeReport>,
    pub ujsc: UjscReport,
    pub gain_kind: GainKind,
    pub gains: Vec<String>,
    pub x_star: Vec<f64>,
    pub lam_star: Vec<f64>,
    pub linearization: Option<LinearizationReport>,
    pub loop_diagnostics: Option<Vec<LoopDiagnostics>>,
    pub checks: Vec<Check>,
}

/// A fully built experiment.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub overrides: Overrides,
    pub network: Network,
    /// Minimax estimates before any pinning.
    pub computed: Vec<AgentParams>,
    pub relaxed: Vec<f64>,
    pub schedule: SwitchingSchedule,
    pub gains: GainSchedule,
    pub init: NetworkState,
    pub optimum: OptimalPoint,
    pub sim: SimConfig,
}

fn matrix(spec: &MatrixSpec, m: usize, what: &str) -> Result<DMatrix<f64>, ExperimentError> {
    match spec {
        MatrixSpec::Scalar(s) => Ok(DMatrix::identity(m, m) * *s),
        MatrixSpec::Rows(rows) => {
            if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                return Err(invalid(COND_SCHEMA, format!("{what} must be {m}x{m}")));
            }
            Ok(DMatrix::from_fn(m, m, |r, c| rows[r][c]))
        }
    }
}

fn agent_matrices(spec: &AgentMatrices, n: usize, m: usize, what: &str) -> Result<Vec<DMatrix<f64>>, ExperimentError> {
    match spec {
        AgentMatrices::Shared(s) => Ok(vec![matrix(s, m, what)?; n]),
        AgentMatrices::PerAgent(list) => {
            if list.len() != n {
                return Err(invalid(COND_SCHEMA, format!("params.{what} lists {} agents, expected {n}", list.len())));
            }
            list.iter().map(|s| matrix(s, m, what)).collect()
        }
    }
}

fn objective(spec: &ObjectiveSpec) -> Result<SharedObjective, ExperimentError> {
    let f: SharedObjective = match spec {
        ObjectiveSpec::Example1 { index } => make_example1(*index).map_err(|e| invalid(COND_SCHEMA, e))?,
        ObjectiveSpec::Example2 { index } => make_example2(*index).map_err(|e| invalid(COND_SCHEMA, e))?,
        ObjectiveSpec::Quadratic { weight, center, offset } => {
            let q = matrix(weight, center.len(), "objectives.weight")?;
            let quad = Quadratic::new(q, DVector::from_column_slice(center), *offset)
                .map_err(|e| invalid(COND_CONVEXITY, e))?;
            std::sync::Arc::new(quad)
        }
    };
    Ok(f)
}

fn dense_graph(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Digraph, ExperimentError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(COND_SCHEMA, format!("{what} must be {n}x{n}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Digraph::from_row_major(n, &flat).map_err(|e| invalid(COND_SCHEMA, format!("{what}: {e}")))
}

fn mode_graph(spec: &ModeSpec, n: usize, k: usize) -> Result<Digraph, ExperimentError> {
    let what = format!("graph.modes[{k}]");
    match (&spec.adjacency, &spec.edges) {
        (Some(rows), None) => dense_graph(rows, n, &what),
        (None, Some(edges)) => {
            let mut list = Vec::with_capacity(edges.len());
            for e in edges {
                let (r, s, w) = match e.as_slice() {
                    [r, s] => (*r, *s, 1.0),
                    [r, s, w] => (*r, *s, *w),
                    _ => {
                        return Err(invalid(
                            COND_SCHEMA,
                            format!("{what}.edges entries are [receiver, sender(, weight)]"),
                        ))
                    }
                };
                let idx = |v: f64| {
                    if v.fract() == 0.0 && v >= 1.0 && v <= n as f64 {
                        Ok(v as usize - 1)
                    } else {
                        Err(invalid(COND_SCHEMA, format!("{what}.edges: agent {v} is not in 1..={n}")))
                    }
                };
                list.push((idx(r)?, idx(s)?, w));
            }
            Digraph::from_edges(n, &list).map_err(|e| invalid(COND_SCHEMA, format!("{what}: {e}")))
        }
        _ => Err(invalid(COND_SCHEMA, format!("{what} needs exactly one of adjacency or edges"))),
    }
}

fn schedule(spec: &GraphSpec, n: usize, horizon: f64, seed: u64) -> Result<SwitchingSchedule, ExperimentError> {
    let given = [spec.adjacency.is_some(), spec.ring.is_some(), spec.modes.is_some()];
    if given.iter().filter(|&&b| b).count() != 1 {
        return Err(invalid(COND_SCHEMA, "graph needs exactly one of adjacency, ring or modes"));
    }
    if let Some(rows) = &spec.adjacency {
        return Ok(SwitchingSchedule::constant(dense_graph(rows, n, "graph.adjacency")?));
    }
    if let Some(r) = spec.ring {
        if r != n {
            return Err(invalid(COND_SCHEMA, format!("graph.ring = {r} but there are {n} agents")));
        }
        return Ok(SwitchingSchedule::constant(Digraph::directed_ring(n)));
    }
    let modes = spec.modes.as_ref().expect("checked above");
    let graphs = modes.iter().enumerate().map(|(k, m)| mode_graph(m, n, k + 1)).collect::<Result<Vec<_>, _>>()?;
    let err = |e: passivity_opt::graph::GraphError| invalid(COND_SCHEMA, format!("graph: {e}"));
    if let Some(segs) = &spec.segments {
        let segments = segs
            .iter()
            .map(|s| {
                if s.mode == 0 || s.mode > graphs.len() {
                    Err(invalid(COND_SCHEMA, format!("graph.segments: mode {} is not in 1..={}", s.mode, graphs.len())))
                } else {
                    Ok(Segment { start: s.start, mode: s.mode - 1 })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        return SwitchingSchedule::new(graphs, segments, spec.period).map_err(err);
    }
    if graphs.len() == 1 {
        return Ok(SwitchingSchedule::constant(graphs.into_iter().next().expect("one mode")));
    }
    let dwell = spec.dwell.ok_or_else(|| invalid(COND_SCHEMA, "graph.dwell is required with several modes"))?;
    match spec.selection.unwrap_or(Selection::Cyclic) {
        Selection::Cyclic => SwitchingSchedule::cyclic(graphs, dwell).map_err(err),
        Selection::Random => SwitchingSchedule::random(graphs, dwell, horizon, seed).map_err(err),
    }
}

fn parse_profile(expr: &str) -> Result<GainProfile, ExperimentError> {
    GainProfile::parse(expr).map_err(|e| invalid(COND_SCHEMA, e))
}

impl Experiment {
    pub fn build(mut config: ExperimentConfig, overrides: Overrides) -> Result<Self, ExperimentError> {
        overrides.apply(&mut config);
        let cfg = &config;
        let n = cfg.objectives.len();
        if n == 0 {
            return Err(invalid(COND_SCHEMA, "objectives must not be empty"));
        }
        let objectives = cfg.objectives.iter().map(objective).collect::<Result<Vec<_>, _>>()?;
        let m = objectives[0].dim();
        if objectives.iter().any(|f| f.dim() != m) {
            return Err(invalid(COND_SCHEMA, "all objectives must share one dimension"));
        }
        for (i, f) in objectives.iter().enumerate() {
            if f.mu() <= 0.0 || f.mu().is_nan() {
                return Err(invalid(COND_CONVEXITY, format!("agent {} has mu = {}", i + 1, f.mu())));
            }
        }

        let p = &cfg.params;
        let js = agent_matrices(&p.j, n, m, "j")?;
        let ks = agent_matrices(&p.k, n, m, "k")?;
        let c = match &p.c {
            Some(spec) => matrix(spec, m, "c")?,
            None => (&ks[0] * &js[0]).transpose(),
        };
        let grid = p.eta_grid.unwrap_or(DEFAULT_ETA_GRID);
        let mut computed = Vec::with_capacity(n);
        let mut relaxed = Vec::with_capacity(n);
        for i in 0..n {
            let design = AgentDesign::new(p.alpha, p.beta, p.gamma, js[i].clone(), ks[i].clone(), c.clone())
                .map_err(|e| invalid(COND_COUPLING, format!("agent {}: {e}", i + 1)))?;
            let f = objectives[i].as_ref();
            let range = design.default_eta_range(f.mu());
            let est = passivity_opt::passivity::ifp_index_minimax(&design, f, range, grid)
                .map_err(|e| invalid(COND_IFP, format!("agent {}: {e}", i + 1)))?;
            let params = AgentParams::new(design.clone(), est.nu.min(0.0), est.eta.max(range.0), f.mu())
                .map_err(|e| invalid(COND_IFP, format!("agent {}: {e}", i + 1)))?;
            relaxed.push(
                ifp_index_relaxed(&design, f.mu(), f.lip(), range, grid)
                    .map_err(|e| invalid(COND_IFP, format!("agent {}: {e}", i + 1)))?
                    .nu,
            );
            computed.push(params);
        }
        let agents = match &p.nu_pinned {
            None => computed.clone(),
            Some(pins) => {
                if pins.len() != n {
                    return Err(invalid(
                        COND_SCHEMA,
                        format!("params.nu_pinned lists {} agents, expected {n}", pins.len()),
                    ));
                }
                computed
                    .iter()
                    .zip(pins)
                    .enumerate()
                    .map(|(i, (a, &nu))| {
                        a.clone().with_pinned_nu(nu).map_err(|e| invalid(COND_IFP, format!("agent {}: {e}", i + 1)))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let network = Network::new(agents, objectives).map_err(|e| invalid(COND_COUPLING, e))?;

        let sim = SimConfig {
            dt: cfg.sim.dt,
            t_end: cfg.sim.t_end,
            record_every: cfg.sim.record_every,
            algorithm: cfg.sim.algorithm,
            monitor_lyapunov: cfg.sim.monitor_lyapunov,
            audit_passivity: cfg.sim.audit_passivity,
            divergence_norm: cfg.sim.divergence_norm,
            divergence_growth: cfg.sim.divergence_growth,
        };
        sim.validate().map_err(|e| invalid(COND_SCHEMA, e))?;

        let schedule = schedule(&cfg.graph, n, cfg.sim.t_end, cfg.seed)?;
        let gains = match (&cfg.gains.profile, &cfg.gains.subgraph) {
            (Some(expr), None) => GainSchedule::Uniform(parse_profile(expr)?),
            (None, Some(list)) => {
                let profiles = list
                    .iter()
                    .map(|s| {
                        let anchor = match s.anchor {
                            Some(a) if a == 0 || a > n => {
                                return Err(invalid(
                                    COND_SCHEMA,
                                    format!("gains.subgraph anchor {a} is not in 1..={n}"),
                                ))
                            }
                            a => a.map(|a| a - 1),
                        };
                        Ok(SubgraphProfile { anchor, profile: parse_profile(&s.profile)? })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                build_subgraph_gains(&schedule, &profiles).map_err(|e| invalid(COND_SCHEMA, e))?
            }
            _ => return Err(invalid(COND_SCHEMA, "gains needs exactly one of profile or subgraph")),
        };

        let len = n * m;
        let x = match (&cfg.init.x, cfg.init.x_uniform) {
            (Some(x), None) => x.clone(),
            (None, Some([lo, hi])) if lo <= hi => uniform_initial(len, lo, hi, cfg.seed.wrapping_add(1)),
            _ => return Err(invalid(COND_SCHEMA, "init needs exactly one of x or x_uniform = [lo, hi]")),
        };
        let lam = cfg.init.lam.clone().unwrap_or_else(|| vec![0.0; len]);
        if x.len() != len || lam.len() != len {
            return Err(invalid(COND_SCHEMA, format!("init.x and init.lam must have {len} entries")));
        }
        let optimum = centralized_optimum(&network, &x[..m]).map_err(|e| invalid(COND_CONVEXITY, e))?;

        Ok(Self {
            config,
            overrides,
            network,
            computed,
            relaxed,
            schedule,
            gains,
            init: NetworkState::new(0.0, x, lam),
            optimum,
            sim,
        })
    }

    pub fn from_toml(text: &str, overrides: Overrides) -> Result<Self, ExperimentError> {
        let cfg = ExperimentConfig::from_toml(text).map_err(|e| invalid(COND_SCHEMA, e.trim_end()))?;
        Self::build(cfg, overrides)
    }

    fn ujsc(&self) -> UjscReport {
        let horizon = self.sim.t_end.max(self.sim.dt);
        let min_window = min_ujsc_window(&self.schedule, horizon);
        let checked = self.config.checks.ujsc_window;
        let verdict = match checked {
            Some(w) => is_ujsc(&self.schedule, w, horizon).unwrap_or(false),
            None => min_window.is_some(),
        };
        UjscReport { checked_window: checked, verdict, min_window, horizon }
    }

    /// Evaluates every hypothesis the selected algorithm relies on.
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let unbalanced: Vec<usize> = self
            .schedule
            .modes()
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_weight_balanced(DEFAULT_BALANCE_TOL))
            .map(|(k, _)| k + 1)
            .collect();
        out.push(Check {
            condition: COND_BALANCE,
            passed: unbalanced.is_empty(),
            detail: if unbalanced.is_empty() {
                "all graphs balanced".into()
            } else {
                format!("unbalanced modes {unbalanced:?}")
            },
        });

        let k_lam = self.network.multiplier_sum(&self.init.lam);
        let norm = k_lam.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.push(Check {
            condition: COND_INIT,
            passed: norm <= passivity_opt::sim::INIT_MULTIPLIER_TOL,
            detail: format!("|sum_i K_i lam_i(0)| = {norm:e}"),
        });

        let horizon = self.sim.t_end.max(self.sim.dt);
        let (condition, res) = match self.sim.algorithm {
            Algorithm::Ifp => {
                (COND_GAIN_BOUND, check_admissible(&self.schedule, &self.gains, &self.network.nus(), horizon))
            }
            Algorithm::DerivativeFeedback => (COND_GAIN_POSITIVE, check_positive(&self.schedule, &self.gains, horizon)),
        };
        out.push(Check {
            condition,
            passed: res.is_ok(),
            detail: match res {
                Ok(()) => "admissible on every active interval".into(),
                Err(e) => e.to_string(),
            },
        });

        if self.config.checks.require_ujsc {
            let u = self.ujsc();
            out.push(Check {
                condition: COND_UJSC,
                passed: u.verdict,
                detail: match (u.checked_window, u.min_window) {
                    (Some(w), _) => format!("window {w} over horizon {}", u.horizon),
                    (None, Some(w)) => format!("every window longer than {w} works"),
                    (None, None) => "the union over the whole horizon is not strongly connected".into(),
                },
            });
        }
        out
    }

    /// First failing check that blocks a run.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        for c in self.checks() {
            let gain = c.condition == COND_GAIN_BOUND || c.condition == COND_GAIN_POSITIVE;
            let allowed = self.overrides.allow_inadmissible_gain || self.config.checks.allow_inadmissible_gain;
            if !c.passed && !(gain && allowed) {
                return Err(invalid(c.condition, c.detail));
            }
        }
        Ok(())
    }

    pub fn analyze(&self) -> AnalysisReport {
        let net = &self.network;
        let nus = net.nus();
        let nu_computed: Vec<f64> = self.computed.iter().map(|a| a.nu).collect();
        let pinned = self.config.params.nu_pinned.clone();
        let agents = (0..net.n_agents())
            .map(|i| {
                let f = &net.objectives()[i];
                AgentReport {
                    agent: i + 1,
                    objective: f.name(),
                    mu: f.mu(),
                    lip: f.lip(),
                    nu_pinned: pinned.as_ref().map(|p| p[i]),
                    nu_minimax: nu_computed[i],
                    eta: self.computed[i].eta,
                    nu_relaxed: self.relaxed[i],
                    nu_used: nus[i],
                }
            })
            .collect();
        let used = threshold_report(&self.schedule, &nus);
        let comp = threshold_report(&self.schedule, &nu_computed);
        let modes = self.mode_reports(&used, &comp, &nus);
        let gains = (0..self.schedule.modes().len())
            .flat_map(|k| (0..net.n_agents()).map(move |i| (k, i)))
            .map(|(k, i)| self.gains.profile(k, i).to_string())
            .collect::<Vec<_>>();
        let gains = match self.gains {
            GainSchedule::Uniform(p) => vec![p.to_string()],
            GainSchedule::PerSubgraph { .. } => gains,
        };
        AnalysisReport {
            name: self.config.name.clone(),
            reproduces: self.config.reproduces.clone(),
            algorithm: self.sim.algorithm,
            n_agents: net.n_agents(),
            dim: net.dim(),
            agents,
            nu_pinned: pinned,
            nu_computed,
            sigma_eig: used.sigma_eig,
            sigma_deg: used.sigma_deg,
            modes,
            ujsc: self.ujsc(),
            gain_kind: self.gains.kind(),
            gains,
            x_star: self.optimum.x_star.clone(),
            lam_star: self.optimum.lam_star.clone(),
            linearization: self.linearization(),
            loop_diagnostics: self.loop_diagnostics(),
            checks: self.checks(),
        }
    }

    fn mode_reports(&self, used: &ThresholdReport, comp: &ThresholdReport, nus: &[f64]) -> Vec<ModeReport> {
        let n = self.network.n_agents();
        self.schedule
            .modes()
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let u = &used.per_graph[k];
                let local: Vec<f64> = (0..n).map(|i| g.in_degree(i) * nus[i].abs()).collect();
                ModeReport {
                    mode: k + 1,
                    balanced: g.is_weight_balanced(DEFAULT_BALANCE_TOL),
                    strongly_connected: g.is_strongly_connected(),
                    components: u.components.iter().map(|c| c.iter().map(|i| i + 1).collect()).collect(),
                    sigma_eig: u.sigma_eig,
                    sigma_deg: u.sigma_deg,
                    component_sigma_deg: u.component_sigma_deg.clone(),
                    max_consensus_sigma: max_consensus_threshold(g, &local, n),
                    sigma_eig_computed: comp.per_graph[k].sigma_eig,
                    sigma_deg_computed: comp.per_graph[k].sigma_deg,
                }
            })
            .collect()
    }

    fn constant_uniform_gain(&self) -> Option<f64> {
        match self.gains {
            GainSchedule::Uniform(GainProfile::Constant { value }) => Some(value),
            _ => None,
        }
    }

    /// Error-system spectrum, for quadratic objectives on a fixed graph with a constant gain.
    fn linearization(&self) -> Option<LinearizationReport> {
        if self.sim.algorithm != Algorithm::Ifp || self.schedule.modes().len() != 1 {
            return None;
        }
        let sigma = self.constant_uniform_gain()?;
        let a = linearized_system_matrix(&self.network, &self.schedule.modes()[0], sigma).ok()?;
        let w = conserved_directions(&self.network);
        Some(LinearizationReport {
            sigma,
            spectral_abscissa: spectral_abscissa(&a),
            reduced_spectral_abscissa: reduced_spectral_abscissa(&a, &w),
        })
    }

    fn loop_diagnostics(&self) -> Option<Vec<LoopDiagnostics>> {
        if self.sim.algorithm != Algorithm::DerivativeFeedback {
            return None;
        }
        let sigma = self.constant_uniform_gain()?;
        let js: Vec<DMatrix<f64>> = self.network.agents().iter().map(|a| a.design.j.clone()).collect();
        let nus = self.network.nus();
        Some(self.schedule.modes().iter().map(|g| check_nonsingular(g, sigma, &nus, &js)).collect())
    }

    pub fn scenario(&self) -> Scenario<'_> {
        Scenario { network: &self.network, schedule: &self.schedule, gains: &self.gains, optimum: &self.optimum }
    }

    /// Validates and integrates.
    pub fn run(&self) -> Result<RunOutcome, ExperimentError> {
        self.validate()?;
        let trajectory = integrate(&self.sim, self.scenario(), &self.init)?;
        let summary = summarize(&trajectory, self.sim.algorithm, &self.network, &self.optimum);
        Ok(RunOutcome { trajectory, summary })
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.diverged {
            2
        } else {
            0
        }
    }
}

/// Where a config came from, for the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub name: String,
    pub reproduces: Option<String>,
    pub source: String,
    pub config_sha256: String,
    pub seed: u64,
    pub overrides: Overrides,
    pub tool_version: String,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    name: &'a str,
    seed: u64,
    run: &'a RunSummary,
    analysis: &'a AnalysisReport,
}

/// Writes `trajectory.csv`, `summary.json` and `manifest.json` into `dir`.
pub fn write_artifacts(
    dir: &Path,
    exp: &Experiment,
    outcome: &RunOutcome,
    source: &str,
    config_text: &str,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    let csv = BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?);
    write_csv(&outcome.trajectory, csv)?;
    let analysis = exp.analyze();
    let summary =
        SummaryFile { name: &exp.config.name, seed: exp.config.seed, run: &outcome.summary, analysis: &analysis };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    let manifest = Manifest {
        name: exp.config.name.clone(),
        reproduces: exp.config.reproduces.clone(),
        source: source.to_string(),
        config_sha256: sha256_hex(config_text),
        seed: exp.config.seed,
        overrides: exp.overrides.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
