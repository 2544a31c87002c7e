//! Experiment configuration file (TOML).
//!
//! Agents are numbered from 1 in config files and reports.

use serde::{Deserialize, Serialize};

use passivity_opt::dynamics::Algorithm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Which reference experiment this configuration reproduces, if any.
    #[serde(default)]
    pub reproduces: Option<String>,
    /// Seed for random schedules and random initial points.
    #[serde(default)]
    pub seed: u64,
    pub objectives: Vec<ObjectiveSpec>,
    pub params: ParamsSpec,
    pub graph: GraphSpec,
    pub gains: GainSpec,
    pub init: InitSpec,
    pub sim: SimSpec,
    #[serde(default)]
    pub checks: ChecksSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Nonlinear scalar family, `index` in 1..=4.
    Example1 { index: usize },
    /// Quadratic scalar family `0.025 (i + 1)(x - i)^2`, `index` in 1..=4.
    Example2 { index: usize },
    /// `(x - center)^T W (x - center) + offset`.
    Quadratic {
        weight: MatrixSpec,
        center: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
}

/// A scalar (meaning `s I`) or a matrix given as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

/// One matrix shared by all agents, or one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentMatrices {
    Shared(MatrixSpec),
    PerAgent(Vec<MatrixSpec>),
}

impl Default for AgentMatrices {
    fn default() -> Self {
        AgentMatrices::Shared(MatrixSpec::Scalar(1.0))
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub j: AgentMatrices,
    #[serde(default)]
    pub k: AgentMatrices,
    /// Shared output matrix; defaults to `(K_1 J_1)^T`.
    #[serde(default)]
    pub c: Option<MatrixSpec>,
    /// IFP indices to use instead of the computed ones.
    #[serde(default)]
    pub nu_pinned: Option<Vec<f64>>,
    #[serde(default)]
    pub eta_grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Cyclic,
    Random,
}

/// Exactly one of `adjacency`, `ring` or `modes`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// `adjacency[i][j] > 0` means agent `i` receives from agent `j`.
    #[serde(default)]
    pub adjacency: Option<Vec<Vec<f64>>>,
    /// Directed ring where agent `i` receives from agent `i + 1`.
    #[serde(default)]
    pub ring: Option<usize>,
    #[serde(default)]
    pub modes: Option<Vec<ModeSpec>>,
    #[serde(default)]
    pub dwell: Option<f64>,
    #[serde(default)]
    pub selection: Option<Selection>,
    /// Explicit segments; overrides `dwell` and `selection`.
    #[serde(default)]
    pub segments: Option<Vec<SegmentSpec>>,
    /// Repeat explicit segments with this period.
    #[serde(default)]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    #[serde(default)]
    pub adjacency: Option<Vec<Vec<f64>>>,
    /// `[receiver, sender]` or `[receiver, sender, weight]`, 1-based.
    #[serde(default)]
    pub edges: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub start: f64,
    /// 1-based mode number.
    pub mode: usize,
}

/// Either one `profile` for every agent or a list of per-component `subgraph` profiles.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    /// Gain expression such as `0.005` or `0.35 + 0.1*cos(t)`.
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub subgraph: Option<Vec<SubgraphSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgraphSpec {
    /// The component containing this agent (1-based) gets `profile`; omit for the fallback.
    #[serde(default)]
    pub anchor: Option<usize>,
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// Stacked decision variables, agent-major.
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    /// Draw every entry of `x` uniformly from `[lo, hi]` using the seed.
    #[serde(default)]
    pub x_uniform: Option<[f64; 2]>,
    /// Stacked multipliers; zero when omitted.
    #[serde(default)]
    pub lam: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_record() -> usize {
    10
}
fn yes() -> bool {
    true
}
fn default_norm() -> f64 {
    1e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub algorithm: Algorithm,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub monitor_lyapunov: bool,
    #[serde(default = "yes")]
    pub audit_passivity: bool,
    #[serde(default = "default_norm")]
    pub divergence_norm: f64,
    #[serde(default)]
    pub divergence_growth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    /// Window length for the joint-connectivity check; the smallest valid window is
    /// computed when omitted.
    #[serde(default)]
    pub ujsc_window: Option<f64>,
    #[serde(default = "yes")]
    pub require_ujsc: bool,
    /// Run even if the gains break the bound the algorithm needs (instability studies).
    #[serde(default)]
    pub allow_inadmissible_gain: bool,
}

impl Default for ChecksSpec {
    fn default() -> Self {
        Self { ujsc_window: None, require_ujsc: true, allow_inadmissible_gain: false }
    }
}

impl ExperimentConfig {
    /// Parses a config; errors name the offending key path.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let de = toml::Deserializer::parse(text).map_err(|e| e.to_string())?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            format!("at `{path}`: {}", e.into_inner().to_string().trim_end())
        })
    }
}
