//! Fixed-step RK4 integration aligned to switching instants, trajectory metrics,
//! Lyapunov monitoring and a per-agent passivity audit.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Algorithm, DynamicsError, Network, NetworkState, OptimalPoint, RhsEvaluator};
use crate::gains::GainSchedule;
use crate::graph::SwitchingSchedule;
use crate::passivity::supply_rate;

/// Tolerance on `sum_i K_i lam_i(0)`.
pub const INIT_MULTIPLIER_TOL: f64 = 1e-10;
/// Switching instants closer than this to a grid point are snapped onto it.
pub const GRID_SNAP: f64 = 1e-9;
/// Allowed growth per unit time of the Lyapunov function and of the storage balance.
pub const MONITOR_RATE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dt must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("t_end must be non-negative and finite, got {0}")]
    BadEnd(f64),
    #[error("record_every must be at least 1")]
    BadRecord,
    #[error("initial condition sum_i K_i lam_i(0) = 0 violated (norm {0:e})")]
    InitialMultiplier(f64),
    #[error("initial state is not finite")]
    NonFiniteInit,
    #[error("schedule has {got} nodes, network has {expected} agents")]
    NodeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub algorithm: Algorithm,
    pub monitor_lyapunov: bool,
    pub audit_passivity: bool,
    /// State norm above which the run is stopped.
    pub divergence_norm: f64,
    /// Stop once the optimality gap exceeds this multiple of its initial value.
    pub divergence_growth: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 40.0,
            record_every: 10,
            algorithm: Algorithm::Ifp,
            monitor_lyapunov: true,
            audit_passivity: true,
            divergence_norm: 1e9,
            divergence_growth: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::BadStep(self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SimError::BadEnd(self.t_end));
        }
        if self.record_every == 0 {
            return Err(SimError::BadRecord);
        }
        Ok(())
    }
}

/// Everything the flow needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub network: &'a Network,
    pub schedule: &'a SwitchingSchedule,
    pub gains: &'a GainSchedule,
    pub optimum: &'a OptimalPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// `max_{i,j} |x_i - x_j|`
    pub consensus_error: f64,
    /// `max_i |x_i - x*|`
    pub optimality_gap: f64,
    /// `sum_i V_i`
    pub lyapunov: f64,
    /// `|sum_i K_i lam_i(t) - sum_i K_i lam_i(0)|`
    pub multiplier_invariant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceReason {
    NonFinite,
    NormExceeded,
    GapGrowth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub t: f64,
    pub reason: DivergenceReason,
}

/// Storage-balance check `V_i(b) - V_i(a) <= int_a^b (y_i^T u_i - nu_i |u_i|^2) dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassivityAudit {
    /// Largest `V_i(b) - V_i(a) - supply` over all agents and record intervals.
    pub max_excess: f64,
    pub violations: usize,
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub max_increase: f64,
    pub violations: usize,
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NetworkState>,
    pub metrics: Vec<Metrics>,
    pub divergence: Option<Divergence>,
    pub passivity: Option<PassivityAudit>,
    pub steps: usize,
    pub dt: f64,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn final_state(&self) -> &NetworkState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn final_metrics(&self) -> &Metrics {
        self.metrics.last().expect("trajectory always holds the initial state")
    }

    pub fn max_multiplier_invariant(&self) -> f64 {
        self.metrics.iter().map(|m| m.multiplier_invariant).fold(0.0, f64::max)
    }
}

/// Per-agent distance computations.
fn metrics(net: &Network, st: &NetworkState, opt: &OptimalPoint, k_lam0: &[f64]) -> Metrics {
    let (n, m) = (net.n_agents(), net.dim());
    let agent = |i: usize| &st.x[i * m..(i + 1) * m];
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let mut consensus_error: f64 = 0.0;
    let mut optimality_gap: f64 = 0.0;
    for i in 0..n {
        optimality_gap = optimality_gap.max(dist(agent(i), &opt.x_star));
        for j in i + 1..n {
            consensus_error = consensus_error.max(dist(agent(i), agent(j)));
        }
    }
    let k_lam = net.multiplier_sum(&st.lam);
    Metrics {
        consensus_error,
        optimality_gap,
        lyapunov: net.lyapunov(&st.x, &st.lam, opt),
        multiplier_invariant: dist(&k_lam, k_lam0),
    }
}

struct Workspace {
    k: [Vec<f64>; 4],
    l: [Vec<f64>; 4],
    u: Vec<f64>,
    xs: Vec<f64>,
    ls: Vec<f64>,
    sigma: Vec<f64>,
}

impl Workspace {
    fn new(len: usize, n: usize) -> Self {
        let z = || vec![0.0; len];
        Self { k: [z(), z(), z(), z()], l: [z(), z(), z(), z()], u: z(), xs: z(), ls: z(), sigma: vec![0.0; n] }
    }
}

/// One classic RK4 step of length `h` with graph `mode` held fixed. Leaves the
/// coupling input at the step start in `u0`.
#[allow(clippy::too_many_arguments)]
fn rk4_step(
    ev: &mut RhsEvaluator<'_>,
    gains: &GainSchedule,
    mode: usize,
    t: f64,
    h: f64,
    x: &mut [f64],
    lam: &mut [f64],
    ws: &mut Workspace,
    u0: &mut [f64],
) -> Result<(), DynamicsError> {
    let offsets = [0.0, 0.5 * h, 0.5 * h, h];
    for s in 0..4 {
        if s == 0 {
            ws.xs.copy_from_slice(x);
            ws.ls.copy_from_slice(lam);
        } else {
            let c = offsets[s];
            let (kp, lp) = (&ws.k[s - 1], &ws.l[s - 1]);
            for i in 0..x.len() {
                ws.xs[i] = x[i] + c * kp[i];
                ws.ls[i] = lam[i] + c * lp[i];
            }
        }
        gains.eval_into(t + offsets[s], mode, &mut ws.sigma);
        ev.eval(mode, &ws.sigma, &ws.xs, &ws.ls, &mut ws.k[s], &mut ws.l[s], &mut ws.u)?;
        if s == 0 {
            u0.copy_from_slice(&ws.u);
        }
    }
    for i in 0..x.len() {
        x[i] += h / 6.0 * (ws.k[0][i] + 2.0 * ws.k[1][i] + 2.0 * ws.k[2][i] + ws.k[3][i]);
        lam[i] += h / 6.0 * (ws.l[0][i] + 2.0 * ws.l[1][i] + 2.0 * ws.l[2][i] + ws.l[3][i]);
    }
    Ok(())
}

/// Per-agent supply rates `y_i^T u_i - nu_i |u_i|^2` with the storage-certified index.
fn supply_rates(net: &Network, x: &[f64], u: &[f64], x_star: &[f64], out: &mut [f64]) {
    let m = net.dim();
    for (i, o) in out.iter_mut().enumerate() {
        let y = net.output(i, x, x_star);
        *o = supply_rate(net.agents()[i].storage_nu, &y, &u[i * m..(i + 1) * m]);
    }
}

/// Integrates the selected flow from `init` to `config.t_end`.
pub fn integrate(config: &SimConfig, sc: Scenario<'_>, init: &NetworkState) -> Result<Trajectory, SimError> {
    config.validate()?;
    let net = sc.network;
    if sc.schedule.n_nodes() != net.n_agents() {
        return Err(SimError::NodeMismatch { expected: net.n_agents(), got: sc.schedule.n_nodes() });
    }
    let len = net.state_len();
    if init.x.len() != len || init.lam.len() != len {
        return Err(DynamicsError::DimensionMismatch { expected: len, got: init.x.len().min(init.lam.len()) }.into());
    }
    if !init.is_finite() {
        return Err(SimError::NonFiniteInit);
    }
    let k_lam0 = net.multiplier_sum(&init.lam);
    let k_norm = k_lam0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if k_norm > INIT_MULTIPLIER_TOL {
        return Err(SimError::InitialMultiplier(k_norm));
    }

    let mut ev = RhsEvaluator::new(net, config.algorithm, sc.schedule.modes())?;
    let mut ws = Workspace::new(len, net.n_agents());
    let n = net.n_agents();
    let mut x = init.x.clone();
    let mut lam = init.lam.clone();
    let mut t = init.t;
    let dt = config.dt;
    let t0 = init.t;
    let n_grid = ((config.t_end - t0) / dt).round().max(0.0) as usize;

    let first = metrics(net, init, sc.optimum, &k_lam0);
    let gap0 = first.optimality_gap;
    let mut traj = Trajectory {
        times: vec![t],
        states: vec![init.clone()],
        metrics: vec![first],
        divergence: None,
        passivity: None,
        steps: 0,
        dt,
    };

    // Passivity audit: storage at the last record and per-agent supply integrals since.
    let audit = config.audit_passivity;
    let mut u0 = vec![0.0; len];
    let mut x_prev = vec![0.0; len];
    let mut s_prev = vec![0.0; n];
    let mut s_now = vec![0.0; n];
    let mut supply_acc = vec![0.0; n];
    let mut v_last: Vec<f64> = (0..n).map(|i| net.storage(i, &x, &lam, sc.optimum)).collect();
    let mut t_last = t;
    let mut pending_h = 0.0;
    let mut have_prev = false;
    let mut pa = PassivityAudit { max_excess: f64::NEG_INFINITY, violations: 0, intervals: 0 };
    let (mut dx_tmp, mut dl_tmp) = (vec![0.0; len], vec![0.0; len]);

    let mut k = 0usize;
    while k < n_grid {
        let t_grid = t0 + (k + 1) as f64 * dt;
        let mode = sc.schedule.mode_at(t);
        let mut t_next = t_grid;
        let mut on_grid = true;
        if let Some(sw) = sc.schedule.next_switch_after(t) {
            if sw < t_grid - GRID_SNAP {
                t_next = sw;
                on_grid = false;
            }
        }
        let h = t_next - t;
        if audit {
            x_prev.copy_from_slice(&x);
        }
        rk4_step(&mut ev, sc.gains, mode, t, h, &mut x, &mut lam, &mut ws, &mut u0)?;
        if audit {
            supply_rates(net, &x_prev, &u0, &sc.optimum.x_star, &mut s_now);
            if have_prev {
                for i in 0..n {
                    supply_acc[i] += 0.5 * pending_h * (s_prev[i] + s_now[i]);
                }
            }
            s_prev.copy_from_slice(&s_now);
            pending_h = h;
            have_prev = true;
        }
        t = t_next;
        traj.steps += 1;
        if on_grid {
            k += 1;
        }
        let diverge = if !x.iter().chain(&lam).all(|v| v.is_finite()) {
            Some(DivergenceReason::NonFinite)
        } else if x.iter().chain(&lam).map(|v| v * v).sum::<f64>().sqrt() > config.divergence_norm {
            Some(DivergenceReason::NormExceeded)
        } else {
            None
        };
        let record = diverge.is_some() || (on_grid && (k.is_multiple_of(config.record_every) || k == n_grid));
        if !record {
            continue;
        }
        let st = NetworkState::new(t, x.clone(), lam.clone());
        let me = metrics(net, &st, sc.optimum, &k_lam0);
        let growth = config.divergence_growth.filter(|g| gap0 > 0.0 && me.optimality_gap > g * gap0);
        traj.times.push(t);
        traj.states.push(st);
        traj.metrics.push(me);
        if let Some(reason) = diverge.or(growth.map(|_| DivergenceReason::GapGrowth)) {
            traj.divergence = Some(Divergence { t, reason });
            break;
        }
        if audit {
            // Close the last trapezoid with the input at the interval end, same graph.
            sc.gains.eval_into(t, mode, &mut ws.sigma);
            ev.eval(mode, &ws.sigma, &x, &lam, &mut dx_tmp, &mut dl_tmp, &mut ws.u)?;
            supply_rates(net, &x, &ws.u, &sc.optimum.x_star, &mut s_now);
            let tol = MONITOR_RATE_TOL * (t - t_last);
            for i in 0..n {
                supply_acc[i] += 0.5 * pending_h * (s_prev[i] + s_now[i]);
                let v = net.storage(i, &x, &lam, sc.optimum);
                let excess = v - v_last[i] - supply_acc[i];
                pa.max_excess = pa.max_excess.max(excess);
                if excess > tol {
                    pa.violations += 1;
                }
                v_last[i] = v;
                supply_acc[i] = 0.0;
            }
            pa.intervals += 1;
            t_last = t;
            have_prev = false;
        }
    }
    if audit {
        traj.passivity = Some(pa);
    }
    Ok(traj)
}

/// Reports increases of `sum_i V_i` between consecutive records larger than
/// [`MONITOR_RATE_TOL`] times the interval length.
pub fn monitor_lyapunov(traj: &Trajectory) -> LyapunovReport {
    let mut report = LyapunovReport { max_increase: 0.0, violations: 0, intervals: 0 };
    for (w, tw) in traj.metrics.windows(2).zip(traj.times.windows(2)) {
        let inc = w[1].lyapunov - w[0].lyapunov;
        report.intervals += 1;
        report.max_increase = report.max_increase.max(inc);
        if inc > MONITOR_RATE_TOL * (tw[1] - tw[0]) {
            report.violations += 1;
        }
    }
    report
}

/// Writes the trajectory as CSV with one row per record.
pub fn write_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    let len = traj.states[0].x.len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=len).map(|i| format!("x_{i}")));
    header.extend((1..=len).map(|i| format!("lam_{i}")));
    header.extend(["consensus_error", "optimality_gap", "lyapunov", "multiplier_invariant"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for ((t, st), me) in traj.times.iter().zip(&traj.states).zip(&traj.metrics) {
        write!(w, "{t}")?;
        for v in st.x.iter().chain(&st.lam) {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{},{},{},{}", me.consensus_error, me.optimality_gap, me.lyapunov, me.multiplier_invariant)?;
    }
    Ok(())
}

/// `len` values drawn uniformly from `[lo, hi]` with a seeded ChaCha stream.
pub fn uniform_initial(len: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// Compact end-of-run figures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub t_final: f64,
    pub steps: usize,
    pub final_gap: f64,
    pub final_consensus_error: f64,
    /// Mean of the agents' decision variables at the end.
    pub consensus_value: Vec<f64>,
    pub x_star: Vec<f64>,
    pub diverged: bool,
    pub divergence: Option<Divergence>,
    pub max_multiplier_invariant: f64,
    pub lyapunov: LyapunovReport,
    pub passivity: Option<PassivityAudit>,
}

pub fn summarize(traj: &Trajectory, algorithm: Algorithm, net: &Network, opt: &OptimalPoint) -> RunSummary {
    let (n, m) = (net.n_agents(), net.dim());
    let last = traj.final_state();
    let consensus_value = (0..m).map(|r| (0..n).map(|i| last.x[i * m + r]).sum::<f64>() / n as f64).collect();
    let fm = traj.final_metrics();
    RunSummary {
        algorithm,
        t_final: last.t,
        steps: traj.steps,
        final_gap: fm.optimality_gap,
        final_consensus_error: fm.consensus_error,
        consensus_value,
        x_star: opt.x_star.clone(),
        diverged: traj.diverged(),
        divergence: traj.divergence.clone(),
        max_multiplier_invariant: traj.max_multiplier_invariant(),
        lyapunov: monitor_lyapunov(traj),
        passivity: traj.passivity.clone(),
    }
}
