//! Right-hand sides of the IFP-based flow and the derivative-feedback flow, the
//! algebraic-loop solve, and optimal-point and linearization oracles.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Digraph;
use crate::objective::SharedObjective;
use crate::passivity::{storage_value, AgentParams};

/// Residual target of the centralized Newton solve.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITERS: usize = 100;
/// Conditioning above which the loop matrix is reported as numerically singular.
pub const SINGULAR_COND: f64 = 1e14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("network needs at least one agent")]
    NoAgents,
    #[error("agent {0} uses a different output matrix C; C must be shared")]
    CouplingMismatch(usize),
    #[error("Newton solve did not converge in {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("loop matrix I - J Sigma L nu J^-1 is singular (condition number {cond:e})")]
    SingularLoop { cond: f64 },
    #[error("objective {0} has no constant Hessian")]
    NonQuadratic(usize),
    #[error("J of agent {0} is not invertible")]
    SingularJ(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// IFP-based flow with a bounded coupling gain.
    #[serde(rename = "alg1")]
    Ifp,
    /// Derivative-feedback flow that accepts any positive gain.
    #[serde(rename = "alg2")]
    DerivativeFeedback,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Ifp => "alg1",
            Algorithm::DerivativeFeedback => "alg2",
        }
    }
}

/// Stacked decision variables and multipliers, agent-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
}

impl NetworkState {
    pub fn new(t: f64, x: Vec<f64>, lam: Vec<f64>) -> Self {
        Self { t, x, lam }
    }

    /// `lam(0) = 0`, which satisfies the multiplier initialization.
    pub fn with_zero_multipliers(x: Vec<f64>) -> Self {
        let lam = vec![0.0; x.len()];
        Self { t: 0.0, x, lam }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.lam).all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.x.iter().chain(&self.lam).map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalPoint {
    pub x_star: Vec<f64>,
    /// `lam_i* = -K_i^{-1} alpha grad f_i(x*)`, agent-major.
    pub lam_star: Vec<f64>,
}

/// Time derivative of a [`NetworkState`] together with the coupling input `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dx: Vec<f64>,
    pub dlam: Vec<f64>,
    pub u: Vec<f64>,
}

/// Agents, their local objectives and the shared decision dimension.
#[derive(Debug, Clone)]
pub struct Network {
    agents: Vec<AgentParams>,
    objectives: Vec<SharedObjective>,
    m: usize,
    j_inv: Vec<DMatrix<f64>>,
}

impl Network {
    pub fn new(agents: Vec<AgentParams>, objectives: Vec<SharedObjective>) -> Result<Self, DynamicsError> {
        if agents.is_empty() {
            return Err(DynamicsError::NoAgents);
        }
        if agents.len() != objectives.len() {
            return Err(DynamicsError::DimensionMismatch { expected: agents.len(), got: objectives.len() });
        }
        let m = agents[0].design.dim();
        let c0 = &agents[0].design.c;
        let mut j_inv = Vec::with_capacity(agents.len());
        for (i, (a, f)) in agents.iter().zip(&objectives).enumerate() {
            if a.design.dim() != m {
                return Err(DynamicsError::DimensionMismatch { expected: m, got: a.design.dim() });
            }
            if f.dim() != m {
                return Err(DynamicsError::DimensionMismatch { expected: m, got: f.dim() });
            }
            if (&a.design.c - c0).amax() > 1e-12 {
                return Err(DynamicsError::CouplingMismatch(i));
            }
            j_inv.push(a.design.j.clone().try_inverse().ok_or(DynamicsError::SingularJ(i))?);
        }
        Ok(Self { agents, objectives, m, j_inv })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn state_len(&self) -> usize {
        self.agents.len() * self.m
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn objectives(&self) -> &[SharedObjective] {
        &self.objectives
    }

    pub fn nus(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.nu).collect()
    }

    fn c(&self) -> &DMatrix<f64> {
        &self.agents[0].design.c
    }

    fn check_state(&self, x: &[f64], lam: &[f64]) -> Result<(), DynamicsError> {
        let n = self.state_len();
        for len in [x.len(), lam.len()] {
            if len != n {
                return Err(DynamicsError::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }

    fn check_graph(&self, g: &Digraph, sigma: &[f64]) -> Result<(), DynamicsError> {
        let n = self.n_agents();
        for len in [g.n_nodes(), sigma.len()] {
            if len != n {
                return Err(DynamicsError::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }

    /// `sum_i K_i lam_i`.
    pub fn multiplier_sum(&self, lam: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut s = vec![0.0; m];
        for (i, a) in self.agents.iter().enumerate() {
            for r in 0..m {
                for c in 0..m {
                    s[r] += a.design.k[(r, c)] * lam[i * m + c];
                }
            }
        }
        s
    }

    /// Sum of the agents' storage functions relative to `opt`.
    pub fn lyapunov(&self, x: &[f64], lam: &[f64], opt: &OptimalPoint) -> f64 {
        (0..self.n_agents()).map(|i| self.storage(i, x, lam, opt)).sum()
    }

    /// Storage function of agent `i`.
    pub fn storage(&self, i: usize, x: &[f64], lam: &[f64], opt: &OptimalPoint) -> f64 {
        let m = self.m;
        let s = i * m..(i + 1) * m;
        storage_value(
            &self.agents[i],
            self.objectives[i].as_ref(),
            &x[s.clone()],
            &lam[s.clone()],
            &opt.x_star,
            &opt.lam_star[s],
        )
        .value
    }

    /// `y_i = C (x_i - x*)`.
    pub fn output(&self, i: usize, x: &[f64], x_star: &[f64]) -> Vec<f64> {
        let m = self.m;
        let c = self.c();
        (0..m).map(|r| (0..m).map(|k| c[(r, k)] * (x[i * m + k] - x_star[k])).sum()).collect()
    }
}

/// Minimizes `sum_i f_i` by damped Newton and derives the optimal multipliers.
pub fn centralized_optimum(net: &Network, x0: &[f64]) -> Result<OptimalPoint, DynamicsError> {
    let x_star = minimize_sum(net.objectives(), x0)?;
    let m = net.dim();
    let mut lam_star = vec![0.0; net.state_len()];
    let mut g = vec![0.0; m];
    for (i, (a, f)) in net.agents().iter().zip(net.objectives()).enumerate() {
        f.gradient(&x_star, &mut g);
        let rhs = DVector::from_iterator(m, g.iter().map(|v| -a.design.alpha * v));
        let sol = a.design.k.clone().lu().solve(&rhs).ok_or(DynamicsError::SingularJ(i))?;
        lam_star[i * m..(i + 1) * m].copy_from_slice(sol.as_slice());
    }
    Ok(OptimalPoint { x_star, lam_star })
}

/// Solves `sum_i grad f_i(x) = 0` to [`NEWTON_TOL`].
pub fn minimize_sum(fs: &[SharedObjective], x0: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let m = x0.len();
    let total = |x: &[f64]| fs.iter().map(|f| f.value(x)).sum::<f64>();
    let grad = |x: &[f64]| {
        let mut g = DVector::zeros(m);
        let mut gi = vec![0.0; m];
        for f in fs {
            f.gradient(x, &mut gi);
            g += DVector::from_column_slice(&gi);
        }
        g
    };
    let mut x = x0.to_vec();
    let mut g = grad(&x);
    for _ in 0..NEWTON_MAX_ITERS {
        if g.norm() <= NEWTON_TOL {
            return Ok(x);
        }
        let h = fs.iter().fold(DMatrix::zeros(m, m), |acc, f| acc + f.hessian(&x));
        let step = h.lu().solve(&(-&g)).ok_or(DynamicsError::NoConvergence { iters: 0, residual: g.norm() })?;
        // Backtrack on the objective, but accept full steps that reduce the gradient.
        let f0 = total(&x);
        let mut t = 1.0;
        let mut candidate;
        loop {
            candidate = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect::<Vec<_>>();
            let gc = grad(&candidate);
            if total(&candidate) <= f0 + 1e-4 * t * g.dot(&step) || gc.norm() < g.norm() || t < 1e-10 {
                g = gc;
                break;
            }
            t *= 0.5;
        }
        x = candidate;
    }
    if g.norm() <= NEWTON_TOL {
        Ok(x)
    } else {
        Err(DynamicsError::NoConvergence { iters: NEWTON_MAX_ITERS, residual: g.norm() })
    }
}

/// Diffusive input `u_i = sigma_i sum_j a_ij C (x_j - x_i)`, written into `u`.
fn coupling_input(net: &Network, lap: &DMatrix<f64>, sigma: &[f64], x: &[f64], y: &mut [f64], u: &mut [f64]) {
    let (n, m) = (net.n_agents(), net.dim());
    let c = net.c();
    for i in 0..n {
        for r in 0..m {
            y[i * m + r] = (0..m).map(|k| c[(r, k)] * x[i * m + k]).sum();
        }
    }
    for i in 0..n {
        for r in 0..m {
            let mut acc = 0.0;
            for j in 0..n {
                let l = lap[(i, j)];
                if l != 0.0 {
                    acc += l * y[j * m + r];
                }
            }
            u[i * m + r] = -sigma[i] * acc;
        }
    }
}

/// `dx = -alpha grad f - K lam + beta u`.
fn primal_rate(net: &Network, x: &[f64], lam: &[f64], u: &[f64], dx: &mut [f64]) {
    let m = net.dim();
    for (i, (a, f)) in net.agents().iter().zip(net.objectives()).enumerate() {
        let s = i * m..(i + 1) * m;
        f.gradient(&x[s.clone()], &mut dx[s.clone()]);
        for r in 0..m {
            let k_lam: f64 = (0..m).map(|c| a.design.k[(r, c)] * lam[i * m + c]).sum();
            dx[i * m + r] = -a.design.alpha * dx[i * m + r] - k_lam + a.design.beta * u[i * m + r];
        }
    }
}

/// `I - J Sigma (L kron I) nu J^{-1}`.
pub fn loop_matrix(net: &Network, lap: &DMatrix<f64>, sigma: &[f64]) -> DMatrix<f64> {
    let (n, m) = (net.n_agents(), net.dim());
    let mut mat = DMatrix::identity(n * m, n * m);
    for i in 0..n {
        let ji = &net.agents()[i].design.j;
        for j in 0..n {
            let l = lap[(i, j)];
            if l == 0.0 {
                continue;
            }
            let block = ji * &net.j_inv[j] * (sigma[i] * l * net.agents()[j].nu);
            let mut view = mat.view_mut((i * m, j * m), (m, m));
            view -= &block;
        }
    }
    mat
}

type LoopFactor = LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// Reusable buffers and loop-matrix factorizations for repeated evaluation.
#[derive(Debug)]
pub struct RhsEvaluator<'a> {
    net: &'a Network,
    algorithm: Algorithm,
    laplacians: Vec<DMatrix<f64>>,
    y: Vec<f64>,
    rhs: DVector<f64>,
    factors: HashMap<usize, (Vec<f64>, LoopFactor)>,
    /// Number of loop-matrix factorizations performed.
    pub factorizations: usize,
}

impl<'a> RhsEvaluator<'a> {
    pub fn new(net: &'a Network, algorithm: Algorithm, modes: &[Digraph]) -> Result<Self, DynamicsError> {
        for g in modes {
            if g.n_nodes() != net.n_agents() {
                return Err(DynamicsError::DimensionMismatch { expected: net.n_agents(), got: g.n_nodes() });
            }
        }
        let len = net.state_len();
        Ok(Self {
            net,
            algorithm,
            laplacians: modes.iter().map(Digraph::laplacian).collect(),
            y: vec![0.0; len],
            rhs: DVector::zeros(len),
            factors: HashMap::new(),
            factorizations: 0,
        })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Evaluates the flow with graph `mode` active and per-agent gains `sigma`.
    #[allow(clippy::too_many_arguments)]
    pub fn eval(
        &mut self,
        mode: usize,
        sigma: &[f64],
        x: &[f64],
        lam: &[f64],
        dx: &mut [f64],
        dlam: &mut [f64],
        u: &mut [f64],
    ) -> Result<(), DynamicsError> {
        let net = self.net;
        let m = net.dim();
        let lap = &self.laplacians[mode];
        coupling_input(net, lap, sigma, x, &mut self.y, u);
        match self.algorithm {
            Algorithm::Ifp => {
                for (i, a) in net.agents().iter().enumerate() {
                    for r in 0..m {
                        dlam[i * m + r] =
                            -a.design.gamma * (0..m).map(|c| a.design.j[(r, c)] * u[i * m + c]).sum::<f64>();
                    }
                }
            }
            Algorithm::DerivativeFeedback => {
                // M dlam = gamma J Sigma L C x, where Sigma L C x = -u_open.
                for (i, a) in net.agents().iter().enumerate() {
                    for r in 0..m {
                        self.rhs[i * m + r] =
                            -a.design.gamma * (0..m).map(|c| a.design.j[(r, c)] * u[i * m + c]).sum::<f64>();
                    }
                }
                let stale = match self.factors.get(&mode) {
                    Some((s, _)) => s.as_slice() != sigma,
                    None => true,
                };
                if stale {
                    let mat = loop_matrix(net, lap, sigma);
                    let lu = mat.lu();
                    if !lu.is_invertible() {
                        return Err(DynamicsError::SingularLoop { cond: f64::INFINITY });
                    }
                    self.factorizations += 1;
                    self.factors.insert(mode, (sigma.to_vec(), lu));
                }
                let (_, lu) = &self.factors[&mode];
                if !lu.solve_mut(&mut self.rhs) {
                    return Err(DynamicsError::SingularLoop { cond: f64::INFINITY });
                }
                dlam.copy_from_slice(self.rhs.as_slice());
                // u_i = -(1/gamma) J_i^{-1} dlam_i
                for (i, a) in net.agents().iter().enumerate() {
                    let ji = &net.j_inv[i];
                    for r in 0..m {
                        u[i * m + r] = -(0..m).map(|c| ji[(r, c)] * dlam[i * m + c]).sum::<f64>() / a.design.gamma;
                    }
                }
            }
        }
        primal_rate(net, x, lam, u, dx);
        Ok(())
    }
}

fn rhs_once(
    net: &Network,
    algorithm: Algorithm,
    state: &NetworkState,
    g: &Digraph,
    sigma: &[f64],
) -> Result<Derivative, DynamicsError> {
    net.check_state(&state.x, &state.lam)?;
    net.check_graph(g, sigma)?;
    let len = net.state_len();
    let mut d = Derivative { dx: vec![0.0; len], dlam: vec![0.0; len], u: vec![0.0; len] };
    let mut ev = RhsEvaluator::new(net, algorithm, std::slice::from_ref(g))?;
    ev.eval(0, sigma, &state.x, &state.lam, &mut d.dx, &mut d.dlam, &mut d.u)?;
    Ok(d)
}

/// Per-agent evaluation of the IFP-based flow.
pub fn alg1_rhs(net: &Network, state: &NetworkState, g: &Digraph, sigma: &[f64]) -> Result<Derivative, DynamicsError> {
    rhs_once(net, Algorithm::Ifp, state, g, sigma)
}

/// Derivative-feedback flow; the loop is resolved by an LU solve of `M`.
pub fn alg2_rhs(net: &Network, state: &NetworkState, g: &Digraph, sigma: &[f64]) -> Result<Derivative, DynamicsError> {
    rhs_once(net, Algorithm::DerivativeFeedback, state, g, sigma)
}

/// Block-diagonal matrices and Kronecker-expanded operators of the compact forms.
struct CompactOperators {
    j: DMatrix<f64>,
    j_inv: DMatrix<f64>,
    k: DMatrix<f64>,
    c: DMatrix<f64>,
    sigma_l: DMatrix<f64>,
    nu: DMatrix<f64>,
}

fn block_diag(blocks: impl Iterator<Item = DMatrix<f64>>, n: usize, m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n * m, n * m);
    for (i, b) in blocks.enumerate() {
        out.view_mut((i * m, i * m), (m, m)).copy_from(&b);
    }
    out
}

fn compact_operators(net: &Network, g: &Digraph, sigma: &[f64]) -> CompactOperators {
    let (n, m) = (net.n_agents(), net.dim());
    let eye = DMatrix::<f64>::identity(m, m);
    let sig = DMatrix::from_diagonal(&DVector::from_column_slice(sigma));
    let sigma_l = (sig * g.laplacian()).kronecker(&eye);
    let ag = net.agents();
    CompactOperators {
        j: block_diag(ag.iter().map(|a| a.design.j.clone()), n, m),
        j_inv: block_diag(net.j_inv.iter().cloned(), n, m),
        k: block_diag(ag.iter().map(|a| a.design.k.clone()), n, m),
        c: block_diag((0..n).map(|_| net.c().clone()), n, m),
        sigma_l,
        nu: block_diag(ag.iter().map(|a| &eye * a.nu), n, m),
    }
}

fn stacked_gradient(net: &Network, x: &[f64]) -> DVector<f64> {
    let m = net.dim();
    let mut g = DVector::zeros(net.state_len());
    for (i, f) in net.objectives().iter().enumerate() {
        f.gradient(&x[i * m..(i + 1) * m], &mut g.as_mut_slice()[i * m..(i + 1) * m]);
    }
    g
}

fn alpha_beta_gamma(net: &Network) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (net.n_agents(), net.dim());
    let diag = |f: &dyn Fn(&AgentParams) -> f64| {
        let v = DVector::from_iterator(n * m, net.agents().iter().flat_map(|a| std::iter::repeat_n(f(a), m)));
        DMatrix::from_diagonal(&v)
    };
    (diag(&|a| a.design.alpha), diag(&|a| a.design.beta), diag(&|a| a.design.gamma))
}

/// Compact form `dx = -alpha grad f - K lam - beta Sigma L C x`, `dlam = gamma J Sigma L C x`.
pub fn alg1_rhs_compact(
    net: &Network,
    state: &NetworkState,
    g: &Digraph,
    sigma: &[f64],
) -> Result<Derivative, DynamicsError> {
    net.check_state(&state.x, &state.lam)?;
    net.check_graph(g, sigma)?;
    let ops = compact_operators(net, g, sigma);
    let (alpha, beta, gamma) = alpha_beta_gamma(net);
    let x = DVector::from_column_slice(&state.x);
    let lam = DVector::from_column_slice(&state.lam);
    let slcx = &ops.sigma_l * &ops.c * &x;
    let dx = -(&alpha * stacked_gradient(net, &state.x)) - &ops.k * &lam - &beta * &slcx;
    let dlam = &gamma * &ops.j * &slcx;
    Ok(Derivative { dx: dx.as_slice().to_vec(), dlam: dlam.as_slice().to_vec(), u: (-slcx).as_slice().to_vec() })
}

/// Explicit form of the derivative-feedback flow using `M^{-1}`.
pub fn alg2_rhs_explicit(
    net: &Network,
    state: &NetworkState,
    g: &Digraph,
    sigma: &[f64],
) -> Result<Derivative, DynamicsError> {
    net.check_state(&state.x, &state.lam)?;
    net.check_graph(g, sigma)?;
    let ops = compact_operators(net, g, sigma);
    let (alpha, beta, gamma) = alpha_beta_gamma(net);
    let n = net.state_len();
    let mat = DMatrix::identity(n, n) - &ops.j * &ops.sigma_l * &ops.nu * &ops.j_inv;
    let m_inv = mat.try_inverse().ok_or(DynamicsError::SingularLoop { cond: f64::INFINITY })?;
    let x = DVector::from_column_slice(&state.x);
    let lam = DVector::from_column_slice(&state.lam);
    let jslcx = &ops.j * &ops.sigma_l * &ops.c * &x;
    let dx = -(&alpha * stacked_gradient(net, &state.x)) - &ops.k * &lam - &beta * &ops.j_inv * &m_inv * &jslcx;
    let dlam = &gamma * &m_inv * &jslcx;
    let u = -(&ops.j_inv * &m_inv * &jslcx);
    Ok(Derivative { dx: dx.as_slice().to_vec(), dlam: dlam.as_slice().to_vec(), u: u.as_slice().to_vec() })
}

/// Well-posedness diagnostics of the algebraic loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopDiagnostics {
    pub nonsingular: bool,
    pub condition_number: f64,
    /// Smallest real part among the eigenvalues of `-L nu`.
    pub min_real_part_neg_l_nu: f64,
    /// Smallest distance from an eigenvalue of `-J Sigma L nu J^{-1}` to `-1`.
    pub distance_to_minus_one: f64,
}

/// Checks that `I - sigma J L nu J^{-1}` is invertible for a uniform gain.
pub fn check_nonsingular(g: &Digraph, sigma: f64, nus: &[f64], j_blocks: &[DMatrix<f64>]) -> LoopDiagnostics {
    let n = g.n_nodes();
    assert_eq!(nus.len(), n, "one index per node");
    assert_eq!(j_blocks.len(), n, "one J block per node");
    let m = j_blocks[0].nrows();
    let eye = DMatrix::<f64>::identity(m, m);
    let l = g.laplacian();
    let nu = DMatrix::from_diagonal(&DVector::from_column_slice(nus));
    let neg_l_nu = -(&l * &nu);
    let min_re = neg_l_nu.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);

    let j = block_diag(j_blocks.iter().cloned(), n, m);
    let j_inv = block_diag(j_blocks.iter().map(|b| b.clone().try_inverse().unwrap_or_else(|| &eye * f64::NAN)), n, m);
    let q = -(&j * (&l * &nu).kronecker(&eye) * &j_inv) * sigma;
    let dist = q.complex_eigenvalues().iter().map(|z| (z.re + 1.0).hypot(z.im)).fold(f64::INFINITY, f64::min);
    let mat = DMatrix::identity(n * m, n * m) + q;
    let sv = mat.svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    LoopDiagnostics {
        nonsingular: cond.is_finite() && cond < SINGULAR_COND,
        condition_number: cond,
        min_real_part_neg_l_nu: min_re,
        distance_to_minus_one: dist,
    }
}

/// Error-system matrix of the IFP-based flow for quadratic objectives and a uniform gain:
/// `[[-alpha F - sigma beta L C, -K], [sigma gamma J L C, 0]]`.
pub fn linearized_system_matrix(net: &Network, g: &Digraph, sigma: f64) -> Result<DMatrix<f64>, DynamicsError> {
    let (n, m) = (net.n_agents(), net.dim());
    net.check_graph(g, &vec![sigma; n])?;
    let mut hess = Vec::with_capacity(n);
    for (i, f) in net.objectives().iter().enumerate() {
        hess.push(f.constant_hessian().ok_or(DynamicsError::NonQuadratic(i))?);
    }
    let ops = compact_operators(net, g, &vec![sigma; n]);
    let (alpha, beta, gamma) = alpha_beta_gamma(net);
    let f = block_diag(hess.into_iter(), n, m);
    let nm = n * m;
    let mut a = DMatrix::zeros(2 * nm, 2 * nm);
    a.view_mut((0, 0), (nm, nm)).copy_from(&(-(&alpha * f) - &beta * &ops.sigma_l * &ops.c));
    a.view_mut((0, nm), (nm, nm)).copy_from(&(-&ops.k));
    a.view_mut((nm, 0), (nm, nm)).copy_from(&(&gamma * &ops.j * &ops.sigma_l * &ops.c));
    Ok(a)
}

/// Directions `w` with `w^T A = 0`: the components of `sum_i K_i dlam_i`.
pub fn conserved_directions(net: &Network) -> DMatrix<f64> {
    let (n, m) = (net.n_agents(), net.dim());
    let nm = n * m;
    let mut w = DMatrix::zeros(2 * nm, m);
    for (i, a) in net.agents().iter().enumerate() {
        for r in 0..m {
            for c in 0..m {
                w[(nm + i * m + c, r)] = a.design.k[(r, c)];
            }
        }
    }
    w
}

/// Largest real part of the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral abscissa of `a` restricted to the invariant subspace `{z : w^T z = 0}`.
///
/// The conserved quantities contribute structural zero eigenvalues that say nothing
/// about stability of the trajectories that start on the subspace.
pub fn reduced_spectral_abscissa(a: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let gram = w.transpose() * w;
    let gram_inv = gram.try_inverse().expect("conserved directions must be independent");
    let proj = DMatrix::identity(n, n) - w * gram_inv * w.transpose();
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.5)
        .map(|(k, _)| eig.eigenvectors.column(k).into_owned())
        .collect();
    let q = DMatrix::from_columns(&cols);
    spectral_abscissa(&(q.transpose() * a * &q))
}
