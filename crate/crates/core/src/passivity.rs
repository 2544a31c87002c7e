//! Input-feedforward-passivity (IFP) indices of the per-agent error subsystems and
//! the storage function used to monitor runs.
//!
//! For agent parameters `(alpha, beta, gamma, C)` and an objective with Hessian range
//! `[mu, lip]`, a storage parameter `eta > 1 / (mu alpha gamma)` certifies
//!
//! ```text
//! nu(eta) = -max_H || eta (alpha beta H - gamma C^T) - (beta / gamma) I ||^2
//!                 / (4 (mu eta alpha - 1 / gamma))
//! ```
//!
//! and the best certificate minimises the ratio over `eta`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::objective::Objective;

/// Factor by which the storage parameter is kept above `1 / (mu alpha gamma)`.
pub const ETA_MARGIN: f64 = 1e-6;

/// Number of log-spaced grid points used before golden-section refinement.
pub const DEFAULT_ETA_GRID: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PassivityError {
    #[error("alpha and gamma must be positive (alpha = {alpha}, gamma = {gamma})")]
    BadGains { alpha: f64, gamma: f64 },
    #[error("matrices must all be {m}x{m}")]
    BadShape { m: usize },
    #[error("{0} is not invertible")]
    Singular(&'static str),
    #[error("K J must equal C^T (residual {0:.3e})")]
    CouplingMismatch(f64),
    #[error("storage parameter eta = {eta} must exceed 1/(mu alpha gamma) = {bound}")]
    EtaTooSmall { eta: f64, bound: f64 },
    #[error("IFP index must be non-positive, got {0}")]
    PositiveIndex(f64),
    #[error("empty eta search range ({lo}, {hi}) above the bound {bound}")]
    EmptyRange { lo: f64, hi: f64, bound: f64 },
    #[error("non-finite value while estimating the IFP index")]
    NonFinite,
    #[error("strong convexity constant must be positive, got {0}")]
    BadMu(f64),
}

/// Algorithm constants for one agent, before an IFP index is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDesign {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl AgentDesign {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        j: DMatrix<f64>,
        k: DMatrix<f64>,
        c: DMatrix<f64>,
    ) -> Result<Self, PassivityError> {
        if !(alpha > 0.0) || !(gamma > 0.0) || !beta.is_finite() {
            return Err(PassivityError::BadGains { alpha, gamma });
        }
        let m = c.nrows();
        if m == 0 || c.shape() != (m, m) || j.shape() != (m, m) || k.shape() != (m, m) {
            return Err(PassivityError::BadShape { m });
        }
        for (name, mat) in [("J", &j), ("K", &k)] {
            if !is_well_conditioned(mat) {
                return Err(PassivityError::Singular(name));
            }
        }
        let residual = (&k * &j - c.transpose()).norm();
        if residual > 1e-10 {
            return Err(PassivityError::CouplingMismatch(residual));
        }
        Ok(Self { alpha, beta, gamma, j, k, c })
    }

    /// Scalar agent (`m = 1`) with `C = K J`.
    pub fn scalar(alpha: f64, beta: f64, gamma: f64, j: f64, k: f64) -> Result<Self, PassivityError> {
        let one = |v| DMatrix::from_element(1, 1, v);
        Self::new(alpha, beta, gamma, one(j), one(k), one(k * j))
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// Lower bound on admissible storage parameters, `1 / (mu alpha gamma)`.
    pub fn eta_bound(&self, mu: f64) -> f64 {
        1.0 / (mu * self.alpha * self.gamma)
    }

    /// `(bound (1 + 1e-6), 1e3 bound)`.
    pub fn default_eta_range(&self, mu: f64) -> (f64, f64) {
        let b = self.eta_bound(mu);
        (b * (1.0 + ETA_MARGIN), 1e3 * b)
    }
}

fn is_well_conditioned(m: &DMatrix<f64>) -> bool {
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    hi.is_finite() && lo > 0.0 && hi / lo < 1e12
}

/// Full per-agent parameter set: design constants, IFP index and storage parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub design: AgentDesign,
    /// IFP index used by the algorithm and gain rules (estimated or pinned).
    pub nu: f64,
    /// Storage parameter of `V_i`.
    pub eta: f64,
    /// Index certified by `eta` for the storage function; equals `nu` unless `nu` was
    /// pinned to an external value.
    pub storage_nu: f64,
}

impl AgentParams {
    pub fn new(design: AgentDesign, nu: f64, eta: f64, mu: f64) -> Result<Self, PassivityError> {
        if nu > 0.0 || !nu.is_finite() {
            return Err(PassivityError::PositiveIndex(nu));
        }
        let bound = design.eta_bound(mu);
        if !(eta > bound) {
            return Err(PassivityError::EtaTooSmall { eta, bound });
        }
        Ok(Self { design, nu, eta, storage_nu: nu })
    }

    /// Estimates `nu` and `eta` with [`ifp_index_minimax`] over the default range.
    pub fn estimated(design: AgentDesign, f: &dyn Objective) -> Result<Self, PassivityError> {
        let range = design.default_eta_range(f.mu());
        let est = ifp_index_minimax(&design, f, range, DEFAULT_ETA_GRID)?;
        let eta = est.eta.max(design.eta_bound(f.mu()) * (1.0 + ETA_MARGIN));
        Ok(Self { design, nu: est.nu, eta, storage_nu: est.nu })
    }

    /// Replaces the algorithmic index, keeping the storage certificate.
    pub fn with_pinned_nu(mut self, nu: f64) -> Result<Self, PassivityError> {
        if nu > 0.0 || !nu.is_finite() {
            return Err(PassivityError::PositiveIndex(nu));
        }
        self.nu = nu;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IfpEstimate {
    pub nu: f64,
    pub eta: f64,
}

/// Minimax estimate of the IFP index.
///
/// For `m = 1` the inner maximum over the Hessian is taken over `{mu, lip}` and the
/// zero crossing of the numerator when it lies in between. For `m > 1` this falls
/// back to [`ifp_index_relaxed`]. The outer minimum is located on a log-spaced grid of
/// `grid` points and refined by golden-section search (the ratio is convex in `eta`).
pub fn ifp_index_minimax(
    design: &AgentDesign,
    f: &dyn Objective,
    eta_range: (f64, f64),
    grid: usize,
) -> Result<IfpEstimate, PassivityError> {
    let (mu, lip) = (f.mu(), f.lip());
    if design.dim() != 1 {
        return ifp_index_relaxed(design, mu, lip, eta_range, grid);
    }
    let AgentDesign { alpha, beta, gamma, .. } = *design;
    let ct = design.c[(0, 0)];
    let ratio = move |eta: f64| {
        let num = |h: f64| eta * (alpha * beta * h - gamma * ct) - beta / gamma;
        let mut worst = num(mu).powi(2).max(num(lip).powi(2));
        if beta != 0.0 {
            let h0 = (beta / gamma + eta * gamma * ct) / (eta * alpha * beta);
            if h0 > mu && h0 < lip {
                worst = worst.max(num(h0).powi(2));
            }
        }
        worst / (4.0 * (mu * eta * alpha - 1.0 / gamma))
    };
    minimize_ratio(design, mu, eta_range, grid, ratio)
}

/// Relaxed (more conservative) index from the triangle inequality and `lip`:
///
/// `-min_eta ((eta alpha lip + 1/gamma)|beta| + eta gamma ||C^T||)^2 / (4 (mu eta alpha - 1/gamma))`.
pub fn ifp_index_relaxed(
    design: &AgentDesign,
    mu: f64,
    lip: f64,
    eta_range: (f64, f64),
    grid: usize,
) -> Result<IfpEstimate, PassivityError> {
    let AgentDesign { alpha, beta, gamma, .. } = *design;
    let c_norm = design.c.transpose().svd(false, false).singular_values.max();
    let ratio = move |eta: f64| {
        let num = (eta * alpha * lip + 1.0 / gamma) * beta.abs() + eta * gamma * c_norm;
        num * num / (4.0 * (mu * eta * alpha - 1.0 / gamma))
    };
    minimize_ratio(design, mu, eta_range, grid, ratio)
}

fn minimize_ratio(
    design: &AgentDesign,
    mu: f64,
    (lo, hi): (f64, f64),
    grid: usize,
    ratio: impl Fn(f64) -> f64,
) -> Result<IfpEstimate, PassivityError> {
    if !(mu > 0.0) {
        return Err(PassivityError::BadMu(mu));
    }
    let bound = design.eta_bound(mu);
    if !(lo > bound) || !(hi > lo) || !hi.is_finite() {
        return Err(PassivityError::EmptyRange { lo, hi, bound });
    }
    let grid = grid.max(3);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let point = |k: usize| (llo + (lhi - llo) * k as f64 / (grid - 1) as f64).exp();

    let mut best = (0, f64::INFINITY);
    for k in 0..grid {
        let v = ratio(point(k));
        if v.is_nan() {
            return Err(PassivityError::NonFinite);
        }
        if v < best.1 {
            best = (k, v);
        }
    }
    let (mut a, mut b) = (point(best.0.saturating_sub(1)), point((best.0 + 1).min(grid - 1)));

    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (ratio(c), ratio(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = ratio(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = ratio(d);
        }
    }
    let refined = 0.5 * (a + b);
    let refined_value = ratio(refined);
    let (eta, value) = if refined_value <= best.1 { (refined, refined_value) } else { (point(best.0), best.1) };
    if !value.is_finite() {
        return Err(PassivityError::NonFinite);
    }
    Ok(IfpEstimate { nu: -value, eta })
}

/// Storage value `V_i` and the auxiliary signal `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageEvaluation {
    pub value: f64,
    pub z: Vec<f64>,
}

/// Evaluates
///
/// ```text
/// V = (eta/2) z^T z - (1/gamma) dx^T K dlam + (alpha/gamma) [f(x*) - f(x)]
///     + (alpha/gamma) grad f(x*)^T dx,
/// z = alpha [grad f(x) - grad f(x*)] + K dlam.
/// ```
pub fn storage_value(
    p: &AgentParams,
    f: &dyn Objective,
    x: &[f64],
    lam: &[f64],
    x_star: &[f64],
    lam_star: &[f64],
) -> StorageEvaluation {
    let m = x.len();
    let d = &p.design;
    let mut gx = vec![0.0; m];
    let mut gs = vec![0.0; m];
    f.gradient(x, &mut gx);
    f.gradient(x_star, &mut gs);
    let dx: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let dl: Vec<f64> = lam.iter().zip(lam_star).map(|(a, b)| a - b).collect();

    let mut z = vec![0.0; m];
    let mut cross = 0.0;
    for r in 0..m {
        let mut k_dl = 0.0;
        for c in 0..m {
            k_dl += d.k[(r, c)] * dl[c];
        }
        z[r] = d.alpha * (gx[r] - gs[r]) + k_dl;
        cross += dx[r] * k_dl;
    }
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let lin: f64 = gs.iter().zip(&dx).map(|(g, v)| g * v).sum();
    let value = 0.5 * p.eta * zz - cross / d.gamma
        + d.alpha / d.gamma * (f.value(x_star) - f.value(x))
        + d.alpha / d.gamma * lin;
    StorageEvaluation { value, z }
}

/// IFP supply rate `y^T u - nu u^T u`.
pub fn supply_rate(nu: f64, y: &[f64], u: &[f64]) -> f64 {
    let yu: f64 = y.iter().zip(u).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|v| v * v).sum();
    yu - nu * uu
}
