//! Local objective functions with exact derivative oracles and declared convexity
//! constants.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("catalog index {0} out of range (expected 1..=4)")]
    IndexOutOfRange(usize),
    #[error("quadratic weight must be square {dim}x{dim}")]
    BadShape { dim: usize },
    #[error("quadratic weight must be symmetric positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("box bounds must have matching dimension and lower < upper")]
    BadBox,
}

/// A `C^2`, strongly convex function with `mu I <= hessian <= lip I`.
///
/// The constants are data carried by the function so gain formulas can read them
/// without re-deriving them.
pub trait Objective: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes the gradient at `x` into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
    /// Strong convexity constant.
    fn mu(&self) -> f64;
    /// Lipschitz constant of the gradient.
    fn lip(&self) -> f64;
    fn name(&self) -> String;
    /// Hessian if it does not depend on `x`.
    fn constant_hessian(&self) -> Option<DMatrix<f64>> {
        None
    }
}

pub type SharedObjective = Arc<dyn Objective>;

/// Allocating convenience wrapper around [`Objective::gradient`].
pub fn gradient_vec(f: &dyn Objective, x: &[f64]) -> DVector<f64> {
    let mut g = DVector::zeros(f.dim());
    f.gradient(x, g.as_mut_slice());
    g
}

/// `f(x) = (x - c)^T Q (x - c) + offset` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q: DMatrix<f64>,
    center: DVector<f64>,
    offset: f64,
    mu: f64,
    lip: f64,
    label: String,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, center: DVector<f64>, offset: f64) -> Result<Self, ObjectiveError> {
        let dim = center.len();
        if q.shape() != (dim, dim) || dim == 0 {
            return Err(ObjectiveError::BadShape { dim });
        }
        let sym = (&q + q.transpose()) * 0.5;
        if (&sym - &q).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(ObjectiveError::NotPositiveDefinite(f64::NAN));
        }
        let eig = SymmetricEigen::new(sym.clone()).eigenvalues;
        let lo = eig.min();
        if !(lo > 0.0) {
            return Err(ObjectiveError::NotPositiveDefinite(lo));
        }
        let label = format!("quadratic(dim={dim})");
        Ok(Self { mu: 2.0 * lo, lip: 2.0 * eig.max(), q: sym, center, offset, label })
    }

    /// Scalar `weight * (x - center)^2`.
    pub fn scalar(weight: f64, center: f64) -> Result<Self, ObjectiveError> {
        Self::new(DMatrix::from_element(1, 1, weight), DVector::from_element(1, center), 0.0)
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.center;
        d.dot(&(&self.q * &d)) + self.offset
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.q[(i, j)] * (x[j] - self.center[j]);
            }
            out[i] = 2.0 * acc;
        }
    }

    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        &self.q * 2.0
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn lip(&self) -> f64 {
        self.lip
    }

    fn name(&self) -> String {
        self.label.clone()
    }

    fn constant_hessian(&self) -> Option<DMatrix<f64>> {
        Some(&self.q * 2.0)
    }
}

/// Closed-form scalar terms used by the first numerical example.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarKind {
    /// `ln(e^{-0.3x} + e^{0.5x}) + 0.6x^2`
    LogSumExp,
    /// `x^2 + cos x`
    Cosine,
    /// `x^2 / sqrt(x^2 + 1) + 0.9x^2`
    SqrtRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarObjective {
    kind: ScalarKind,
    mu: f64,
    lip: f64,
    label: String,
}

impl ScalarObjective {
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self.kind {
            ScalarKind::LogSumExp => {
                // Shifted log-sum-exp keeps the exponentials bounded for large |x|.
                let (a, b) = (-0.3 * x, 0.5 * x);
                let m = a.max(b);
                let (ea, eb) = ((a - m).exp(), (b - m).exp());
                let s = ea + eb;
                let p = eb / s;
                let value = m + s.ln() + 0.6 * x * x;
                let grad = -0.3 + 0.8 * p + 1.2 * x;
                let hess = 0.64 * p * (1.0 - p) + 1.2;
                (value, grad, hess)
            }
            ScalarKind::Cosine => (x * x + x.cos(), 2.0 * x - x.sin(), 2.0 - x.cos()),
            ScalarKind::SqrtRatio => {
                let r2 = x * x + 1.0;
                let r = r2.sqrt();
                let value = x * x / r + 0.9 * x * x;
                let grad = x * (x * x + 2.0) / (r2 * r) + 1.8 * x;
                let hess = (2.0 - x * x) / (r2 * r2 * r) + 1.8;
                (value, grad, hess)
            }
        }
    }
}

impl Objective for ScalarObjective {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x[0]).0
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.eval(x[0]).1;
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.eval(x[0]).2)
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn lip(&self) -> f64 {
        self.lip
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Local objective `i` (1-based) of the four-agent nonlinear example:
///
/// 1. `0.4x^2 - x`
/// 2. `ln(e^{-0.3x} + e^{0.5x}) + 0.6x^2`
/// 3. `x^2 + cos x`
/// 4. `x^2 / sqrt(x^2 + 1) + 0.9x^2`
pub fn make_example1(i: usize) -> Result<SharedObjective, ObjectiveError> {
    let scalar = |kind, mu, lip| -> SharedObjective {
        Arc::new(ScalarObjective { kind, mu, lip, label: format!("example1[{i}]") })
    };
    Ok(match i {
        // 0.4x^2 - x = 0.4(x - 1.25)^2 - 0.625
        1 => Arc::new(
            Quadratic::new(DMatrix::from_element(1, 1, 0.4), DVector::from_element(1, 1.25), -0.625)?
                .with_label("example1[1]"),
        ),
        2 => scalar(ScalarKind::LogSumExp, 1.20, 1.36),
        3 => scalar(ScalarKind::Cosine, 1.0, 3.0),
        4 => scalar(ScalarKind::SqrtRatio, 1.76, 3.8),
        _ => return Err(ObjectiveError::IndexOutOfRange(i)),
    })
}

/// Local objective `i` (1-based) of the quadratic example: `0.025 (i + 1)(x - i)^2`.
pub fn make_example2(i: usize) -> Result<SharedObjective, ObjectiveError> {
    if !(1..=4).contains(&i) {
        return Err(ObjectiveError::IndexOutOfRange(i));
    }
    let q = Quadratic::scalar(0.025 * (i as f64 + 1.0), i as f64)?.with_label(format!("example2[{i}]"));
    Ok(Arc::new(q))
}

/// Samples the Hessian spectrum over a box and returns `(min eigenvalue, max eigenvalue)`.
///
/// `samples` is the total budget; each axis gets `ceil(samples^(1/m))` evenly spaced
/// points including both ends.
pub fn estimate_convexity_constants(
    f: &dyn Objective,
    lower: &[f64],
    upper: &[f64],
    samples: usize,
) -> Result<(f64, f64), ObjectiveError> {
    let m = f.dim();
    if lower.len() != m || upper.len() != m || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
        return Err(ObjectiveError::BadBox);
    }
    let per_axis = ((samples.max(2) as f64).powf(1.0 / m as f64).ceil() as usize).max(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];
    loop {
        for d in 0..m {
            x[d] = lower[d] + (upper[d] - lower[d]) * idx[d] as f64 / (per_axis - 1) as f64;
        }
        let h = f.hessian(&x);
        let eig = if m == 1 { DVector::from_element(1, h[(0, 0)]) } else { SymmetricEigen::new(h).eigenvalues };
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());

        let mut d = 0;
        loop {
            if d == m {
                return Ok((lo, hi));
            }
            idx[d] += 1;
            if idx[d] < per_axis {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
