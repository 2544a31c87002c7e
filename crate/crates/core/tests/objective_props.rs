mod common;

use passivity_opt::objective::gradient_vec;
use proptest::prelude::*;

const FD_STEP: f64 = 1e-5;

/// Central difference of `phi` at `x`.
fn central(phi: impl Fn(f64) -> f64, x: f64) -> f64 {
    (phi(x + FD_STEP) - phi(x - FD_STEP)) / (2.0 * FD_STEP)
}

/// Relative error with the scale floored at one, so that points near a stationary
/// point are not judged on round-off.
fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(x in -20.0f64..20.0) {
        for f in common::catalog() {
            let fd = central(|s| f.value(&[s]), x);
            let g = gradient_vec(f.as_ref(), &[x])[0];
            prop_assert!(rel_err(fd, g) <= 1e-5, "{} at {x}: fd {fd} vs {g}", f.name());
        }
    }

    #[test]
    fn hessian_matches_gradient_differences(x in -20.0f64..20.0) {
        for f in common::catalog() {
            let fd = central(|s| gradient_vec(f.as_ref(), &[s])[0], x);
            let h = f.hessian(&[x])[(0, 0)];
            prop_assert!(rel_err(fd, h) <= 1e-4, "{} at {x}: fd {fd} vs {h}", f.name());
        }
    }

    #[test]
    fn hessian_within_declared_constants(x in -50.0f64..50.0) {
        for f in common::catalog() {
            let h = f.hessian(&[x])[(0, 0)];
            prop_assert!(h >= f.mu() - 1e-12 && h <= f.lip() + 1e-12, "{} at {x}: {h}", f.name());
        }
    }

    #[test]
    fn gradient_is_strongly_monotone(x in -20.0f64..20.0, y in -20.0f64..20.0) {
        for f in common::catalog() {
            let lhs = (gradient_vec(f.as_ref(), &[x])[0] - gradient_vec(f.as_ref(), &[y])[0]) * (x - y);
            prop_assert!(lhs >= f.mu() * (x - y).powi(2) - 1e-10, "{}", f.name());
        }
    }
}
