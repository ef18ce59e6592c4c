//! Numerical integration helpers.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::{Error, Result, C64};

/// Adaptive double-exponential quadrature of a real function on `[a, b]`.
/// Subintervals whose error estimate misses their share of `abs_tol` are
/// bisected; fails with the achieved estimate once the depth limit is hit.
pub fn integrate_real(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut err = 0.0;
    adapt(&f, a, b, abs_tol, 0, &mut total, &mut err);
    if !total.is_finite() || err > abs_tol {
        return Err(Error::Quadrature {
            estimate: total,
            error_estimate: err,
        });
    }
    Ok(total)
}

const MAX_DEPTH: u32 = 14;

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32, total: &mut f64, err: &mut f64) {
    let out = quadrature::integrate(f, a, b, tol);
    if out.error_estimate <= tol || depth == MAX_DEPTH {
        *total += out.integral;
        *err += out.error_estimate;
        return;
    }
    let mid = 0.5 * (a + b);
    adapt(f, a, mid, tol / 2.0, depth + 1, total, err);
    adapt(f, mid, b, tol / 2.0, depth + 1, total, err);
}

/// Complex version of [`integrate_real`], integrating real and imaginary
/// parts separately with half the tolerance each.
pub fn integrate_complex(f: impl Fn(f64) -> C64, a: f64, b: f64, abs_tol: f64) -> Result<C64> {
    let re = integrate_real(|t| f(t).re, a, b, abs_tol / 2.0)?;
    let im = integrate_real(|t| f(t).im, a, b, abs_tol / 2.0)?;
    Ok(C64::new(re, im))
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).expect("nonzero"));
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}
