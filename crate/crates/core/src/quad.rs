//! Quadrature and finite-difference primitives used everywhere in the engine.
//!
//! All integrals are composite trapezoid sums on uniform grids; derivatives
//! are central differences with one-sided stencils at the endpoints. Solvers
//! and diagnostics share these exact rules so that cross-checks compare like
//! with like.

use crate::scalar::Real;

/// Composite trapezoid rule for samples on a uniform grid with spacing `h`.
pub fn trapezoid<T: Real>(values: &[T], h: T) -> T {
    match values.len() {
        0 => T::zero(),
        1 => T::zero(),
        _ => {
            let half = T::lit(0.5);
            let mut acc = half * (values[0] + values[values.len() - 1]);
            for v in &values[1..values.len() - 1] {
                acc += *v;
            }
            acc * h
        }
    }
}

/// Trapezoid weight of node `i` on a grid of `len` nodes with spacing `h`.
#[inline]
pub fn trapezoid_weight<T: Real>(i: usize, len: usize, h: T) -> T {
    debug_assert!(len >= 2 && i < len);
    if i == 0 || i == len - 1 {
        h * T::lit(0.5)
    } else {
        h
    }
}

/// Cumulative trapezoid: `out[i] = integral of values over [x_0, x_i]`.
pub fn cumulative_trapezoid<T: Real>(values: &[T], h: T) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    let half_h = h * T::lit(0.5);
    let mut acc = T::zero();
    out.push(acc);
    for w in values.windows(2) {
        acc += half_h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Central-difference first derivative, one-sided at both endpoints.
pub fn central_derivative<T: Real>(values: &[T], h: T) -> Vec<T> {
    let n = values.len();
    let mut out = vec![T::zero(); n];
    if n < 2 {
        return out;
    }
    out[0] = (values[1] - values[0]) / h;
    out[n - 1] = (values[n - 1] - values[n - 2]) / h;
    let two_h = h + h;
    for i in 1..n - 1 {
        out[i] = (values[i + 1] - values[i - 1]) / two_h;
    }
    out
}

/// Linear interpolation of nodal samples at `x in [0, h*(len-1)]`.
///
/// Arguments are the samples, the spacing and the query point measured from
/// the first node. Queries outside the range clamp to the end values.
pub fn interp_linear<T: Real>(values: &[T], h: T, x: T) -> T {
    let n = values.len();
    debug_assert!(n >= 1);
    if n == 1 || x <= T::zero() {
        return values[0];
    }
    let s = x / h;
    let max_idx = T::of_usize(n - 1);
    if s >= max_idx {
        return values[n - 1];
    }
    let i = s.floor();
    let idx = i.to_usize().unwrap_or(0).min(n - 2);
    let frac = s - T::of_usize(idx);
    values[idx] + (values[idx + 1] - values[idx]) * frac
}
