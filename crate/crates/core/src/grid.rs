//! Uniform grids for the size axis `[0, x_max]` and the delay axis `[-tau, 0]`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform discretization of the truncated size axis `[0, x_max]` into `m` cells.
///
/// Nodes are `x_i = x_max * i / m` for `i = 0..=m`, so `x_0 = 0` and
/// `x_m = x_max` hold exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeGrid<T> {
    x_max: T,
    m: usize,
}

impl<T: Real> SizeGrid<T> {
    pub fn new(x_max: T, m: usize) -> Result<Self> {
        if !(x_max > T::zero()) || !x_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "size grid needs x_max > 0, got {x_max}"
            )));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("size grid needs m >= 1".into()));
        }
        Ok(Self { x_max, m })
    }

    #[inline]
    pub fn x_max(&self) -> T {
        self.x_max
    }

    /// Number of cells; the grid has `m + 1` nodes.
    #[inline]
    pub fn cells(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dx(&self) -> T {
        self.x_max / T::of_usize(self.m)
    }

    #[inline]
    pub fn node(&self, i: usize) -> T {
        debug_assert!(i <= self.m);
        self.x_max * T::of_usize(i) / T::of_usize(self.m)
    }

    /// Midpoint of cell `i`, between nodes `i` and `i + 1`.
    #[inline]
    pub fn midpoint(&self, i: usize) -> T {
        debug_assert!(i < self.m);
        (self.node(i) + self.node(i + 1)) * T::lit(0.5)
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..=self.m).map(move |i| self.node(i))
    }

    /// Grid with cells halved `k` times (same `x_max`).
    pub fn refined(&self, k: u32) -> Self {
        Self {
            x_max: self.x_max,
            m: self.m << k,
        }
    }
}

/// Uniform discretization of the delay axis `[-tau, 0]` into `p` subintervals.
///
/// Nodes are `sigma_j = tau * (j / p - 1)`, so `sigma_0 = -tau` and
/// `sigma_p = 0` hold exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayGrid<T> {
    tau: T,
    p: usize,
}

impl<T: Real> DelayGrid<T> {
    pub fn new(tau: T, p: usize) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delay grid needs tau > 0, got {tau}"
            )));
        }
        if p == 0 {
            return Err(Error::InvalidParameter("delay grid needs p >= 1".into()));
        }
        Ok(Self { tau, p })
    }

    #[inline]
    pub fn tau(&self) -> T {
        self.tau
    }

    /// Number of subintervals; the grid has `p + 1` nodes.
    #[inline]
    pub fn subintervals(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.p + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dsigma(&self) -> T {
        self.tau / T::of_usize(self.p)
    }

    #[inline]
    pub fn node(&self, j: usize) -> T {
        debug_assert!(j <= self.p);
        self.tau * (T::of_usize(j) / T::of_usize(self.p) - T::one())
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..=self.p).map(move |j| self.node(j))
    }

    pub fn refined(&self, k: u32) -> Self {
        Self {
            tau: self.tau,
            p: self.p << k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_grid_nodes_are_exact_at_ends() {
        let g = SizeGrid::<f64>::new(40.0, 7).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(7), 40.0);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn delay_grid_nodes_are_exact_at_ends() {
        let g = DelayGrid::<f64>::new(1.0, 3).unwrap();
        assert_eq!(g.node(0), -1.0);
        assert_eq!(g.node(3), 0.0);
    }

    #[test]
    fn constructors_reject_degenerate_parameters() {
        assert!(SizeGrid::<f64>::new(10.0, 0).is_err());
        assert!(SizeGrid::<f64>::new(0.0, 4).is_err());
        assert!(SizeGrid::<f64>::new(-1.0, 4).is_err());
        assert!(DelayGrid::<f64>::new(1.0, 0).is_err());
        assert!(DelayGrid::<f64>::new(0.0, 4).is_err());
        assert!(DelayGrid::<f64>::new(-2.0, 4).is_err());
    }

    #[test]
    fn refinement_preserves_extent() {
        let g = SizeGrid::<f64>::new(10.0, 5).unwrap().refined(2);
        assert_eq!(g.cells(), 20);
        assert_eq!(g.x_max(), 10.0);
    }
}
