//! Density fields and history buffers.

use crate::error::{Error, Result};
use crate::grid::{DelayGrid, SizeGrid};
use crate::quad::{interp_linear, trapezoid};
use crate::scalar::Real;

/// Fraction of total mass allowed in the boundary cell of shipped initial data.
pub const INITIAL_TAIL_FRACTION: f64 = 1e-12;

/// Fraction of total mass in the boundary cell that aborts a run.
pub const RUNTIME_TAIL_FRACTION: f64 = 1e-6;

/// One time-slice of the density `n(t, .)` sampled on a [`SizeGrid`].
///
/// Values may be negative: perturbation experiments subtract fields. Model
/// runs with non-negative input are checked for positivity by the
/// diagnostics, not by this type.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<T> {
    grid: SizeGrid<T>,
    values: Vec<T>,
}

impl<T: Real> DensityField<T> {
    pub fn new(grid: SizeGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "field has {} samples but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("density sample at node {i}"),
                step: 0,
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: SizeGrid<T>) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    /// Sample a closure at every grid node.
    pub fn from_fn(grid: SizeGrid<T>, f: impl Fn(T) -> T) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> SizeGrid<T> {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Linear interpolation at an arbitrary size `x`, clamped to the grid.
    #[inline]
    pub fn at(&self, x: T) -> T {
        interp_linear(&self.values, self.grid.dx(), x)
    }

    /// Trapezoid integral of the raw values (signed mass).
    pub fn mass(&self) -> T {
        trapezoid(&self.values, self.grid.dx())
    }

    /// Fraction of total absolute mass sitting in the boundary cell at `x_max`.
    ///
    /// Returns 0 for an identically zero field.
    pub fn boundary_mass_fraction(&self) -> T {
        let dx = self.grid.dx();
        let total: T = trapezoid(&self.abs_values(), dx);
        if total <= T::zero() {
            return T::zero();
        }
        let last = self.values[self.values.len() - 1].abs() * dx;
        last / total
    }

    fn abs_values(&self) -> Vec<T> {
        self.values.iter().map(|v| v.abs()).collect()
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, &b| a.min(b))
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }
}

/// The function segment `n_t(sigma, .) = n(t + sigma, .)` for
/// `sigma in [-tau, 0]`, held as `p + 1` time-ordered slices.
///
/// Slice `j` is the density at time `anchor_time + sigma_j`; the newest slice
/// (`j = p`) is the field at the anchor time itself.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer<T> {
    delay_grid: DelayGrid<T>,
    slices: Vec<DensityField<T>>,
    anchor_time: T,
}

impl<T: Real> HistoryBuffer<T> {
    pub fn new(
        delay_grid: DelayGrid<T>,
        slices: Vec<DensityField<T>>,
        anchor_time: T,
    ) -> Result<Self> {
        if slices.len() != delay_grid.len() {
            return Err(Error::IncompleteHistory {
                expected: delay_grid.len(),
                got: slices.len(),
            });
        }
        let grid = slices[0].grid();
        if slices.iter().any(|s| s.grid() != grid) {
            return Err(Error::Domain(
                "history slices live on different size grids".into(),
            ));
        }
        Ok(Self {
            delay_grid,
            slices,
            anchor_time,
        })
    }

    /// Sample `(sigma, x) -> value` on the delay x size lattice, anchored at time 0.
    pub fn from_fn(
        delay_grid: DelayGrid<T>,
        grid: SizeGrid<T>,
        f: impl Fn(T, T) -> T,
    ) -> Self {
        let slices = delay_grid
            .nodes()
            .map(|sigma| DensityField::from_fn(grid, |x| f(sigma, x)))
            .collect();
        Self {
            delay_grid,
            slices,
            anchor_time: T::zero(),
        }
    }

    pub fn zero(delay_grid: DelayGrid<T>, grid: SizeGrid<T>) -> Self {
        Self::from_fn(delay_grid, grid, |_, _| T::zero())
    }

    #[inline]
    pub fn delay_grid(&self) -> DelayGrid<T> {
        self.delay_grid
    }

    #[inline]
    pub fn anchor_time(&self) -> T {
        self.anchor_time
    }

    #[inline]
    pub fn slices(&self) -> &[DensityField<T>] {
        &self.slices
    }

    /// Slice holding the density at `anchor_time + sigma_j`.
    #[inline]
    pub fn slice(&self, j: usize) -> &DensityField<T> {
        &self.slices[j]
    }

    /// Newest slice: the density at the anchor time.
    #[inline]
    pub fn current(&self) -> &DensityField<T> {
        self.slices.last().expect("p + 1 slices")
    }

    pub fn size_grid(&self) -> SizeGrid<T> {
        self.slices[0].grid()
    }
}
