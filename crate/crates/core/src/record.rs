//! Time-indexed solution storage shared by both solvers.

use crate::error::{Error, Result};
use crate::field::{DensityField, HistoryBuffer, RUNTIME_TAIL_FRACTION};
use crate::grid::{DelayGrid, SizeGrid};
use crate::operators::environment;
use crate::kernels::EnvironmentKernel;
use crate::quad::{central_derivative, interp_linear};
use crate::scalar::Real;

/// Environment profiles as a function of `(t, x)`, linear in both arguments.
///
/// Solvers trace characteristics through this view; tests can substitute a
/// frozen profile.
pub trait EnvTimeline<T: Real> {
    fn value(&self, t: T, x: T) -> T;
    /// Size-derivative of the profile, from central differences of the nodal
    /// values, interpolated like the values themselves.
    fn slope(&self, t: T, x: T) -> T;
}

/// Time-constant environment profile.
pub struct FrozenEnv<T> {
    grid: SizeGrid<T>,
    values: Vec<T>,
    slope: Vec<T>,
}

impl<T: Real> FrozenEnv<T> {
    pub fn new(grid: SizeGrid<T>, values: Vec<T>) -> Self {
        let slope = central_derivative(&values, grid.dx());
        Self { grid, values, slope }
    }

    pub fn from_fn(grid: SizeGrid<T>, f: impl Fn(T) -> T) -> Self {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }
}

impl<T: Real> EnvTimeline<T> for FrozenEnv<T> {
    fn value(&self, _t: T, x: T) -> T {
        interp_linear(&self.values, self.grid.dx(), x)
    }

    fn slope(&self, _t: T, x: T) -> T {
        interp_linear(&self.slope, self.grid.dx(), x)
    }
}

/// The solution of a run on one timeline from `-tau` to the horizon.
///
/// Level `i` holds the density at time `(i - p) * dt`, so levels `0..p`
/// are the initial history, level `p` is `t = 0`, and the last level is the
/// horizon. The level spacing divides the delay exactly: `dt = tau / p`.
/// Each level also stores its environment profile and the central-difference
/// slope of that profile.
#[derive(Debug, Clone)]
pub struct SolutionRecord<T> {
    grid: SizeGrid<T>,
    delay: DelayGrid<T>,
    fields: Vec<DensityField<T>>,
    env: Vec<Vec<T>>,
    env_slope: Vec<Vec<T>>,
}

impl<T: Real> SolutionRecord<T> {
    /// Start a record from the initial history; the rest of the timeline is
    /// appended by the solvers.
    pub fn from_history(initial: &HistoryBuffer<T>, rho: &EnvironmentKernel<T>) -> Self {
        let grid = initial.size_grid();
        let mut record = Self {
            grid,
            delay: initial.delay_grid(),
            fields: Vec::new(),
            env: Vec::new(),
            env_slope: Vec::new(),
        };
        for slice in initial.slices() {
            record.push_level(slice.clone(), rho);
        }
        record
    }

    pub fn push_level(&mut self, field: DensityField<T>, rho: &EnvironmentKernel<T>) {
        let env = environment(&field, rho);
        self.push_level_with_env(field, env);
    }

    pub fn push_level_with_env(&mut self, field: DensityField<T>, env: Vec<T>) {
        let slope = central_derivative(&env, self.grid.dx());
        self.fields.push(field);
        self.env.push(env);
        self.env_slope.push(slope);
    }

    /// Replace the field and environment of one level (fixed-point sweeps).
    pub fn set_level(&mut self, level: usize, field: DensityField<T>, env: Vec<T>) {
        self.env_slope[level] = central_derivative(&env, self.grid.dx());
        self.fields[level] = field;
        self.env[level] = env;
    }

    pub fn truncate_levels(&mut self, len: usize) {
        self.fields.truncate(len);
        self.env.truncate(len);
        self.env_slope.truncate(len);
    }

    #[inline]
    pub fn grid(&self) -> SizeGrid<T> {
        self.grid
    }

    #[inline]
    pub fn delay(&self) -> DelayGrid<T> {
        self.delay
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.delay.dsigma()
    }

    /// Levels before `t = 0`.
    #[inline]
    pub fn pre_levels(&self) -> usize {
        self.delay.subintervals()
    }

    #[inline]
    pub fn num_levels(&self) -> usize {
        self.fields.len()
    }

    /// Time of level `i`; level `pre_levels()` is exactly `t = 0`.
    #[inline]
    pub fn level_time(&self, i: usize) -> T {
        let p = self.pre_levels();
        if i >= p {
            T::of_usize(i - p) * self.dt()
        } else {
            -(T::of_usize(p - i) * self.dt())
        }
    }

    /// Level index of a non-negative solution time, if it lies on the grid.
    pub fn level_of_time(&self, t: T) -> Option<usize> {
        let s = (t / self.dt()).round();
        let i = s.to_isize()? + self.pre_levels() as isize;
        if i < 0 || i as usize >= self.num_levels() {
            return None;
        }
        let i = i as usize;
        if (self.level_time(i) - t).abs() <= self.dt() * T::lit(1e-9) {
            Some(i)
        } else {
            None
        }
    }

    #[inline]
    pub fn field(&self, level: usize) -> &DensityField<T> {
        &self.fields[level]
    }

    #[inline]
    pub fn fields(&self) -> &[DensityField<T>] {
        &self.fields
    }

    #[inline]
    pub fn env_profile(&self, level: usize) -> &[T] {
        &self.env[level]
    }

    /// Initial field at `t = 0`.
    pub fn initial_field(&self) -> &DensityField<T> {
        &self.fields[self.pre_levels()]
    }

    /// The slices of the initial history (`t in [-tau, 0]`).
    pub fn initial_history(&self) -> &[DensityField<T>] {
        &self.fields[0..=self.pre_levels()]
    }

    /// History window anchored at a level: the `p + 1` slices ending there.
    ///
    /// Slice `j` of the window is the stored field at level
    /// `level - p + j`, which is exactly the density at `t + sigma_j`.
    pub fn history_at(&self, level: usize) -> Result<&[DensityField<T>]> {
        let p = self.pre_levels();
        if level < p || level >= self.num_levels() {
            return Err(Error::Domain(format!(
                "no full history window at level {level}"
            )));
        }
        Ok(&self.fields[level - p..=level])
    }

    /// Times of the solution levels (`t >= 0`).
    pub fn solution_times(&self) -> Vec<T> {
        (self.pre_levels()..self.num_levels())
            .map(|i| self.level_time(i))
            .collect()
    }

    /// Indices of the solution levels (`t >= 0`).
    pub fn solution_levels(&self) -> std::ops::Range<usize> {
        self.pre_levels()..self.num_levels()
    }

    /// Abort-worthy truncation failure: boundary-cell mass above the runtime
    /// fraction of the total at some level.
    pub fn check_mass_containment(&self) -> Result<()> {
        for i in self.solution_levels() {
            let fraction = self.fields[i].boundary_mass_fraction();
            if fraction.as_f64() > RUNTIME_TAIL_FRACTION {
                return Err(Error::MassEscape {
                    time: self.level_time(i).as_f64(),
                    fraction: fraction.as_f64(),
                    limit: RUNTIME_TAIL_FRACTION,
                });
            }
        }
        Ok(())
    }

    fn clamp_level_coords(&self, t: T) -> (usize, usize, T) {
        let p = self.pre_levels();
        let dt = self.dt();
        let s = t / dt + T::of_usize(p);
        if s <= T::zero() {
            return (0, 0, T::zero());
        }
        let max_idx = T::of_usize(self.num_levels() - 1);
        if s >= max_idx {
            let last = self.num_levels() - 1;
            return (last, last, T::zero());
        }
        let lo = s.floor().to_usize().unwrap_or(0).min(self.num_levels() - 2);
        (lo, lo + 1, s - T::of_usize(lo))
    }
}

impl<T: Real> EnvTimeline<T> for SolutionRecord<T> {
    fn value(&self, t: T, x: T) -> T {
        let (lo, hi, frac) = self.clamp_level_coords(t);
        let dx = self.grid.dx();
        let a = interp_linear(&self.env[lo], dx, x);
        if lo == hi {
            return a;
        }
        let b = interp_linear(&self.env[hi], dx, x);
        a + (b - a) * frac
    }

    fn slope(&self, t: T, x: T) -> T {
        let (lo, hi, frac) = self.clamp_level_coords(t);
        let dx = self.grid.dx();
        let a = interp_linear(&self.env_slope[lo], dx, x);
        if lo == hi {
            return a;
        }
        let b = interp_linear(&self.env_slope[hi], dx, x);
        a + (b - a) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record() -> SolutionRecord<f64> {
        let grid = SizeGrid::new(10.0, 50).unwrap();
        let delay = DelayGrid::new(1.0, 4).unwrap();
        let initial = HistoryBuffer::from_fn(delay, grid, |s: f64, x: f64| (1.0 + s) * (-x).exp());
        let rho = EnvironmentKernel::Constant { amp: 1.0 };
        let mut rec = SolutionRecord::from_history(&initial, &rho);
        for k in 1..=8 {
            let f = DensityField::from_fn(grid, move |x: f64| (1.0 + 0.25 * k as f64) * (-x).exp());
            rec.push_level(f, &rho);
        }
        rec
    }

    #[test]
    fn level_times_are_aligned() {
        let rec = record();
        assert_eq!(rec.level_time(rec.pre_levels()), 0.0);
        assert_relative_eq!(rec.level_time(0), -1.0);
        assert_relative_eq!(rec.level_time(rec.num_levels() - 1), 2.0);
        assert_eq!(rec.level_of_time(0.5), Some(rec.pre_levels() + 2));
        assert_eq!(rec.level_of_time(0.3), None);
    }

    #[test]
    fn history_window_references_record_levels() {
        let rec = record();
        let level = rec.pre_levels() + 3;
        let window = rec.history_at(level).unwrap();
        assert_eq!(window.len(), rec.delay().len());
        for (j, slice) in window.iter().enumerate() {
            assert!(std::ptr::eq(slice, rec.field(level - rec.pre_levels() + j)));
        }
        assert!(rec.history_at(2).is_err());
    }

    #[test]
    fn env_timeline_interpolates_between_levels() {
        let rec = record();
        // environment of (1 + 0.25 k) e^{-x} under rho = 1 is constant in x
        let at_level = rec.value(0.25, 3.0);
        let mid = rec.value(0.375, 3.0);
        let next = rec.value(0.5, 3.0);
        assert_relative_eq!(mid, 0.5 * (at_level + next), max_relative = 1e-12);
    }

    #[test]
    fn frozen_env_ignores_time() {
        let grid = SizeGrid::new(10.0, 100).unwrap();
        let env = FrozenEnv::from_fn(grid, |x: f64| (-x).exp());
        assert_eq!(env.value(0.0, 1.0), env.value(5.0, 1.0));
        assert!(env.slope(0.0, 1.0) < 0.0);
    }
}
