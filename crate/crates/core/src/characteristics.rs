//! Method-of-steps solver on the representation formula along
//! characteristics.
//!
//! Characteristic curves obey `dx/dt = gamma(x, N(t, x))` and are integrated
//! with classical fourth-order Runge-Kutta through the record's environment
//! timeline (linear in `t` between levels, linear in `x` between nodes).
//! Along a curve the density satisfies
//!
//! ```text
//! dn/dt = -(Dgamma + mu) n + aggregated recruitment,
//! ```
//!
//! with `Dgamma` the total size-derivative of the growth speed; the decay
//! factor `exp(-int Dgamma)` is the Jacobian of the characteristic flow, so
//! integrating this ODE backwards to the initial data (or to the boundary
//! entry time when the curve emanates from size zero) reproduces the
//! two-branch representation of the solution.
//!
//! Time is marched in slabs of one delay length: on each slab the
//! representation is iterated to a fixed point, starting from a
//! constant-in-time extrapolation of the slab-start field. Recruitment on
//! the slab reads history that is at least partially converged, which is
//! what makes the iteration contract.

use rayon::prelude::*;

use crate::coeffs::ModelCoefficients;
use crate::error::{Error, Result};
use crate::field::{DensityField, HistoryBuffer};
use crate::kernels::{EnvironmentKernel, RecruitmentKernel};
use crate::operators::{environment, l1_norm_values, recruitment};
use crate::quad::interp_linear;
use crate::record::{EnvTimeline, SolutionRecord};
use crate::scalar::Real;

/// Relative tolerance of the boundary-crossing refinement.
const ENTRY_REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceDirection {
    Forward,
    Backward,
}

/// A characteristic curve sampled at solver time levels.
#[derive(Debug, Clone)]
pub struct CharacteristicPath<T> {
    pub seed_time: T,
    pub seed_position: T,
    /// Times in trace order (descending for backward traces).
    pub times: Vec<T>,
    pub positions: Vec<T>,
    /// Integral of the total growth slope along the path, accumulated with
    /// the same Runge-Kutta stages as the position.
    pub jacobian_log: T,
    /// Backward traces: time at which the curve crossed size zero.
    pub exit_time: Option<T>,
    /// Forward traces: first sampled time beyond the truncation boundary
    /// (mass escaping the computational box).
    pub escape_time: Option<T>,
}

impl<T: Real> CharacteristicPath<T> {
    pub fn end_position(&self) -> T {
        *self.positions.last().expect("path has at least the seed")
    }
}

/// Growth speed and total growth slope at `(t, x)` through an environment
/// timeline; positions are clamped into the box for profile lookups.
fn flow<T: Real>(
    env: &impl EnvTimeline<T>,
    coeffs: &ModelCoefficients<T>,
    t: T,
    x: T,
) -> (T, T) {
    let xe = x.max(T::zero());
    let n = env.value(t, xe);
    let speed = coeffs.growth(xe, n);
    let dgamma = coeffs.growth_dx(xe, n) + coeffs.growth_dn(xe, n) * env.slope(t, xe);
    (speed, dgamma)
}

/// One RK4 step of the pair (position, jacobian log) over `h` (signed).
fn rk4_step<T: Real>(
    env: &impl EnvTimeline<T>,
    coeffs: &ModelCoefficients<T>,
    t: T,
    x: T,
    h: T,
) -> (T, T) {
    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    let (k1, j1) = flow(env, coeffs, t, x);
    let (k2, j2) = flow(env, coeffs, t + h * half, x + h * half * k1);
    let (k3, j3) = flow(env, coeffs, t + h * half, x + h * half * k2);
    let (k4, j4) = flow(env, coeffs, t + h, x + h * k3);
    let dx = h * sixth * (k1 + two * k2 + two * k3 + k4);
    let dj = h * sixth * (j1 + two * j2 + two * j3 + j4);
    (x + dx, dj)
}

/// Trace the characteristic through `seed`, stepping between time levels.
///
/// Backward traces stop with an exit event when the curve crosses size zero;
/// the crossing time is refined by bisection on the final step until
/// `|x| <= 1e-10 * x_max`. Forward traces flag the first time the curve
/// leaves the truncated box and keep integrating.
pub fn trace_characteristic<T: Real>(
    seed: (T, T),
    env: &impl EnvTimeline<T>,
    coeffs: &ModelCoefficients<T>,
    direction: TraceDirection,
    dt: T,
    t_limit: T,
    x_max: T,
) -> CharacteristicPath<T> {
    let (t0, x0) = seed;
    let mut path = CharacteristicPath {
        seed_time: t0,
        seed_position: x0,
        times: vec![t0],
        positions: vec![x0],
        jacobian_log: T::zero(),
        exit_time: None,
        escape_time: None,
    };
    let span = match direction {
        TraceDirection::Forward => t_limit - t0,
        TraceDirection::Backward => t0 - t_limit,
    };
    if span <= T::zero() {
        return path;
    }
    let pos_tol = T::lit(ENTRY_REFINE_TOL) * x_max;
    if direction == TraceDirection::Backward && x0 <= pos_tol {
        path.exit_time = Some(t0);
        return path;
    }

    let steps = (span / dt).round().to_usize().unwrap_or(0);
    // step times: whole levels, with a short final step onto t_limit
    let mut targets: Vec<T> = Vec::with_capacity(steps + 1);
    for k in 1..=steps {
        let t = match direction {
            TraceDirection::Forward => t0 + T::of_usize(k) * dt,
            TraceDirection::Backward => t0 - T::of_usize(k) * dt,
        };
        targets.push(t);
    }
    let aligned = steps > 0
        && (targets[steps - 1] - t_limit).abs() <= dt * T::lit(1e-9);
    if aligned {
        targets[steps - 1] = t_limit;
    } else {
        targets.push(t_limit);
    }

    let mut t = t0;
    let mut x = x0;
    for target in targets {
        let h = target - t;
        if h.abs() <= T::zero() {
            continue;
        }
        let (x_new, dj) = rk4_step(env, coeffs, t, x, h);
        if direction == TraceDirection::Backward && x_new < pos_tol {
            // bisect the step fraction until the crossing is pinned
            let mut lo = T::zero();
            let mut hi = T::one();
            let mut mid = T::one();
            let mut x_mid = x_new;
            let mut dj_mid = dj;
            for _ in 0..200 {
                if x_mid.abs() <= pos_tol {
                    break;
                }
                mid = (lo + hi) * T::lit(0.5);
                let (xm, djm) = rk4_step(env, coeffs, t, x, h * mid);
                x_mid = xm;
                dj_mid = djm;
                if xm > T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= T::lit(1e-15) {
                    break;
                }
            }
            let eta = t + h * mid;
            path.jacobian_log += dj_mid;
            path.times.push(eta);
            path.positions.push(x_mid.max(T::zero()));
            path.exit_time = Some(eta);
            return path;
        }
        path.jacobian_log += dj;
        t = target;
        x = x_new;
        path.times.push(t);
        path.positions.push(x);
        if direction == TraceDirection::Forward && x > x_max && path.escape_time.is_none() {
            path.escape_time = Some(t);
        }
    }
    path
}

/// Boundary entry time for the point `(t, x)`: the time at which the
/// backward characteristic through it crosses size zero, or `None` when the
/// point lies above the origin characteristic and carries initial data.
pub fn entry_time<T: Real>(
    t: T,
    x: T,
    env: &impl EnvTimeline<T>,
    coeffs: &ModelCoefficients<T>,
    dt: T,
    x_max: T,
) -> Option<T> {
    let path = trace_characteristic(
        (t, x),
        env,
        coeffs,
        TraceDirection::Backward,
        dt,
        T::zero(),
        x_max,
    );
    path.exit_time
}

/// Origin characteristic `z`: the forward trace from `(0, 0)`, sampled at
/// every solution level of the record.
pub fn origin_characteristic<T: Real>(
    record: &SolutionRecord<T>,
    coeffs: &ModelCoefficients<T>,
) -> Vec<T> {
    let horizon = record.level_time(record.num_levels() - 1);
    let path = trace_characteristic(
        (T::zero(), T::zero()),
        record,
        coeffs,
        TraceDirection::Forward,
        record.dt(),
        horizon,
        record.grid().x_max(),
    );
    path.positions
}

/// Recruitment profiles per record level, indexed like the record.
struct RecruitmentTable<'a, T> {
    prefix: &'a [Vec<T>],
    slab: &'a [Vec<T>],
    slab_start: usize,
}

impl<T: Real> RecruitmentTable<'_, T> {
    fn profile(&self, level: usize) -> &[T] {
        if level < self.slab_start {
            &self.prefix[level]
        } else {
            &self.slab[level - self.slab_start]
        }
    }
}

/// Evaluate the representation formula at one node of one level.
fn evaluate_node<T: Real>(
    record: &SolutionRecord<T>,
    recr: &RecruitmentTable<'_, T>,
    coeffs: &ModelCoefficients<T>,
    level: usize,
    node: usize,
) -> T {
    let grid = record.grid();
    let x = grid.node(node);
    if node == 0 {
        // zero-flux boundary with strictly positive growth speed
        return T::zero();
    }
    let t = record.level_time(level);
    let dt = record.dt();
    let dx = grid.dx();
    let path = trace_characteristic(
        (t, x),
        record,
        coeffs,
        TraceDirection::Backward,
        dt,
        T::zero(),
        grid.x_max(),
    );
    let pts = path.times.len();

    // decay exponent lambda = Dgamma + mu along the path, cumulated from the
    // seed by trapezoid between sampled points
    let mut lambdas = Vec::with_capacity(pts);
    for (tau, pos) in path.times.iter().zip(&path.positions) {
        let xe = pos.max(T::zero());
        let n_env = record.value(*tau, xe);
        let (_, dgamma) = flow(record, coeffs, *tau, xe);
        lambdas.push(dgamma + coeffs.mortality(xe, n_env));
    }
    let mut cumulative = Vec::with_capacity(pts);
    let mut acc = T::zero();
    cumulative.push(acc);
    for k in 1..pts {
        let span = path.times[k - 1] - path.times[k];
        acc += span * T::lit(0.5) * (lambdas[k - 1] + lambdas[k]);
        cumulative.push(acc);
    }

    // recruitment along the path; level times index the table directly, the
    // refined exit point interpolates between the bracketing levels
    let pre = record.pre_levels();
    let recr_at = |k: usize| -> T {
        let tau = path.times[k];
        let pos = path.positions[k].max(T::zero());
        let s = tau / dt;
        let idx = s.round();
        if (s - idx).abs() <= T::lit(1e-9) {
            let lvl = idx.to_usize().unwrap_or(0) + pre;
            interp_linear(recr.profile(lvl), dx, pos)
        } else {
            let lo = s.floor().to_usize().unwrap_or(0);
            let frac = s - T::of_usize(lo);
            let a = interp_linear(recr.profile(lo + pre), dx, pos);
            let b = interp_linear(recr.profile(lo + pre + 1), dx, pos);
            a + (b - a) * frac
        }
    };

    // integral term: trapezoid in the trace parameter of
    // exp(-int lambda) * recruitment
    let mut integral = T::zero();
    for k in 1..pts {
        let span = path.times[k - 1] - path.times[k];
        let f_prev = (-cumulative[k - 1]).exp() * recr_at(k - 1);
        let f_here = (-cumulative[k]).exp() * recr_at(k);
        integral += span * T::lit(0.5) * (f_prev + f_here);
    }

    let mut value = integral;
    if path.exit_time.is_none() {
        // initial-data branch: the curve reached t = 0 inside the domain
        let origin = path.end_position().max(T::zero());
        let initial = record.initial_field().at(origin);
        value += initial * (-cumulative[pts - 1]).exp();
    }
    value
}

/// One fixed-point sweep over the slab `levels`: re-evaluate the
/// representation at every level and node, reading the record as the guess.
///
/// Levels below the slab must be converged; the sweep reads their recruitment
/// as fixed and the slab's recruitment from the guess. Returns the updated
/// fields in level order.
pub fn picard_step<T: Real>(
    record: &SolutionRecord<T>,
    levels: std::ops::Range<usize>,
    kernel: &RecruitmentKernel<T>,
    rho: &EnvironmentKernel<T>,
    coeffs: &ModelCoefficients<T>,
) -> Result<Vec<DensityField<T>>> {
    let prefix = recruitment_prefix(record, kernel, rho, record.pre_levels()..levels.start)?;
    let slab = recruitment_prefix(record, kernel, rho, levels.clone())?;
    let table = RecruitmentTable {
        prefix: &prefix,
        slab: &slab[levels.start..],
        slab_start: levels.start,
    };
    sweep(record, &table, coeffs, levels)
}

/// Recruitment profiles for the given record levels, padded below `t = 0`
/// so the result can be indexed by level.
fn recruitment_prefix<T: Real>(
    record: &SolutionRecord<T>,
    kernel: &RecruitmentKernel<T>,
    rho: &EnvironmentKernel<T>,
    levels: std::ops::Range<usize>,
) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::new();
    if levels.start > 0 {
        out = vec![Vec::new(); levels.start];
    }
    for level in levels {
        let window = record.history_at(level)?;
        out.push(recruitment(window, record.delay(), kernel, rho)?);
    }
    Ok(out)
}

fn sweep<T: Real>(
    record: &SolutionRecord<T>,
    table: &RecruitmentTable<'_, T>,
    coeffs: &ModelCoefficients<T>,
    levels: std::ops::Range<usize>,
) -> Result<Vec<DensityField<T>>> {
    let grid = record.grid();
    levels
        .map(|level| {
            let values: Vec<T> = (0..grid.len())
                .into_par_iter()
                .map(|i| evaluate_node(record, table, coeffs, level, i))
                .collect();
            DensityField::new(grid, values)
        })
        .collect()
}

/// Options of the fixed-point driver.
#[derive(Debug, Clone, Copy)]
pub struct PicardOptions<T> {
    /// Absolute tolerance on the per-slab residual (max over levels of the
    /// L1 norm of the change).
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for PicardOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 50,
        }
    }
}

/// Convergence data of one slab.
#[derive(Debug, Clone)]
pub struct SlabStats {
    pub iterations: usize,
    /// Residual after each sweep.
    pub residuals: Vec<f64>,
}

/// Per-run statistics of the characteristics driver.
#[derive(Debug, Clone)]
pub struct PicardReport {
    pub slabs: Vec<SlabStats>,
    pub env_peak: f64,
    pub env_cap_exceeded: bool,
}

impl PicardReport {
    pub fn total_iterations(&self) -> usize {
        self.slabs.iter().map(|s| s.iterations).sum()
    }
}

/// March the representation formula slab by slab to the horizon.
///
/// The slab width is one delay length (pure method of steps), so the horizon
/// must be a positive integer multiple of the delay. Each slab starts from a
/// constant-in-time extrapolation of the slab-start field and iterates
/// [`picard_step`] until the residual drops below `opts.tol`.
pub fn solve_characteristics<T: Real>(
    initial: &HistoryBuffer<T>,
    kernel: &RecruitmentKernel<T>,
    rho: &EnvironmentKernel<T>,
    coeffs: &ModelCoefficients<T>,
    horizon: T,
    opts: PicardOptions<T>,
) -> Result<(SolutionRecord<T>, PicardReport)> {
    let delay = initial.delay_grid();
    let tau = delay.tau();
    let slabs_f = horizon / tau;
    let slabs = slabs_f.round().to_usize().unwrap_or(0);
    if slabs == 0 || (slabs_f - T::of_usize(slabs)).abs() > T::lit(1e-9) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not a positive multiple of the delay {tau}"
        )));
    }
    let p = delay.subintervals();

    let mut record = SolutionRecord::from_history(initial, rho);
    let mut report = PicardReport {
        slabs: Vec::with_capacity(slabs),
        env_peak: 0.0,
        env_cap_exceeded: false,
    };
    // recruitment of converged levels, extended after each slab
    let mut converged_recr: Vec<Vec<T>> = vec![Vec::new(); record.pre_levels()];
    let first_solution_level = record.pre_levels();
    converged_recr.push(recruitment(
        record.history_at(first_solution_level)?,
        delay,
        kernel,
        rho,
    )?);

    for slab in 0..slabs {
        let slab_start = record.num_levels();
        let seed = record.field(slab_start - 1).clone();
        for _ in 0..p {
            record.push_level(seed.clone(), rho);
        }
        let slab_levels = slab_start..record.num_levels();

        let mut stats = SlabStats {
            iterations: 0,
            residuals: Vec::new(),
        };
        let mut converged = false;
        for _iter in 0..opts.max_iter {
            let slab_recr = recruitment_prefix(&record, kernel, rho, slab_levels.clone())?;
            let table = RecruitmentTable {
                prefix: &converged_recr,
                slab: &slab_recr[slab_levels.start..],
                slab_start: slab_levels.start,
            };
            let updated = sweep(&record, &table, coeffs, slab_levels.clone())?;

            let mut residual = T::zero();
            for (field, level) in updated.iter().zip(slab_levels.clone()) {
                let old = record.field(level);
                let diff: Vec<T> = field
                    .values()
                    .iter()
                    .zip(old.values())
                    .map(|(a, b)| *a - *b)
                    .collect();
                residual = residual.max(l1_norm_values(&diff, record.grid().dx()));
            }
            for (field, level) in updated.into_iter().zip(slab_levels.clone()) {
                if field.values().iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: format!("representation sweep on slab {slab}"),
                        step: level,
                    });
                }
                let env = environment(&field, rho);
                record.set_level(level, field, env);
            }
            stats.iterations += 1;
            stats.residuals.push(residual.as_f64());
            if residual <= opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::ConvergenceFailure {
                slab,
                iterations: stats.iterations,
                residual: *stats.residuals.last().unwrap_or(&f64::NAN),
                tol: opts.tol.as_f64(),
            });
        }
        report.slabs.push(stats);
        for level in slab_levels {
            converged_recr.push(recruitment(
                record.history_at(level)?,
                delay,
                kernel,
                rho,
            )?);
            let env_max = record
                .env_profile(level)
                .iter()
                .fold(T::zero(), |a, &b| a.max(b));
            report.env_peak = report.env_peak.max(env_max.as_f64());
        }
    }
    report.env_cap_exceeded = report.env_peak > coeffs.bounds.env_cap.as_f64();
    record.check_mass_containment()?;
    Ok((record, report))
}
