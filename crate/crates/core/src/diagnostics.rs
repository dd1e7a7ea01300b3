//! Executable forms of the model's structural guarantees, applied to solver
//! output: positivity, the Gronwall growth bounds for the mass, the rolling
//! history, the sup norm and the size gradient, the traveling-wave identity
//! of the history window, and Lipschitz-type continuous dependence.
//!
//! Each bound check produces a [`BoundReport`] with one margin per time
//! level. The sup-norm and gradient bounds transcribe their printed source
//! formulas verbatim (flagged `as_printed`); the gradient and
//! history-derivative bounds additionally depend on a surrogate ingredient
//! with no closed form here, so they report but do not gate.

use serde::Serialize;

use crate::coeffs::ModelCoefficients;
use crate::field::DensityField;
use crate::operators::{
    field_norm, history_l1_norm, history_l1_norm_rows, l1_norm_values, slope_l1_norm_values,
    NormKind,
};
use crate::quad::{central_derivative, cumulative_trapezoid, trapezoid};
use crate::record::SolutionRecord;
use crate::scalar::Real;

/// Relative tolerance on bound margins.
pub const BOUND_MARGIN_TOL: f64 = 1e-9;

/// Nodal positivity tolerance, as a fraction of the run's peak density.
pub const POSITIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct LevelMargin {
    pub time: f64,
    pub observed: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Outcome of one bound check over a full record.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub levels: Vec<LevelMargin>,
    pub pass: bool,
    /// False for informative checks that depend on surrogate ingredients.
    pub gating: bool,
    /// True when the bound formula is transcribed as printed from a source
    /// with known typographical defects.
    pub as_printed: bool,
    /// Named scalars the bound was evaluated with.
    pub params: Vec<(String, f64)>,
}

impl BoundReport {
    fn from_levels(name: &str, levels: Vec<LevelMargin>) -> Self {
        let pass = levels.iter().all(|l| {
            let tol = BOUND_MARGIN_TOL * l.bound.abs().max(l.observed.abs());
            l.margin >= -tol
        });
        Self {
            name: name.into(),
            levels,
            pass,
            gating: true,
            as_printed: false,
            params: Vec::new(),
        }
    }

    fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.push((name.into(), value));
        self
    }

    pub fn worst_margin(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| l.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Norms of the initial data entering every bound formula.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InitialNorms {
    /// Double L1 norm of the initial history.
    pub history_l1: f64,
    /// L1 norm of the initial field.
    pub field_l1: f64,
    pub field_sup: f64,
    pub field_w11: f64,
    /// Double L1 norm of the lag derivative of the initial history.
    pub history_slope_l1: f64,
}

impl InitialNorms {
    pub fn of_record<T: Real>(record: &SolutionRecord<T>) -> Self {
        let delay = record.delay();
        let history = record.initial_history();
        let field = record.initial_field();
        let slope_rows = sigma_derivative_rows(history, delay.dsigma());
        Self {
            history_l1: history_l1_norm(history, delay).as_f64(),
            field_l1: field_norm(field, NormKind::L1).unwrap().as_f64(),
            field_sup: field_norm(field, NormKind::Sup).unwrap().as_f64(),
            field_w11: field_norm(field, NormKind::W11).unwrap().as_f64(),
            history_slope_l1: history_l1_norm_rows(
                &slope_rows,
                delay.dsigma(),
                record.grid().dx(),
            )
            .as_f64(),
        }
    }

    /// Graph norm of the initial pair.
    pub fn graph_norm(&self) -> f64 {
        self.history_l1 + self.history_slope_l1 + self.field_w11
    }
}

fn sigma_derivative_rows<T: Real>(slices: &[DensityField<T>], ds: T) -> Vec<Vec<T>> {
    let rows = slices.len();
    let cols = slices[0].values().len();
    let mut out = vec![vec![T::zero(); cols]; rows];
    for i in 0..cols {
        let column: Vec<T> = (0..rows).map(|j| slices[j].values()[i]).collect();
        let d = central_derivative(&column, ds);
        for (j, v) in d.into_iter().enumerate() {
            out[j][i] = v;
        }
    }
    out
}

/// Minimum nodal value must stay above `-tol * peak` at every level.
pub fn check_positivity<T: Real>(record: &SolutionRecord<T>) -> BoundReport {
    let peak = record
        .solution_levels()
        .map(|l| record.field(l).max_abs().as_f64())
        .fold(0.0, f64::max);
    let allowance = POSITIVITY_TOL * peak;
    let levels = record
        .solution_levels()
        .map(|l| {
            let min = record.field(l).min_value().as_f64();
            LevelMargin {
                time: record.level_time(l).as_f64(),
                observed: -min,
                bound: allowance,
                margin: allowance + min,
            }
        })
        .collect();
    let mut report = BoundReport::from_levels("positivity", levels);
    report.params.push(("peak".into(), peak));
    // positivity margins are absolute; redo the verdict without relative slack
    report.pass = report.levels.iter().all(|l| l.margin >= 0.0);
    report
}

/// Mass growth bound: the L1 norm never exceeds
/// `(Rbar tau |initial history| + |initial field|) e^{Rbar tau t}`.
pub fn check_l1_growth_bound<T: Real>(
    record: &SolutionRecord<T>,
    recruit_bound: f64,
    initial: &InitialNorms,
) -> BoundReport {
    let tau = record.delay().tau().as_f64();
    let rate = recruit_bound * tau;
    let base = rate * initial.history_l1 + initial.field_l1;
    let levels = record
        .solution_levels()
        .map(|l| {
            let t = record.level_time(l).as_f64();
            let observed = field_norm(record.field(l), NormKind::L1).unwrap().as_f64();
            let bound = base * (rate * t).exp();
            LevelMargin {
                time: t,
                observed,
                bound,
                margin: bound - observed,
            }
        })
        .collect();
    BoundReport::from_levels("mass growth bound", levels)
        .with_param("recruit_bound", recruit_bound)
        .with_param("base", base)
}

/// Rolling-history bound: the double L1 norm of the history window never
/// exceeds `|initial history| + (t + tau)(...) e^{Rbar tau t}`.
pub fn check_history_growth_bound<T: Real>(
    record: &SolutionRecord<T>,
    recruit_bound: f64,
    initial: &InitialNorms,
) -> BoundReport {
    let delay = record.delay();
    let tau = delay.tau().as_f64();
    let rate = recruit_bound * tau;
    let base = rate * initial.history_l1 + initial.field_l1;
    let levels = record
        .solution_levels()
        .map(|l| {
            let t = record.level_time(l).as_f64();
            let window = record.history_at(l).expect("solution level has a window");
            let observed = history_l1_norm(window, delay).as_f64();
            let bound = initial.history_l1 + (t + tau) * base * (rate * t).exp();
            LevelMargin {
                time: t,
                observed,
                bound,
                margin: bound - observed,
            }
        })
        .collect();
    BoundReport::from_levels("history growth bound", levels)
        .with_param("recruit_bound", recruit_bound)
}

/// Smallest sampled growth slope over the record, clipped at zero: the decay
/// offset of the sup-norm bound.
pub fn min_growth_slope<T: Real>(
    record: &SolutionRecord<T>,
    coeffs: &ModelCoefficients<T>,
) -> f64 {
    let grid = record.grid();
    let mut min = 0.0_f64;
    for l in record.solution_levels() {
        let env = record.env_profile(l);
        for (i, &n) in env.iter().enumerate() {
            let slope = coeffs.growth_dx(grid.node(i), n).as_f64();
            min = min.min(slope);
        }
    }
    min
}

fn sup_bound_curves(
    min_slope: f64,
    rate: f64,
    history_l1: f64,
    field_sup: f64,
    field_l1: f64,
) -> (impl Fn(f64) -> f64 + Copy, impl Fn(f64) -> f64 + Copy) {
    let along = rate * history_l1 + field_sup;
    let base = rate * history_l1 + field_l1;
    // the shared ratio is read as zero in the degenerate rate = slope = 0 case
    let ratio = if min_slope == 0.0 {
        0.0
    } else {
        min_slope / (rate + min_slope)
    };
    let regular = move |t: f64| {
        along * ((-min_slope * t).exp() + 1.0) + base * (rate * t).exp() * (1.0 - ratio)
    };
    let degenerate = move |t: f64| {
        along * ((-min_slope * t).exp() + 1.0)
            + base * ((rate * t).exp() - min_slope * t * (-min_slope * t).exp())
    };
    (regular, degenerate)
}

/// Sup-norm bound along characteristics, transcribed as printed. The branch
/// is selected by whether the clipped minimum growth slope equals the
/// negative recruitment rate.
pub fn check_sup_bound<T: Real>(
    record: &SolutionRecord<T>,
    coeffs: &ModelCoefficients<T>,
    recruit_bound: f64,
    initial: &InitialNorms,
) -> BoundReport {
    let tau = record.delay().tau().as_f64();
    let rate = recruit_bound * tau;
    let min_slope = min_growth_slope(record, coeffs);
    let degenerate_branch = min_slope < 0.0 && (min_slope + rate).abs() <= 1e-12 * rate.max(1.0);
    let (regular, degenerate) = sup_bound_curves(
        min_slope,
        rate,
        initial.history_l1,
        initial.field_sup,
        initial.field_l1,
    );
    let levels = record
        .solution_levels()
        .map(|l| {
            let t = record.level_time(l).as_f64();
            let observed = field_norm(record.field(l), NormKind::Sup).unwrap().as_f64();
            let bound = if degenerate_branch {
                degenerate(t)
            } else {
                regular(t)
            };
            LevelMargin {
                time: t,
                observed,
                bound,
                margin: bound - observed,
            }
        })
        .collect();
    let mut report = BoundReport::from_levels("sup-norm growth bound", levels)
        .with_param("min_growth_slope", min_slope)
        .with_param("recruit_bound", recruit_bound)
        .with_param("degenerate_branch", if degenerate_branch { 1.0 } else { 0.0 });
    report.as_printed = true;
    if coeffs.has_analytic_growth_derivatives() {
        report
            .params
            .push(("min_growth_slope_source".into(), 1.0));
    }
    report
}

/// Estimated comparison constants between the environment gradient and the
/// density: probes a small deterministic battery of smooth fields plus the
/// record's own initial field and takes the worst observed quotients with a
/// safety factor.
pub fn estimate_env_comparison_constants<T: Real>(
    record: &SolutionRecord<T>,
    rho: &crate::kernels::EnvironmentKernel<T>,
) -> (f64, f64) {
    let grid = record.grid();
    let dx = grid.dx();
    let x_max = grid.x_max().as_f64();
    let mut probes: Vec<DensityField<T>> = vec![record.initial_field().clone()];
    for k in 1..=4 {
        let center = T::lit(x_max * k as f64 / 5.0);
        let width = T::lit(0.4 + 0.2 * k as f64);
        probes.push(DensityField::from_fn(grid, move |x| {
            (-((x - center) / width) * ((x - center) / width) * T::lit(0.5)).exp()
        }));
    }
    let mut c_l1 = 0.0_f64;
    let mut c_w11 = 0.0_f64;
    for probe in &probes {
        let n_l1 = l1_norm_values(probe.values(), dx).as_f64();
        let n_w11 = n_l1 + slope_l1_norm_values(probe.values(), dx).as_f64();
        if n_l1 <= 0.0 {
            continue;
        }
        let env = crate::operators::environment(probe, rho);
        let env_slope = central_derivative(&env, dx);
        let slope_l1 = l1_norm_values(&env_slope, dx).as_f64();
        let slope_w11 = slope_l1 + slope_l1_norm_values(&env_slope, dx).as_f64();
        c_l1 = c_l1.max(slope_l1 / n_l1);
        c_w11 = c_w11.max(slope_w11 / n_w11);
    }
    (1.5 * c_l1, 1.5 * c_w11)
}

/// Conservative default for the surrogate ingredient of the gradient bound:
/// the initial gradient mass plus the recruitment scale, inflated
/// exponentially at the combined rate of recruitment, growth-slope and
/// mortality. Non-decreasing in `t` by construction.
pub fn default_gradient_surrogate(
    initial: &InitialNorms,
    recruit_bound: f64,
    tau: f64,
    growth_d1: f64,
    mortality_max: f64,
) -> impl Fn(f64) -> f64 + Copy {
    let scale = initial.field_w11 + recruit_bound * tau * initial.history_l1 + initial.field_l1;
    let rate = recruit_bound * tau + growth_d1 + mortality_max;
    move |t: f64| scale * (rate * t).exp()
}

struct GradientBoundInputs {
    history_l1: f64,
    field_sup: f64,
    field_l1: f64,
}

/// Right side of the gradient bound at the record's solution times.
fn gradient_bound_curve<T: Real>(
    record: &SolutionRecord<T>,
    coeffs: &ModelCoefficients<T>,
    recruit_bound: f64,
    inputs: &GradientBoundInputs,
    surrogate: &dyn Fn(f64) -> f64,
    env_constants: (f64, f64),
) -> Vec<f64> {
    let tau = record.delay().tau().as_f64();
    let rate = recruit_bound * tau;
    let (c_l1, c_w11) = env_constants;
    let min_slope = min_growth_slope(record, coeffs);
    let (regular, degenerate) = sup_bound_curves(
        min_slope,
        rate,
        inputs.history_l1,
        inputs.field_sup,
        inputs.field_l1,
    );
    let growth_d1 = coeffs.bounds.growth_d1_max.as_f64();
    let growth_d2 = coeffs.bounds.growth_d2_max.as_f64();
    let base = rate * inputs.history_l1 + inputs.field_l1;

    let times: Vec<f64> = record
        .solution_levels()
        .map(|l| record.level_time(l).as_f64())
        .collect();
    let amplify: Vec<f64> = times
        .iter()
        .map(|&t| {
            let g = regular(t) + degenerate(t);
            c_w11
                * (inputs.field_sup * (-min_slope * t).exp() + g)
                * (growth_d2 * c_l1 * base * (rate * t).exp() + growth_d1)
        })
        .collect();
    let forcing: Vec<f64> = times
        .iter()
        .zip(&amplify)
        .map(|(&t, &f2)| surrogate(t) + t * f2 * base * (rate * t).exp())
        .collect();

    // Gronwall closure: f(t) + f2(t) int_0^t f(s) exp(int_s^t f2) ds
    let dt = record.dt().as_f64();
    let cum_amplify = cumulative_trapezoid(&amplify, dt);
    times
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let integrand: Vec<f64> = (0..=k)
                .map(|s| forcing[s] * (cum_amplify[k] - cum_amplify[s]).exp())
                .collect();
            forcing[k] + amplify[k] * trapezoid(&integrand, dt)
        })
        .collect()
}

/// Gradient bound (informative): the L1 norm of the size derivative against
/// the Gronwall-closed curve built from the sup-norm bound, the estimated
/// environment comparison constants and the surrogate forcing term.
pub fn check_gradient_bound<T: Real>(
    record: &SolutionRecord<T>,
    coeffs: &ModelCoefficients<T>,
    rho: &crate::kernels::EnvironmentKernel<T>,
    recruit_bound: f64,
    initial: &InitialNorms,
    surrogate: Option<&dyn Fn(f64) -> f64>,
) -> BoundReport {
    let tau = record.delay().tau().as_f64();
    let env_constants = estimate_env_comparison_constants(record, rho);
    let default = default_gradient_surrogate(
        initial,
        recruit_bound,
        tau,
        coeffs.bounds.growth_d1_max.as_f64(),
        coeffs.bounds.mortality_max.as_f64(),
    );
    let surrogate: &dyn Fn(f64) -> f64 = match surrogate {
        Some(f) => f,
        None => &default,
    };
    let inputs = GradientBoundInputs {
        history_l1: initial.history_l1,
        field_sup: initial.field_sup,
        field_l1: initial.field_l1,
    };
    let curve = gradient_bound_curve(record, coeffs, recruit_bound, &inputs, surrogate, env_constants);
    let dx = record.grid().dx();
    let levels = record
        .solution_levels()
        .zip(curve)
        .map(|(l, bound)| {
            let observed = slope_l1_norm_values(record.field(l).values(), dx).as_f64();
            LevelMargin {
                time: record.level_time(l).as_f64(),
                observed,
                bound,
                margin: bound - observed,
            }
        })
        .collect();
    let mut report = BoundReport::from_levels("gradient growth bound", levels)
        .with_param("env_constant_l1", env_constants.0)
        .with_param("env_constant_w11", env_constants.1);
    report.gating = false;
    report.as_printed = true;
    report
}

/// History lag-derivative bound (informative): the double L1 norm of the
/// lag derivative of the rolling window against the printed right side, with
/// the gradient curve evaluated at the graph norm of the initial pair.
pub fn check_history_derivative_bound<T: Real>(
    record: &SolutionRecord<T>,
    coeffs: &ModelCoefficients<T>,
    rho: &crate::kernels::EnvironmentKernel<T>,
    recruit_bound: f64,
    initial: &InitialNorms,
) -> BoundReport {
    let delay = record.delay();
    let tau = delay.tau().as_f64();
    let rate = recruit_bound * tau;
    let graph = initial.graph_norm();
    let env_constants = estimate_env_comparison_constants(record, rho);
    let default = default_gradient_surrogate(
        initial,
        recruit_bound,
        tau,
        coeffs.bounds.growth_d1_max.as_f64(),
        coeffs.bounds.mortality_max.as_f64(),
    );
    // gradient curve with every initial norm replaced by the graph norm
    let inputs = GradientBoundInputs {
        history_l1: graph,
        field_sup: graph,
        field_l1: graph,
    };
    let gradient_curve =
        gradient_bound_curve(record, coeffs, recruit_bound, &inputs, &default, env_constants);
    let growth_max = coeffs.bounds.growth_max.as_f64();
    let growth_d1 = coeffs.bounds.growth_d1_max.as_f64();
    let mortality_max = coeffs.bounds.mortality_max.as_f64();
    let base = rate * initial.history_l1 + initial.field_l1;
    let ds = delay.dsigma();
    let dx = record.grid().dx();

    let levels = record
        .solution_levels()
        .zip(gradient_curve)
        .map(|(l, h1)| {
            let t = record.level_time(l).as_f64();
            let window = record.history_at(l).expect("window");
            let rows = sigma_derivative_rows(window, ds);
            let observed = history_l1_norm_rows(&rows, ds, dx).as_f64();
            let grown = base * (rate * t).exp();
            let bound = graph
                + growth_max * t * h1
                + (mortality_max + growth_d1) * t * grown
                + recruit_bound * t * (initial.history_l1 + (t + tau) * grown);
            LevelMargin {
                time: t,
                observed,
                bound,
                margin: bound - observed,
            }
        })
        .collect();
    let mut report = BoundReport::from_levels("history lag-derivative bound", levels)
        .with_param("graph_norm", graph);
    report.gating = false;
    report.as_printed = true;
    report
}

/// Traveling-wave identity of the rolling window: slice `j` of the history
/// anchored at level `l` must be the stored field at level `l - p + j`,
/// reference-exact. A failure is an implementation bug, not a model
/// property.
#[derive(Debug, Clone, Serialize)]
pub struct HistoryIdentityReport {
    pub levels_checked: usize,
    pub slices_checked: usize,
    pub pass: bool,
}

pub fn check_history_identity<T: Real>(record: &SolutionRecord<T>) -> HistoryIdentityReport {
    let p = record.pre_levels();
    let mut slices = 0;
    let mut pass = true;
    let mut levels = 0;
    for l in record.solution_levels() {
        levels += 1;
        let window = match record.history_at(l) {
            Ok(w) => w,
            Err(_) => {
                pass = false;
                continue;
            }
        };
        for (j, slice) in window.iter().enumerate() {
            slices += 1;
            let stored = record.field(l - p + j);
            if !std::ptr::eq(slice, stored) || slice.values() != stored.values() {
                pass = false;
            }
        }
    }
    HistoryIdentityReport {
        levels_checked: levels,
        slices_checked: slices,
        pass,
    }
}

/// One perturbed run paired with its perturbation size.
pub struct PerturbedRun<T> {
    pub epsilon: f64,
    pub record: SolutionRecord<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DependenceCurve {
    pub epsilon: f64,
    pub denominator: f64,
    /// `(t, ratio)` of the difference norm to the initial difference norm.
    pub ratios: Vec<(f64, f64)>,
}

/// Continuous-dependence check: difference amplification ratios must agree
/// across perturbation sizes within the spread factor at every level.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuousDependenceReport {
    pub curves: Vec<DependenceCurve>,
    /// Worst over levels of `max_eps ratio / min_eps ratio`.
    pub max_spread: f64,
    pub spread_limit: f64,
    pub pass: bool,
}

pub fn check_continuous_dependence<T: Real>(
    base: &SolutionRecord<T>,
    perturbed: &[PerturbedRun<T>],
) -> ContinuousDependenceReport {
    let spread_limit = 3.0;
    let delay = base.delay();
    let dx = base.grid().dx();
    let mut curves = Vec::new();
    for run in perturbed {
        let rec = &run.record;
        // initial difference norms straight from the stored histories
        let hist_diff: Vec<Vec<T>> = base
            .initial_history()
            .iter()
            .zip(rec.initial_history())
            .map(|(a, b)| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| *x - *y)
                    .collect()
            })
            .collect();
        let field_diff: Vec<T> = base
            .initial_field()
            .values()
            .iter()
            .zip(rec.initial_field().values())
            .map(|(x, y)| *x - *y)
            .collect();
        let denominator = (history_l1_norm_rows(&hist_diff, delay.dsigma(), dx)
            + l1_norm_values(&field_diff, dx))
        .as_f64();
        if denominator <= 0.0 {
            // identical runs carry no information; skipped
            continue;
        }
        let ratios = base
            .solution_levels()
            .map(|l| {
                let diff: Vec<T> = base
                    .field(l)
                    .values()
                    .iter()
                    .zip(rec.field(l).values())
                    .map(|(x, y)| *x - *y)
                    .collect();
                (
                    base.level_time(l).as_f64(),
                    l1_norm_values(&diff, dx).as_f64() / denominator,
                )
            })
            .collect();
        curves.push(DependenceCurve {
            epsilon: run.epsilon,
            denominator,
            ratios,
        });
    }

    let mut max_spread = 1.0_f64;
    if let Some(first) = curves.first() {
        for level in 0..first.ratios.len() {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0_f64;
            for c in &curves {
                let r = c.ratios[level].1;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            if hi > 0.0 {
                // levels where every ratio vanishes carry no spread
                let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                max_spread = max_spread.max(spread);
            }
        }
    }
    ContinuousDependenceReport {
        pass: !curves.is_empty() && max_spread <= spread_limit,
        curves,
        max_spread,
        spread_limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{from_families, GrowthFamily, MortalityFamily};
    use crate::field::HistoryBuffer;
    use crate::grid::{DelayGrid, SizeGrid};
    use crate::kernels::{EnvironmentKernel, RecruitmentKernel};
    use crate::upwind::{bump_profile, solve_upwind};
    use approx::assert_relative_eq;

    fn zero_record() -> SolutionRecord<f64> {
        let grid = SizeGrid::new(8.0, 80).unwrap();
        let delay = DelayGrid::new(0.5, 10).unwrap();
        let initial = HistoryBuffer::zero(delay, grid);
        let coeffs = from_families(
            GrowthFamily::Constant { value: 1.0 },
            MortalityFamily::Constant { value: 0.0 },
            1.0,
        );
        let (rec, _) = solve_upwind(
            &initial,
            &RecruitmentKernel::Zero,
            &EnvironmentKernel::Constant { amp: 0.0 },
            &coeffs,
            1.0,
        )
        .unwrap();
        rec
    }

    fn decay_record() -> (SolutionRecord<f64>, ModelCoefficients<f64>) {
        let grid = SizeGrid::new(8.0, 160).unwrap();
        let delay = DelayGrid::new(0.5, 50).unwrap();
        let bump = bump_profile(1.0, 2.0, 1.0);
        let initial = HistoryBuffer::from_fn(delay, grid, move |_s, x| bump(x));
        let coeffs = from_families(
            GrowthFamily::Constant { value: 1.0 },
            MortalityFamily::Constant { value: 0.5 },
            1.0,
        );
        let (rec, _) = solve_upwind(
            &initial,
            &RecruitmentKernel::Zero,
            &EnvironmentKernel::Constant { amp: 0.0 },
            &coeffs,
            1.0,
        )
        .unwrap();
        (rec, coeffs)
    }

    #[test]
    fn zero_run_passes_every_bound() {
        let rec = zero_record();
        let initial = InitialNorms::of_record(&rec);
        let coeffs = from_families(
            GrowthFamily::Constant { value: 1.0 },
            MortalityFamily::Constant { value: 0.0 },
            1.0,
        );
        let rho = EnvironmentKernel::Constant { amp: 0.0 };
        assert!(check_positivity(&rec).pass);
        assert!(check_l1_growth_bound(&rec, 0.0, &initial).pass);
        assert!(check_history_growth_bound(&rec, 0.0, &initial).pass);
        assert!(check_sup_bound(&rec, &coeffs, 0.0, &initial).pass);
        assert!(check_gradient_bound(&rec, &coeffs, &rho, 0.0, &initial, None).pass);
        assert!(check_history_derivative_bound(&rec, &coeffs, &rho, 0.0, &initial).pass);
        assert!(check_history_identity(&rec).pass);
    }

    #[test]
    fn positivity_flags_an_injected_negative_value() {
        let mut rec = zero_record();
        let grid = rec.grid();
        let level = rec.num_levels() - 2;
        let mut values = vec![0.1; grid.len()];
        values[3] = -0.01;
        rec.set_level(
            level,
            DensityField::new(grid, values).unwrap(),
            vec![0.0; grid.len()],
        );
        let report = check_positivity(&rec);
        assert!(!report.pass);
        let bad = report
            .levels
            .iter()
            .find(|l| (l.time - rec.level_time(level)).abs() < 1e-12)
            .unwrap();
        assert!(bad.margin < 0.0);
    }

    #[test]
    fn decay_case_saturates_the_degenerate_mass_bound() {
        // no recruitment and no mortality: mass constant, bound = initial mass
        let grid = SizeGrid::new(8.0, 160).unwrap();
        let delay = DelayGrid::new(0.5, 50).unwrap();
        let bump = bump_profile(1.0, 2.0, 1.0);
        let initial = HistoryBuffer::from_fn(delay, grid, move |_s, x| bump(x));
        let coeffs = from_families(
            GrowthFamily::Constant { value: 1.0 },
            MortalityFamily::Constant { value: 0.0 },
            1.0,
        );
        let (rec, _) = solve_upwind(
            &initial,
            &RecruitmentKernel::Zero,
            &EnvironmentKernel::Constant { amp: 0.0 },
            &coeffs,
            1.0,
        )
        .unwrap();
        let norms = InitialNorms::of_record(&rec);
        let report = check_l1_growth_bound(&rec, 0.0, &norms);
        assert!(report.pass);
        // with rate zero the bound is exactly the initial mass at every level
        for l in &report.levels {
            assert_relative_eq!(l.bound, norms.field_l1, max_relative = 1e-12);
            assert!(l.observed <= l.bound * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn decay_case_passes_positivity_and_sup_bound() {
        let (rec, coeffs) = decay_record();
        let initial = InitialNorms::of_record(&rec);
        assert!(check_positivity(&rec).pass);
        let sup = check_sup_bound(&rec, &coeffs, 0.0, &initial);
        assert!(sup.pass, "{sup:?}");
        // lambda_0 = 0 and rate = 0 selects the regular branch with the
        // ratio term read as zero: bound = 2 sup + mass at every level
        for l in &sup.levels {
            assert_relative_eq!(
                l.bound,
                2.0 * initial.field_sup + initial.field_l1,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn decay_gradient_is_transported_exactly() {
        let (rec, coeffs) = decay_record();
        let initial = InitialNorms::of_record(&rec);
        let rho = EnvironmentKernel::Constant { amp: 0.0 };
        let report = check_gradient_bound(&rec, &coeffs, &rho, 0.0, &initial, None);
        assert!(report.pass, "worst margin {}", report.worst_margin());
        assert!(!report.gating);
    }

    #[test]
    fn bound_formulas_reduce_to_initial_norms_at_time_zero() {
        let (rec, _) = decay_record();
        let initial = InitialNorms::of_record(&rec);
        let report = check_l1_growth_bound(&rec, 1.35, &initial);
        let tau = rec.delay().tau();
        let expected = 1.35 * tau * initial.history_l1 + initial.field_l1;
        assert_relative_eq!(report.levels[0].bound, expected, max_relative = 1e-12);
        // and the curve is non-decreasing
        for w in report.levels.windows(2) {
            assert!(w[1].bound >= w[0].bound);
        }
        let hist = check_history_growth_bound(&rec, 1.35, &initial);
        for w in hist.levels.windows(2) {
            assert!(w[1].bound >= w[0].bound);
        }
    }

    #[test]
    fn history_identity_is_reference_exact() {
        let (rec, _) = decay_record();
        let report = check_history_identity(&rec);
        assert!(report.pass);
        assert_eq!(report.levels_checked, rec.solution_levels().len());
    }

    #[test]
    fn pure_transport_dependence_ratios_are_epsilon_stable() {
        let grid = SizeGrid::new(8.0, 160).unwrap();
        let delay = DelayGrid::new(0.5, 25).unwrap();
        let bump = bump_profile(1.0, 2.0, 1.0);
        let pert = bump_profile(1.0, 2.5, 0.8);
        let coeffs = from_families(
            GrowthFamily::Constant { value: 1.0 },
            MortalityFamily::Constant { value: 0.0 },
            1.0,
        );
        let rho = EnvironmentKernel::Constant { amp: 0.0 };
        let solve = |eps: f64| {
            let initial =
                HistoryBuffer::from_fn(delay, grid, move |_s, x| bump(x) + eps * pert(x));
            solve_upwind(&initial, &RecruitmentKernel::Zero, &rho, &coeffs, 1.0)
                .unwrap()
                .0
        };
        let base = solve(0.0);
        let runs: Vec<PerturbedRun<f64>> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&epsilon| PerturbedRun {
                epsilon,
                record: solve(epsilon),
            })
            .collect();
        let report = check_continuous_dependence(&base, &runs);
        assert!(report.pass, "spread {}", report.max_spread);
        // pure transport: ratios essentially identical across epsilon
        assert!(report.max_spread < 1.0 + 1e-9);
    }

    #[test]
    fn identical_runs_are_skipped() {
        let base = zero_record();
        let same = PerturbedRun {
            epsilon: 0.1,
            record: zero_record(),
        };
        let report = check_continuous_dependence(&base, &[same]);
        assert!(report.curves.is_empty());
        assert!(!report.pass);
    }
}
