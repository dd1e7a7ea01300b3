//! Explicit conservative upwind finite-volume scheme with a delay ring.
//!
//! The conservation form is discretized with left-biased fluxes (the growth
//! speed is positive), explicit Euler in time, zero inflow at the left
//! boundary and free streaming at the truncation boundary. The environment
//! is frozen once per step from the current field. Under the CFL condition
//! every update coefficient is non-negative, which makes discrete positivity
//! and the discrete mass balance provable for the scheme; the mass-balance
//! residual is recorded every step with the scheme's own uniform-weight
//! functionals, for which the identity is exact up to rounding.

use crate::coeffs::ModelCoefficients;
use crate::error::{Error, Result};
use crate::field::{DensityField, HistoryBuffer};
use crate::kernels::{EnvironmentKernel, RecruitmentKernel};
use crate::operators::{environment, recruitment};
use crate::quad::interp_linear;
use crate::record::SolutionRecord;
use crate::scalar::Real;

/// Per-run statistics of the upwind driver.
#[derive(Debug, Clone)]
pub struct UpwindReport {
    pub steps: usize,
    /// Relative residual of the discrete mass balance, one entry per step.
    pub mass_residuals: Vec<f64>,
    /// Largest environment value seen, against the declared cap.
    pub env_peak: f64,
    pub env_cap_exceeded: bool,
}

impl UpwindReport {
    pub fn max_mass_residual(&self) -> f64 {
        self.mass_residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// One explicit step `t -> t + dt`.
///
/// `history` must be anchored at the current time (newest slice = `current`).
/// Returns the new field plus the relative mass-balance residual of the step.
pub fn upwind_step<T: Real>(
    current: &DensityField<T>,
    history: &HistoryBuffer<T>,
    kernel: &RecruitmentKernel<T>,
    rho: &EnvironmentKernel<T>,
    coeffs: &ModelCoefficients<T>,
    dt: T,
) -> Result<(DensityField<T>, f64)> {
    if !std::ptr::eq(history.current(), current) && history.current() != current {
        return Err(Error::Domain(
            "history ring is not anchored at the current field".into(),
        ));
    }
    step_on_window(
        current,
        history.slices(),
        history.delay_grid(),
        kernel,
        rho,
        coeffs,
        dt,
    )
}

fn step_on_window<T: Real>(
    current: &DensityField<T>,
    window: &[DensityField<T>],
    delay: crate::grid::DelayGrid<T>,
    kernel: &RecruitmentKernel<T>,
    rho: &EnvironmentKernel<T>,
    coeffs: &ModelCoefficients<T>,
    dt: T,
) -> Result<(DensityField<T>, f64)> {
    let grid = current.grid();
    let dx = grid.dx();
    if dt * coeffs.bounds.growth_max > dx {
        return Err(Error::CflViolation {
            flux_step: (dt * coeffs.bounds.growth_max).as_f64(),
            dx: dx.as_f64(),
        });
    }

    let n = current.values();
    let len = grid.len();
    let env = environment(current, rho);
    let recr = recruitment(window, delay, kernel, rho)?;

    // interface fluxes: F_{i+1/2} = gamma(x_{i+1/2}) * n_i, inflow flux zero,
    // outflow evaluated at the last node (free streaming)
    let mut flux = vec![T::zero(); len + 1];
    for i in 0..len {
        let (x_half, env_half) = if i + 1 < len {
            (
                grid.midpoint(i),
                (env[i] + env[i + 1]) * T::lit(0.5),
            )
        } else {
            (grid.node(i), env[i])
        };
        flux[i + 1] = coeffs.growth(x_half, env_half) * n[i];
    }

    let lam = dt / dx;
    let mut out = vec![T::zero(); len];
    let mut mort_sum = T::zero();
    let mut recr_sum = T::zero();
    debug_assert!(
        (dt * (coeffs.bounds.growth_max / dx + coeffs.bounds.mortality_max)).as_f64() <= 1.0 + 1e-12,
        "positivity condition dt*(gamma_max/dx + mu_max) <= 1 violated"
    );
    for i in 0..len {
        let x = grid.node(i);
        let mortality = coeffs.mortality(x, env[i]);
        out[i] = n[i] - lam * (flux[i + 1] - flux[i]) - dt * mortality * n[i] + dt * recr[i];
        mort_sum += mortality * n[i];
        recr_sum += recr[i];
    }

    // discrete mass balance with the scheme's own uniform weights:
    // dx * sum(out - n) = -dt * outflow - dt * dx * sum(mu n) + dt * dx * sum(recr)
    let mut lhs = T::zero();
    for i in 0..len {
        lhs += out[i] - n[i];
    }
    let lhs = lhs * dx;
    let rhs = dt * (dx * (recr_sum - mort_sum) - flux[len]);
    let scale = {
        let mut mass = T::zero();
        for v in n {
            mass += v.abs();
        }
        (mass * dx).max(rhs.abs()).max(T::lit(1e-300))
    };
    let residual = ((lhs - rhs).abs() / scale).as_f64();

    let field = DensityField::new(grid, out)?;
    Ok((field, residual))
}

/// March the scheme to the horizon, rotating the history ring.
///
/// The step is the delay grid spacing (`dt = tau / p`), which keeps the ring
/// aligned with the time levels; the horizon must be a multiple of it.
pub fn solve_upwind<T: Real>(
    initial: &HistoryBuffer<T>,
    kernel: &RecruitmentKernel<T>,
    rho: &EnvironmentKernel<T>,
    coeffs: &ModelCoefficients<T>,
    horizon: T,
) -> Result<(SolutionRecord<T>, UpwindReport)> {
    let delay = initial.delay_grid();
    let dt = delay.dsigma();
    let steps_f = horizon / dt;
    let steps = steps_f.round().to_usize().ok_or_else(|| {
        Error::InvalidParameter(format!("horizon {horizon} not expressible in steps"))
    })?;
    if steps == 0 || (steps_f - T::of_usize(steps)).abs() > T::lit(1e-9) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not a positive multiple of dt = {dt}"
        )));
    }

    let mut record = SolutionRecord::from_history(initial, rho);
    let mut report = UpwindReport {
        steps,
        mass_residuals: Vec::with_capacity(steps),
        env_peak: 0.0,
        env_cap_exceeded: false,
    };

    for step in 0..steps {
        let level = record.num_levels() - 1;
        let (next, residual) = {
            let window = record.history_at(level)?;
            let current = &window[window.len() - 1];
            step_on_window(current, window, delay, kernel, rho, coeffs, dt)?
        };
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "upwind update".into(),
                step,
            });
        }
        report.mass_residuals.push(residual);
        record.push_level(next, rho);

        let env_max = record
            .env_profile(record.num_levels() - 1)
            .iter()
            .fold(T::zero(), |a, &b| a.max(b));
        report.env_peak = report.env_peak.max(env_max.as_f64());
    }
    report.env_cap_exceeded = report.env_peak > coeffs.bounds.env_cap.as_f64();
    record.check_mass_containment()?;
    Ok((record, report))
}

/// Smooth compactly supported bump `amp * exp(1 - 1/(1 - s^2))` with
/// `s = (x - center) / width`, zero outside `|s| < 1`.
pub fn bump_profile<T: Real>(amp: T, center: T, width: T) -> impl Fn(T) -> T + Send + Sync + Copy {
    move |x: T| {
        let s = (x - center) / width;
        let s2 = s * s;
        if s2 >= T::one() {
            T::zero()
        } else {
            amp * (T::one() - T::one() / (T::one() - s2)).exp()
        }
    }
}

/// Transport-decay oracle for constant speed and mortality and no
/// recruitment: the initial profile shifted by `t`, scaled by `e^{-mu t}`.
pub fn transport_decay_solution<T: Real>(
    initial: impl Fn(T) -> T,
    speed: T,
    mortality: T,
    t: T,
) -> impl Fn(T) -> T {
    move |x: T| {
        let origin = x - speed * t;
        if origin < T::zero() {
            T::zero()
        } else {
            initial(origin) * (-mortality * t).exp()
        }
    }
}

/// Relative L1 distance between a field and a reference function sampled on
/// the field's grid.
pub fn relative_l1_error<T: Real>(field: &DensityField<T>, reference: impl Fn(T) -> T) -> T {
    let grid = field.grid();
    let reference_field = DensityField::from_fn(grid, reference);
    let diff: Vec<T> = field
        .values()
        .iter()
        .zip(reference_field.values())
        .map(|(a, b)| (*a - *b).abs())
        .collect();
    let num = crate::quad::trapezoid(&diff, grid.dx());
    let den = crate::operators::l1_norm_values(reference_field.values(), grid.dx());
    num / den.max(T::lit(1e-300))
}

/// Interpolating view of a field used by oracles.
pub fn field_interpolant<T: Real>(field: &DensityField<T>) -> impl Fn(T) -> T + '_ {
    let dx = field.grid().dx();
    move |x: T| interp_linear(field.values(), dx, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{from_families, GrowthFamily, MortalityFamily};
    use crate::grid::{DelayGrid, SizeGrid};
    use approx::assert_relative_eq;

    fn plain_coeffs(mu: f64) -> ModelCoefficients<f64> {
        from_families(
            GrowthFamily::Constant { value: 1.0 },
            MortalityFamily::Constant { value: mu },
            1.0,
        )
    }

    #[test]
    fn zero_state_stays_zero() {
        let grid = SizeGrid::new(8.0, 160).unwrap();
        let delay = DelayGrid::new(0.05, 5).unwrap();
        let initial = HistoryBuffer::zero(delay, grid);
        let (record, report) = solve_upwind(
            &initial,
            &RecruitmentKernel::Zero,
            &EnvironmentKernel::Constant { amp: 0.0 },
            &plain_coeffs(0.0),
            0.2,
        )
        .unwrap();
        for level in record.solution_levels() {
            assert!(record.field(level).values().iter().all(|&v| v == 0.0));
        }
        assert_eq!(report.max_mass_residual(), 0.0);
    }

    #[test]
    fn cfl_violation_is_a_hard_error() {
        let grid = SizeGrid::new(8.0, 160).unwrap(); // dx = 0.05
        let delay = DelayGrid::new(0.6, 5).unwrap(); // dt = 0.12 > dx
        let initial = HistoryBuffer::zero(delay, grid);
        let err = solve_upwind(
            &initial,
            &RecruitmentKernel::Zero,
            &EnvironmentKernel::Constant { amp: 0.0 },
            &plain_coeffs(0.0),
            0.6,
        )
        .unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn mass_decays_geometrically_with_constant_mortality() {
        // gamma = 1, mu = 0.5, beta = 0: the scheme's uniform-weight mass
        // satisfies M_k = M_0 (1 - mu dt)^k exactly while nothing flows out
        let grid = SizeGrid::new(8.0, 160).unwrap();
        let mu = 0.5;
        let dt = 1e-3;
        let delay = DelayGrid::new(0.05, 50).unwrap();
        let bump = bump_profile(1.0, 2.0, 1.0);
        let initial = HistoryBuffer::from_fn(delay, grid, |_s, x| bump(x));
        let (record, report) = solve_upwind(
            &initial,
            &RecruitmentKernel::Zero,
            &EnvironmentKernel::Constant { amp: 0.0 },
            &plain_coeffs(mu),
            1.0,
        )
        .unwrap();

        let uniform_mass = |f: &DensityField<f64>| -> f64 {
            f.values().iter().sum::<f64>() * f.grid().dx()
        };
        let m0 = uniform_mass(record.initial_field());
        let steps = 1000;
        let expected = m0 * (1.0 - mu * dt).powi(steps);
        let final_mass = uniform_mass(record.field(record.num_levels() - 1));
        assert_relative_eq!(final_mass, expected, max_relative = 1e-12);
        // and the geometric decay tracks e^{-mu t} at this step size
        assert_relative_eq!(final_mass, m0 * (-mu).exp(), max_relative = 1e-3);
        assert!(report.max_mass_residual() <= 1e-12);
    }

    #[test]
    fn mass_without_sinks_only_leaves_through_outflow() {
        let grid = SizeGrid::new(4.0, 80).unwrap();
        let delay = DelayGrid::new(0.1, 4).unwrap();
        let bump = bump_profile(1.0, 2.8, 1.0);
        let initial = HistoryBuffer::from_fn(delay, grid, |_s, x| bump(x));
        // run long enough for the bump to reach the boundary
        let result = solve_upwind(
            &initial,
            &RecruitmentKernel::Zero,
            &EnvironmentKernel::Constant { amp: 0.0 },
            &plain_coeffs(0.0),
            2.0,
        );
        // the bump escapes the box: the containment guard must trip
        assert!(matches!(result, Err(Error::MassEscape { .. })));
    }

    #[test]
    fn positivity_holds_under_cfl() {
        let grid = SizeGrid::new(8.0, 160).unwrap();
        let delay = DelayGrid::new(1.0, 25).unwrap();
        let bump = bump_profile(1.0, 2.0, 1.0);
        let initial = HistoryBuffer::from_fn(delay, grid, |s: f64, x: f64| (0.25 * s).exp() * bump(x));
        let (parts, constants) = crate::kernels::stock_separable(0.5, 0.6, 2.0, 0.25);
        let kernel = RecruitmentKernel::Separable { parts, constants };
        let coeffs = from_families(
            GrowthFamily::EnvFalling {
                base: 1.0,
                amp: 0.8,
            },
            MortalityFamily::EnvSaturating {
                base: 0.05,
                amp: 0.1,
            },
            4.0,
        );
        let rho = EnvironmentKernel::HierarchyStep { amp: 0.5 };
        let (record, _) = solve_upwind(&initial, &kernel, &rho, &coeffs, 2.0).unwrap();
        for level in record.solution_levels() {
            assert!(record.field(level).min_value() >= 0.0);
        }
    }

    #[test]
    fn first_order_convergence_on_the_decay_case() {
        let mu = 0.5;
        let bump = bump_profile(1.0, 2.0, 1.0);
        let error_at = |m: usize, p: usize| -> f64 {
            let grid = SizeGrid::new(8.0, m).unwrap();
            let delay = DelayGrid::new(0.5, p).unwrap();
            let initial = HistoryBuffer::from_fn(delay, grid, |_s, x| bump(x));
            let (record, _) = solve_upwind(
                &initial,
                &RecruitmentKernel::Zero,
                &EnvironmentKernel::Constant { amp: 0.0 },
                &plain_coeffs(mu),
                1.0,
            )
            .unwrap();
            let last = record.field(record.num_levels() - 1);
            relative_l1_error(last, transport_decay_solution(bump, 1.0, mu, 1.0))
        };
        let coarse = error_at(400, 50); // dx = 0.02, dt = 0.01
        let fine = error_at(800, 100);
        assert!(coarse <= 1e-2, "coarse error {coarse}");
        let ratio = coarse / fine;
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }
}
