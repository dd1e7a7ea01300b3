//! Numerical realization of the delay-semigroup reduction: elements of the
//! product space (history segment, boundary field), the first-order
//! isomorphism between the graph space and the base space with its
//! closed-form inverse, and the resolvent of the shifted generator with its
//! quantitative contraction bounds.
//!
//! The cumulative integrals behind the inverse and the resolvent are
//! evaluated in factored form, `u_{i+1} = r_i u_i + local trapezoid`, which
//! is algebraically the cumulative trapezoid rule but never materializes the
//! exponentially large integrating factor.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coeffs::ModelCoefficients;
use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::grid::{DelayGrid, SizeGrid};
use crate::kernels::EnvironmentKernel;
use crate::operators::{environment, history_l1_norm_rows, l1_norm_values, slope_l1_norm_values};
use crate::quad::central_derivative;
use crate::scalar::Real;

/// Relative tolerance of the graph-space membership check.
const MEMBERSHIP_TOL: f64 = 1e-12;

/// Element of the product space: a history segment `u~(sigma, x)` sampled on
/// the delay x size lattice plus a field `u(x)` on the size grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductElement<T> {
    pub delay: DelayGrid<T>,
    pub grid: SizeGrid<T>,
    /// Row `j` is the history at lag node `sigma_j`.
    pub history_part: Vec<Vec<T>>,
    pub field_part: Vec<T>,
}

impl<T: Real> ProductElement<T> {
    pub fn zero(delay: DelayGrid<T>, grid: SizeGrid<T>) -> Self {
        Self {
            delay,
            grid,
            history_part: vec![vec![T::zero(); grid.len()]; delay.len()],
            field_part: vec![T::zero(); grid.len()],
        }
    }

    pub fn from_fns(
        delay: DelayGrid<T>,
        grid: SizeGrid<T>,
        history: impl Fn(T, T) -> T,
        field: impl Fn(T) -> T,
    ) -> Self {
        let history_part = delay
            .nodes()
            .map(|s| grid.nodes().map(|x| history(s, x)).collect())
            .collect();
        let field_part = grid.nodes().map(field).collect();
        Self {
            delay,
            grid,
            history_part,
            field_part,
        }
    }

    /// Base-space norm: history L1 plus field L1.
    pub fn l1_norm(&self) -> T {
        history_l1_norm_rows(&self.history_part, self.delay.dsigma(), self.grid.dx())
            + l1_norm_values(&self.field_part, self.grid.dx())
    }

    /// Graph-space norm: history L1, plus L1 of the lag derivative of the
    /// history, plus the W11 norm of the field.
    pub fn graph_norm(&self) -> T {
        let dx = self.grid.dx();
        let ds = self.delay.dsigma();
        let sigma_slope = self.history_sigma_derivative();
        self.l1_norm()
            + history_l1_norm_rows(&sigma_slope, ds, dx)
            + slope_l1_norm_values(&self.field_part, dx)
    }

    /// Central-difference derivative of the history in the lag direction.
    pub fn history_sigma_derivative(&self) -> Vec<Vec<T>> {
        let rows = self.history_part.len();
        let cols = self.grid.len();
        let ds = self.delay.dsigma();
        let mut out = vec![vec![T::zero(); cols]; rows];
        for i in 0..cols {
            let column: Vec<T> = (0..rows).map(|j| self.history_part[j][i]).collect();
            let d = central_derivative(&column, ds);
            for (j, v) in d.into_iter().enumerate() {
                out[j][i] = v;
            }
        }
        out
    }

    /// Graph-space membership: the newest history row equals the field and
    /// the field vanishes at size zero, both to grid exactness.
    pub fn check_graph_membership(&self) -> Result<()> {
        let newest = self.history_part.last().expect("p + 1 rows");
        let scale = self
            .field_part
            .iter()
            .fold(T::lit(1e-300), |a, &b| a.max(b.abs()));
        let tol = scale * T::lit(MEMBERSHIP_TOL);
        for (i, (a, b)) in newest.iter().zip(&self.field_part).enumerate() {
            if (*a - *b).abs() > tol {
                return Err(Error::Domain(format!(
                    "graph membership broken at node {i}: newest history row {a} vs field {b}"
                )));
            }
        }
        if self.field_part[0].abs() > tol {
            return Err(Error::Domain(format!(
                "graph membership broken: field({}) = {} at size zero",
                0, self.field_part[0]
            )));
        }
        Ok(())
    }
}

/// The isomorphism from the graph space onto the base space:
/// `(u~, u) -> (u~ - d u~/d sigma, u + du/dx)` with central differences.
pub fn apply_isomorphism<T: Real>(element: &ProductElement<T>) -> Result<ProductElement<T>> {
    element.check_graph_membership()?;
    let sigma_slope = element.history_sigma_derivative();
    let history_part = element
        .history_part
        .iter()
        .zip(&sigma_slope)
        .map(|(row, slope)| row.iter().zip(slope).map(|(v, d)| *v - *d).collect())
        .collect();
    let field_slope = central_derivative(&element.field_part, element.grid.dx());
    let field_part = element
        .field_part
        .iter()
        .zip(&field_slope)
        .map(|(v, d)| *v + *d)
        .collect();
    Ok(ProductElement {
        delay: element.delay,
        grid: element.grid,
        history_part,
        field_part,
    })
}

/// Closed-form inverse of the isomorphism, by cumulative trapezoid:
///
/// ```text
/// u(x)          = e^{-x} int_0^x e^s f(s) ds
/// u~(sigma, x)  = e^sigma u(x) + e^sigma int_sigma^0 e^{-xi} f~(xi, x) dxi
/// ```
///
/// The output satisfies the graph membership exactly by construction.
pub fn invert_isomorphism<T: Real>(rhs: &ProductElement<T>) -> ProductElement<T> {
    let grid = rhs.grid;
    let delay = rhs.delay;
    let dx = grid.dx();
    let ds = delay.dsigma();
    let half = T::lit(0.5);
    let cols = grid.len();
    let rows = delay.len();

    // u_{i+1} = e^{-dx} u_i + (dx/2)(e^{-dx} f_i + f_{i+1})
    let decay_x = (-dx).exp();
    let mut field_part = vec![T::zero(); cols];
    for i in 0..cols - 1 {
        field_part[i + 1] = decay_x * field_part[i]
            + dx * half * (decay_x * rhs.field_part[i] + rhs.field_part[i + 1]);
    }

    // rows from lag zero downward:
    // v_j = e^{-ds} v_{j+1} + (ds/2)(f~_j + e^{-ds} f~_{j+1})
    let decay_s = (-ds).exp();
    let mut history_part = vec![vec![T::zero(); cols]; rows];
    history_part[rows - 1] = field_part.clone();
    for j in (0..rows - 1).rev() {
        for i in 0..cols {
            history_part[j][i] = decay_s * history_part[j + 1][i]
                + ds * half * (rhs.history_part[j][i] + decay_s * rhs.history_part[j + 1][i]);
        }
    }

    ProductElement {
        delay,
        grid,
        history_part,
        field_part,
    }
}

/// Resolvent output plus the residual of the defining equation.
#[derive(Debug, Clone)]
pub struct ResolventOutput<T> {
    pub element: ProductElement<T>,
    /// L1 norm of `lambda u + u + (gamma u)' - f` on the size grid.
    pub field_residual: T,
}

/// Resolvent of the shifted generator frozen at the density `w`:
///
/// ```text
/// u(x)         = E(x) int_0^x (E(s) gamma(s, N^w(s)))^{-1} f(s) ds,
/// E(x)         = exp{- int_0^x (lambda + 1 + Dgamma(s)) / gamma(s, N^w(s)) ds},
/// u~(sigma, x) = e^{(lambda+1) sigma} u(x)
///                + e^{(lambda+1) sigma} int_sigma^0 e^{-(lambda+1) xi} f~(xi, x) dxi,
/// ```
///
/// with `Dgamma` the total size-derivative of the growth speed along the
/// frozen environment profile `N^w`.
pub fn resolvent<T: Real>(
    lambda: T,
    frozen_density: &DensityField<T>,
    rhs: &ProductElement<T>,
    coeffs: &ModelCoefficients<T>,
    rho: &EnvironmentKernel<T>,
) -> Result<ResolventOutput<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::Domain(format!(
            "resolvent needs lambda > 0, got {lambda}"
        )));
    }
    let grid = rhs.grid;
    if frozen_density.grid() != grid {
        return Err(Error::Domain(
            "frozen density and right-hand side live on different grids".into(),
        ));
    }
    let delay = rhs.delay;
    let dx = grid.dx();
    let ds = delay.dsigma();
    let half = T::lit(0.5);
    let cols = grid.len();
    let rows = delay.len();
    let one = T::one();

    let env = environment(frozen_density, rho);
    let env_slope = central_derivative(&env, dx);

    // exponent density h = (lambda + 1 + Dgamma) / gamma and scaled source
    let mut rate = Vec::with_capacity(cols);
    let mut speed = Vec::with_capacity(cols);
    for i in 0..cols {
        let x = grid.node(i);
        let g = coeffs.growth(x, env[i]);
        let dgamma = coeffs.growth_dx(x, env[i]) + coeffs.growth_dn(x, env[i]) * env_slope[i];
        rate.push((lambda + one + dgamma) / g);
        speed.push(g);
    }

    // u_{i+1} = r_i u_i + (dx/2)(r_i g_i + g_{i+1}), r_i = E(x_{i+1})/E(x_i)
    let mut field_part = vec![T::zero(); cols];
    for i in 0..cols - 1 {
        let ratio = (-(dx * half) * (rate[i] + rate[i + 1])).exp();
        let g_here = rhs.field_part[i] / speed[i];
        let g_next = rhs.field_part[i + 1] / speed[i + 1];
        field_part[i + 1] = ratio * field_part[i] + dx * half * (ratio * g_here + g_next);
    }

    // history rows with rate lambda + 1
    let decay_s = (-(lambda + one) * ds).exp();
    let mut history_part = vec![vec![T::zero(); cols]; rows];
    history_part[rows - 1] = field_part.clone();
    for j in (0..rows - 1).rev() {
        for i in 0..cols {
            history_part[j][i] = decay_s * history_part[j + 1][i]
                + ds * half * (rhs.history_part[j][i] + decay_s * rhs.history_part[j + 1][i]);
        }
    }

    // residual of lambda u + u + (gamma u)' = f
    let transported: Vec<T> = (0..cols).map(|i| speed[i] * field_part[i]).collect();
    let transported_slope = central_derivative(&transported, dx);
    let residual_values: Vec<T> = (0..cols)
        .map(|i| {
            (lambda + one) * field_part[i] + transported_slope[i] - rhs.field_part[i]
        })
        .collect();
    let field_residual = l1_norm_values(&residual_values, dx);

    Ok(ResolventOutput {
        element: ProductElement {
            delay,
            grid,
            history_part,
            field_part,
        },
        field_residual,
    })
}

// ---------------------------------------------------------------------------
// Randomized inequality batteries
// ---------------------------------------------------------------------------

/// Battery sizes and the seed; the defaults match the verification suite.
#[derive(Debug, Clone)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Draws for the resolvent contraction battery.
    pub draws: usize,
    /// Draws for the graph-norm equivalence battery.
    pub smooth_draws: usize,
    pub lambdas: Vec<f64>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            draws: 256,
            smooth_draws: 64,
            lambdas: vec![0.5, 1.0, 2.0, 10.0],
        }
    }
}

/// Margin summary of one inequality over a battery.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityStat {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Smallest of `bound - observed` over the battery.
    pub worst_margin: f64,
    pub pass: bool,
}

impl InequalityStat {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checked: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            pass: true,
        }
    }

    fn record(&mut self, observed: f64, bound: f64, tol: f64) {
        self.checked += 1;
        let margin = bound - observed;
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
        if !(margin >= -tol) {
            self.violations += 1;
            self.pass = false;
        }
    }
}

/// Full semigroup-lab verification report.
#[derive(Debug, Clone, Serialize)]
pub struct SemigroupReport {
    pub contraction: InequalityStat,
    pub component_contraction: InequalityStat,
    pub equivalence_upper: InequalityStat,
    pub equivalence_lower: InequalityStat,
    pub equivalence_lower_refined: InequalityStat,
    pub roundtrip_error_coarse: f64,
    pub roundtrip_error_fine: f64,
    pub roundtrip_order_ratio: f64,
    pub residual_coarse: f64,
    pub residual_fine: f64,
    pub residual_ratio: f64,
    pub closed_form_sup_error: f64,
    pub pass: bool,
}

/// Sum of a few Gaussian humps with coefficients drawn from the RNG.
fn random_mix(rng: &mut ChaCha8Rng, x_max: f64) -> impl Fn(f64) -> f64 + Clone {
    let mut terms = Vec::new();
    for _ in 0..3 {
        let amp: f64 = rng.gen_range(-1.0..1.0);
        let center: f64 = rng.gen_range(0.15 * x_max..0.6 * x_max);
        let width: f64 = rng.gen_range(0.4..1.5);
        terms.push((amp, center, width));
    }
    move |x: f64| {
        terms
            .iter()
            .map(|(a, c, w)| a * (-((x - c) / w).powi(2) * 0.5).exp())
            .sum()
    }
}

fn lag_profile(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 + Clone {
    let rate: f64 = rng.gen_range(-1.0..1.0);
    let offset: f64 = rng.gen_range(0.2..1.0);
    move |s: f64| offset + (rate * s).exp()
}

/// Run the default verification battery at the given grids.
///
/// `refine` controls the grid used by the refinement halves of the
/// equivalence, round-trip and residual checks.
pub fn run_battery(
    grid: SizeGrid<f64>,
    delay: DelayGrid<f64>,
    coeffs: &ModelCoefficients<f64>,
    rho: &EnvironmentKernel<f64>,
    config: &BatteryConfig,
) -> Result<SemigroupReport> {
    for lambda in &config.lambdas {
        if !(*lambda > 0.0) {
            return Err(Error::Domain(format!(
                "battery lambda must be positive, got {lambda}"
            )));
        }
    }
    let x_max = grid.x_max();
    let tau = delay.tau();

    // -- resolvent contraction ---------------------------------------------
    let mut contraction = InequalityStat::new("resolvent contraction: |R F| <= |F| / lambda");
    let mut component = InequalityStat::new(
        "component bound: |R F| <= |f~|/(l+1) + (1/(l+1)^2 + 1/(l+1)) |f|",
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.draws {
        let field_mix = random_mix(&mut rng, x_max);
        let history_mix = random_mix(&mut rng, x_max);
        let lag = lag_profile(&mut rng);
        let density_mix = random_mix(&mut rng, x_max);
        let rhs = ProductElement::from_fns(
            delay,
            grid,
            |s, x| lag(s) * history_mix(x),
            &field_mix,
        );
        let frozen = DensityField::from_fn(grid, |x| density_mix(x).abs() + 0.05);
        let history_norm = history_l1_norm_rows(&rhs.history_part, delay.dsigma(), grid.dx());
        let field_norm = l1_norm_values(&rhs.field_part, grid.dx());
        for &lambda in &config.lambdas {
            let out = resolvent(lambda, &frozen, &rhs, coeffs, rho)?;
            let norm = out.element.l1_norm();
            contraction.record(norm, (history_norm + field_norm) / lambda, 0.0);
            let lp = lambda + 1.0;
            component.record(
                norm,
                history_norm / lp + (1.0 / (lp * lp) + 1.0 / lp) * field_norm,
                0.0,
            );
        }
    }

    // -- graph-norm equivalence ---------------------------------------------
    let lower_constant = 1.0 / (2.0 * tau + 3.0);
    let mut upper = InequalityStat::new("equivalence upper: |S U| <= |U|_graph");
    let mut lower = InequalityStat::new("equivalence lower: |S U| >= |U|_graph / (2 tau + 3), slack 2%");
    let mut lower_refined =
        InequalityStat::new("equivalence lower on refined grids, slack 1%");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let fine_grid = grid.refined(1);
    let fine_delay = delay.refined(1);
    for _ in 0..config.smooth_draws {
        let base = random_mix(&mut rng, x_max);
        let extra = random_mix(&mut rng, x_max);
        let rate: f64 = rng.gen_range(-0.8..0.8);
        let u = move |x: f64| x * base(x);
        let u_in_history = u.clone();
        let history =
            move |s: f64, x: f64| (rate * s).exp() * u_in_history(x) + s * s.exp() * extra(x);
        for (g, d, stat, slack) in [
            (grid, delay, &mut lower, 0.02),
            (fine_grid, fine_delay, &mut lower_refined, 0.01),
        ] {
            let element = ProductElement::from_fns(d, g, &history, &u);
            let graph_norm = element.graph_norm();
            let mapped = apply_isomorphism(&element)?;
            let mapped_norm = mapped.l1_norm();
            stat.record(lower_constant * graph_norm * (1.0 - slack), mapped_norm, 0.0);
            if g == grid {
                upper.record(mapped_norm, graph_norm, 0.0);
            }
        }
    }

    // -- round-trip refinement ----------------------------------------------
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7269_7021);
    let f_mix = random_mix(&mut rng, x_max);
    let h_mix = random_mix(&mut rng, x_max);
    let lag = lag_profile(&mut rng);
    let roundtrip_error = |g: SizeGrid<f64>, d: DelayGrid<f64>| -> Result<f64> {
        let rhs = ProductElement::from_fns(d, g, |s, x| lag(s) * h_mix(x), &f_mix);
        let back = apply_isomorphism(&invert_isomorphism(&rhs))?;
        let diff_hist: Vec<Vec<f64>> = back
            .history_part
            .iter()
            .zip(&rhs.history_part)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let diff_field: Vec<f64> = back
            .field_part
            .iter()
            .zip(&rhs.field_part)
            .map(|(a, b)| a - b)
            .collect();
        Ok(history_l1_norm_rows(&diff_hist, d.dsigma(), g.dx())
            + l1_norm_values(&diff_field, g.dx()))
    };
    let roundtrip_error_coarse = roundtrip_error(grid, delay)?;
    let roundtrip_error_fine = roundtrip_error(fine_grid, fine_delay)?;
    let roundtrip_order_ratio = roundtrip_error_coarse / roundtrip_error_fine.max(1e-300);

    // -- defining-equation residual refinement --------------------------------
    let residual_at = |g: SizeGrid<f64>, d: DelayGrid<f64>| -> Result<f64> {
        let rhs = ProductElement::from_fns(d, g, |s, x| lag(s) * h_mix(x), &f_mix);
        let frozen = DensityField::from_fn(g, |x| f_mix(x).abs() + 0.1);
        let out = resolvent(1.0, &frozen, &rhs, coeffs, rho)?;
        Ok(out.field_residual)
    };
    let residual_coarse = residual_at(grid, delay)?;
    let residual_fine = residual_at(fine_grid, fine_delay)?;
    let residual_ratio = residual_coarse / residual_fine.max(1e-300);

    // -- closed-form instance -------------------------------------------------
    let closed_form_sup_error = closed_form_resolvent_error()?;

    let pass = contraction.pass
        && component.pass
        && upper.pass
        && lower.pass
        && lower_refined.pass
        && roundtrip_order_ratio >= 3.0
        && residual_ratio >= 1.7
        && closed_form_sup_error <= 1e-4;

    Ok(SemigroupReport {
        contraction,
        component_contraction: component,
        equivalence_upper: upper,
        equivalence_lower: lower,
        equivalence_lower_refined: lower_refined,
        roundtrip_error_coarse,
        roundtrip_error_fine,
        roundtrip_order_ratio,
        residual_coarse,
        residual_fine,
        residual_ratio,
        closed_form_sup_error,
        pass,
    })
}

/// Sup-error of the resolvent against the closed form for unit growth speed:
/// `lambda = 1`, `f = e^{-x}` gives `u = e^{-x} - e^{-2x}` and history rows
/// `e^{2 sigma} u`.
pub fn closed_form_resolvent_error() -> Result<f64> {
    let grid = SizeGrid::<f64>::new(10.0, 1000)?; // dx = 0.01
    let delay = DelayGrid::<f64>::new(1.0, 64)?;
    let coeffs = crate::coeffs::from_families(
        crate::coeffs::GrowthFamily::Constant { value: 1.0 },
        crate::coeffs::MortalityFamily::Constant { value: 0.0 },
        1.0,
    );
    let rho = EnvironmentKernel::Constant { amp: 0.0 };
    let rhs = ProductElement::from_fns(delay, grid, |_s, _x| 0.0, |x| (-x).exp());
    let frozen = DensityField::zero(grid);
    let out = resolvent(1.0, &frozen, &rhs, &coeffs, &rho)?;
    let mut sup = 0.0_f64;
    for (i, x) in grid.nodes().enumerate() {
        let expected = (-x).exp() - (-2.0 * x).exp();
        sup = sup.max((out.element.field_part[i] - expected).abs());
        // spot-check a history row at sigma = -tau/2
        let j = delay.len() / 2;
        let sigma = delay.node(j);
        let expected_row = (2.0 * sigma).exp() * expected;
        sup = sup.max((out.element.history_part[j][i] - expected_row).abs());
    }
    Ok(sup)
}
