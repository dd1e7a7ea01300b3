//! Growth and mortality coefficient families with their declared bounds.
//!
//! The growth rate `gamma(x, N)` and the mortality rate `mu(x, N)` take the
//! size `x` and the environment value `N`. Declared bounds are what the
//! assumption checkers test against; shipped families also provide analytic
//! partial derivatives so the solvers do not pay finite-difference noise
//! along characteristics.

use std::sync::Arc;

use crate::scalar::Real;

type Coeff<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Declared bounds for the coefficient pair on `Omega = [0, x_max] x [0, K]`.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientBounds<T> {
    /// Lower bound of the growth rate (strictly positive).
    pub growth_min: T,
    /// Upper bound of the growth rate.
    pub growth_max: T,
    /// Bound on |d gamma / dx| and |d gamma / dN|.
    pub growth_d1_max: T,
    /// Bound on the second partials of gamma.
    pub growth_d2_max: T,
    /// Upper bound of the mortality rate.
    pub mortality_max: T,
    /// Bound on |d mu / dx|.
    pub mortality_dx_max: T,
    /// Bound on |d mu / dN|.
    pub mortality_dn_max: T,
    /// Environment cap `K` defining the sampling box.
    pub env_cap: T,
}

/// Evaluable coefficient pair with declared bounds.
#[derive(Clone)]
pub struct ModelCoefficients<T> {
    growth: Coeff<T>,
    mortality: Coeff<T>,
    growth_dx: Option<Coeff<T>>,
    growth_dn: Option<Coeff<T>>,
    pub bounds: CoefficientBounds<T>,
}

impl<T: Real> ModelCoefficients<T> {
    pub fn new(
        growth: impl Fn(T, T) -> T + Send + Sync + 'static,
        mortality: impl Fn(T, T) -> T + Send + Sync + 'static,
        bounds: CoefficientBounds<T>,
    ) -> Self {
        Self {
            growth: Arc::new(growth),
            mortality: Arc::new(mortality),
            growth_dx: None,
            growth_dn: None,
            bounds,
        }
    }

    /// Attach analytic partial derivatives of the growth rate.
    pub fn with_growth_derivatives(
        mut self,
        dx: impl Fn(T, T) -> T + Send + Sync + 'static,
        dn: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Self {
        self.growth_dx = Some(Arc::new(dx));
        self.growth_dn = Some(Arc::new(dn));
        self
    }

    #[inline]
    pub fn growth(&self, x: T, env: T) -> T {
        (self.growth)(x, env)
    }

    #[inline]
    pub fn mortality(&self, x: T, env: T) -> T {
        (self.mortality)(x, env)
    }

    pub fn has_analytic_growth_derivatives(&self) -> bool {
        self.growth_dx.is_some()
    }

    /// `d gamma / dx`; analytic when the family provides it, otherwise a
    /// central difference with step `h = 1e-5 * (1 + |x|)`.
    pub fn growth_dx(&self, x: T, env: T) -> T {
        match &self.growth_dx {
            Some(f) => f(x, env),
            None => {
                let h = T::lit(1e-5) * (T::one() + x.abs());
                let lo = (x - h).max(T::zero());
                ((self.growth)(x + h, env) - (self.growth)(lo, env)) / (x + h - lo)
            }
        }
    }

    /// `d gamma / dN`; analytic when available, central difference otherwise.
    pub fn growth_dn(&self, x: T, env: T) -> T {
        match &self.growth_dn {
            Some(f) => f(x, env),
            None => {
                let h = T::lit(1e-5) * (T::one() + env.abs());
                let lo = (env - h).max(T::zero());
                ((self.growth)(x, env + h) - (self.growth)(x, lo)) / (env + h - lo)
            }
        }
    }
}

impl<T> std::fmt::Debug for ModelCoefficients<T>
where
    T: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelCoefficients")
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

/// Named growth-rate families constructible from configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthFamily<T> {
    /// `gamma = c`.
    Constant { value: T },
    /// `gamma = base + amp / (1 + N)`; decreasing in the environment.
    EnvFalling { base: T, amp: T },
    /// `gamma = top - amp / (1 + N)`; increasing in the environment.
    EnvRising { top: T, amp: T },
}

/// Named mortality families constructible from configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MortalityFamily<T> {
    /// `mu = c`.
    Constant { value: T },
    /// `mu = base + amp * N / (1 + N)`; saturating in the environment.
    EnvSaturating { base: T, amp: T },
}

impl<T: Real> GrowthFamily<T> {
    /// Tight bounds of the family over `N in [0, K]` (x-independent families).
    ///
    /// Returned as `(min, max, d1_max, d2_max)`.
    pub fn tight_bounds(&self) -> (T, T, T, T) {
        let two = T::lit(2.0);
        match *self {
            GrowthFamily::Constant { value } => (value, value, T::zero(), T::zero()),
            GrowthFamily::EnvFalling { base, amp } => (base, base + amp, amp, two * amp),
            GrowthFamily::EnvRising { top, amp } => (top - amp, top, amp, two * amp),
        }
    }

    fn eval(&self, env: T) -> T {
        match *self {
            GrowthFamily::Constant { value } => value,
            GrowthFamily::EnvFalling { base, amp } => base + amp / (T::one() + env),
            GrowthFamily::EnvRising { top, amp } => top - amp / (T::one() + env),
        }
    }

    fn eval_dn(&self, env: T) -> T {
        let denom = (T::one() + env) * (T::one() + env);
        match *self {
            GrowthFamily::Constant { .. } => T::zero(),
            GrowthFamily::EnvFalling { amp, .. } => -amp / denom,
            GrowthFamily::EnvRising { amp, .. } => amp / denom,
        }
    }
}

impl<T: Real> MortalityFamily<T> {
    /// `(max, dx_max, dn_max)` over `N in [0, K]`.
    pub fn tight_bounds(&self) -> (T, T, T) {
        match *self {
            MortalityFamily::Constant { value } => (value, T::zero(), T::zero()),
            MortalityFamily::EnvSaturating { base, amp } => (base + amp, T::zero(), amp),
        }
    }

    fn eval(&self, env: T) -> T {
        match *self {
            MortalityFamily::Constant { value } => value,
            MortalityFamily::EnvSaturating { base, amp } => {
                base + amp * env / (T::one() + env)
            }
        }
    }
}

/// Build [`ModelCoefficients`] from named families with analytic derivatives
/// and tight declared bounds.
pub fn from_families<T: Real>(
    growth: GrowthFamily<T>,
    mortality: MortalityFamily<T>,
    env_cap: T,
) -> ModelCoefficients<T> {
    let (g_min, g_max, g_d1, g_d2) = growth.tight_bounds();
    let (m_max, m_dx, m_dn) = mortality.tight_bounds();
    let bounds = CoefficientBounds {
        growth_min: g_min,
        growth_max: g_max,
        growth_d1_max: g_d1,
        growth_d2_max: g_d2,
        mortality_max: m_max,
        mortality_dx_max: m_dx,
        mortality_dn_max: m_dn,
        env_cap,
    };
    let g = growth;
    let m = mortality;
    ModelCoefficients::new(move |_x, env| g.eval(env), move |_x, env| m.eval(env), bounds)
        .with_growth_derivatives(|_x, _env| T::zero(), move |_x, env| g.eval_dn(env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn families_match_their_closures() {
        let c = from_families(
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
        assert_relative_eq!(c.growth(3.0, 1.0), 1.0 + 0.8 / 2.0);
        assert_relative_eq!(c.mortality(3.0, 1.0), 0.05 + 0.1 * 0.5);
        assert_relative_eq!(c.growth_dn(0.0, 0.0), -0.8);
        assert_eq!(c.growth_dx(5.0, 2.0), 0.0);
    }

    #[test]
    fn finite_difference_fallback_tracks_analytic_derivative() {
        let bounds = CoefficientBounds {
            growth_min: 0.5,
            growth_max: 2.5,
            growth_d1_max: 1.0,
            growth_d2_max: 1.0,
            mortality_max: 0.0,
            mortality_dx_max: 0.0,
            mortality_dn_max: 0.0,
            env_cap: 1.0,
        };
        let c = ModelCoefficients::new(
            |x: f64, env: f64| 1.0 + 0.5 * (-x).exp() + 0.3 * env,
            |_, _| 0.0,
            bounds,
        );
        assert_relative_eq!(c.growth_dx(1.0, 0.2), -0.5 * (-1.0_f64).exp(), epsilon = 1e-6);
        assert_relative_eq!(c.growth_dn(1.0, 0.2), 0.3, epsilon = 1e-6);
    }
}
