//! Environment and recruitment kernels.
//!
//! The environment kernel `rho(x, y)` weighs how strongly an individual of
//! size `y` is felt by one of size `x`. The recruitment kernel
//! `beta(sigma, x, y)` (optionally also a function of the accumulated
//! environment) is the rate at which parents of size `y`, a lag `-sigma`
//! ago, produce offspring of size `x`.
//!
//! Shipped families carry structure the operators exploit: separable kernels
//! factor the double quadrature, constant and step environment kernels
//! collapse the environment integral to running sums. Those fast paths use
//! the same trapezoid weights as the generic evaluation.

use std::sync::Arc;

use crate::scalar::Real;

type EnvFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
type BetaFn<T> = Arc<dyn Fn(T, T, T) -> T + Send + Sync>;
type BetaEnvFn<T> = Arc<dyn Fn(T, T, T, T) -> T + Send + Sync>;
type ProfileFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Nonlocal environment kernel `rho(x, y) >= 0`.
#[derive(Clone)]
pub enum EnvironmentKernel<T> {
    /// `rho = amp` everywhere.
    Constant { amp: T },
    /// `rho = amp * exp(-(x - y)^2 / (2 width^2))`.
    Gaussian { amp: T, width: T },
    /// `rho = amp` for `y >= x`, zero below: each individual only sees the
    /// part of the population at least as large as itself.
    HierarchyStep { amp: T },
    /// Arbitrary evaluable kernel.
    Custom(EnvFn<T>),
}

impl<T: Real> EnvironmentKernel<T> {
    pub fn custom(f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        EnvironmentKernel::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: T, y: T) -> T {
        match self {
            EnvironmentKernel::Constant { amp } => *amp,
            EnvironmentKernel::Gaussian { amp, width } => {
                let d = (x - y) / *width;
                *amp * (-d * d * T::lit(0.5)).exp()
            }
            EnvironmentKernel::HierarchyStep { amp } => {
                if y >= x {
                    *amp
                } else {
                    T::zero()
                }
            }
            EnvironmentKernel::Custom(f) => f(x, y),
        }
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for EnvironmentKernel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvironmentKernel::Constant { amp } => {
                f.debug_struct("Constant").field("amp", amp).finish()
            }
            EnvironmentKernel::Gaussian { amp, width } => f
                .debug_struct("Gaussian")
                .field("amp", amp)
                .field("width", width)
                .finish(),
            EnvironmentKernel::HierarchyStep { amp } => {
                f.debug_struct("HierarchyStep").field("amp", amp).finish()
            }
            EnvironmentKernel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Declared constants of a recruitment kernel.
///
/// `l1_bound` caps the L1 norm of the aggregated recruitment per unit of
/// integrated history, `w11_bound` the L1 norm of value plus size-derivative,
/// `sup_bound` the pointwise sup; `lipschitz_l1` / `lipschitz_w11` are the
/// corresponding Lipschitz constants in the history.
#[derive(Debug, Clone, Copy)]
pub struct RecruitmentConstants<T> {
    pub l1_bound: T,
    pub w11_bound: T,
    pub sup_bound: T,
    pub lipschitz_l1: T,
    pub lipschitz_w11: T,
}

impl<T: Real> RecruitmentConstants<T> {
    /// Largest of the three norm bounds; the rate constant of the a-priori
    /// growth bounds.
    pub fn combined(&self) -> T {
        self.l1_bound.max(self.w11_bound).max(self.sup_bound)
    }

    pub fn zero() -> Self {
        Self {
            l1_bound: T::zero(),
            w11_bound: T::zero(),
            sup_bound: T::zero(),
            lipschitz_l1: T::zero(),
            lipschitz_w11: T::zero(),
        }
    }
}

/// Separable factors `beta = amp * lag(sigma) * offspring(x) * fertility(y)`.
#[derive(Clone)]
pub struct SeparableParts<T> {
    pub amp: T,
    pub lag: ProfileFn<T>,
    pub offspring: ProfileFn<T>,
    pub fertility: ProfileFn<T>,
}

impl<T: Real> SeparableParts<T> {
    pub fn new(
        amp: T,
        lag: impl Fn(T) -> T + Send + Sync + 'static,
        offspring: impl Fn(T) -> T + Send + Sync + 'static,
        fertility: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            amp,
            lag: Arc::new(lag),
            offspring: Arc::new(offspring),
            fertility: Arc::new(fertility),
        }
    }

    #[inline]
    pub fn eval(&self, sigma: T, x: T, y: T) -> T {
        self.amp * (self.lag)(sigma) * (self.offspring)(x) * (self.fertility)(y)
    }
}

/// Recruitment kernel with declared constants.
#[derive(Clone)]
pub enum RecruitmentKernel<T> {
    /// No recruitment.
    Zero,
    /// Separable `beta(sigma, x, y)`.
    Separable {
        parts: SeparableParts<T>,
        constants: RecruitmentConstants<T>,
    },
    /// Separable kernel damped by the accumulated environment:
    /// `beta = parts(sigma, x, y) / (1 + suppression * script_n)`.
    SeparableEnv {
        parts: SeparableParts<T>,
        suppression: T,
        constants: RecruitmentConstants<T>,
    },
    /// Arbitrary `beta(sigma, x, y)`.
    General {
        beta: BetaFn<T>,
        constants: RecruitmentConstants<T>,
    },
    /// Arbitrary `beta(sigma, x, y, script_n)`.
    GeneralEnv {
        beta: BetaEnvFn<T>,
        constants: RecruitmentConstants<T>,
    },
}

impl<T: Real> RecruitmentKernel<T> {
    pub fn general(
        beta: impl Fn(T, T, T) -> T + Send + Sync + 'static,
        constants: RecruitmentConstants<T>,
    ) -> Self {
        RecruitmentKernel::General {
            beta: Arc::new(beta),
            constants,
        }
    }

    pub fn general_env(
        beta: impl Fn(T, T, T, T) -> T + Send + Sync + 'static,
        constants: RecruitmentConstants<T>,
    ) -> Self {
        RecruitmentKernel::GeneralEnv {
            beta: Arc::new(beta),
            constants,
        }
    }

    pub fn constants(&self) -> RecruitmentConstants<T> {
        match self {
            RecruitmentKernel::Zero => RecruitmentConstants::zero(),
            RecruitmentKernel::Separable { constants, .. }
            | RecruitmentKernel::SeparableEnv { constants, .. }
            | RecruitmentKernel::General { constants, .. }
            | RecruitmentKernel::GeneralEnv { constants, .. } => *constants,
        }
    }

    /// Does the kernel read the accumulated environment?
    pub fn depends_on_environment(&self) -> bool {
        matches!(
            self,
            RecruitmentKernel::SeparableEnv { .. } | RecruitmentKernel::GeneralEnv { .. }
        )
    }

    /// Evaluate at `(sigma, x, y)` with the accumulated environment `script_n`.
    pub fn eval(&self, sigma: T, x: T, y: T, script_n: T) -> T {
        match self {
            RecruitmentKernel::Zero => T::zero(),
            RecruitmentKernel::Separable { parts, .. } => parts.eval(sigma, x, y),
            RecruitmentKernel::SeparableEnv {
                parts, suppression, ..
            } => parts.eval(sigma, x, y) / (T::one() + *suppression * script_n),
            RecruitmentKernel::General { beta, .. } => beta(sigma, x, y),
            RecruitmentKernel::GeneralEnv { beta, .. } => beta(sigma, x, y, script_n),
        }
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for RecruitmentKernel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecruitmentKernel::Zero => f.write_str("Zero"),
            RecruitmentKernel::Separable { .. } => f.write_str("Separable(..)"),
            RecruitmentKernel::SeparableEnv { .. } => f.write_str("SeparableEnv(..)"),
            RecruitmentKernel::General { .. } => f.write_str("General(..)"),
            RecruitmentKernel::GeneralEnv { .. } => f.write_str("GeneralEnv(..)"),
        }
    }
}

/// The stock separable family used by the shipped configurations:
/// offspring sizes distributed as `exp(-x / scale) / scale`, fertility
/// saturating in the parent size as `y^2 / (y^2 + midpoint^2)`, lag weight
/// `exp(rate * sigma)`.
///
/// Declared constants are tight for this family (`sup lag = 1` for
/// `rate >= 0`, `sup fertility < 1`): per unit of integrated history the
/// L1 norm is below `amp`, the sup below `amp / scale`, and the
/// W11 norm below `amp * (1 + 1 / scale)`.
pub fn stock_separable<T: Real>(
    amp: T,
    size_scale: T,
    fertility_midpoint: T,
    lag_rate: T,
) -> (SeparableParts<T>, RecruitmentConstants<T>) {
    let parts = SeparableParts::new(
        amp,
        move |sigma: T| (lag_rate * sigma).exp(),
        move |x: T| (-x / size_scale).exp() / size_scale,
        move |y: T| {
            let y2 = y * y;
            y2 / (y2 + fertility_midpoint * fertility_midpoint)
        },
    );
    let constants = RecruitmentConstants {
        l1_bound: amp,
        w11_bound: amp * (T::one() + T::one() / size_scale),
        sup_bound: amp / size_scale,
        lipschitz_l1: amp,
        lipschitz_w11: amp * (T::one() + T::one() / size_scale),
    };
    (parts, constants)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchy_step_is_one_sided() {
        let k = EnvironmentKernel::HierarchyStep { amp: 0.5 };
        assert_eq!(k.eval(1.0, 2.0), 0.5);
        assert_eq!(k.eval(1.0, 1.0), 0.5);
        assert_eq!(k.eval(2.0, 1.0), 0.0);
    }

    #[test]
    fn env_variant_damps_recruitment() {
        let (parts, constants) = stock_separable(1.0, 1.0, 2.0, 0.0);
        let plain = RecruitmentKernel::Separable {
            parts: parts.clone(),
            constants,
        };
        let damped = RecruitmentKernel::SeparableEnv {
            parts,
            suppression: 2.0,
            constants,
        };
        let base = plain.eval(-0.5, 0.3, 3.0, 0.0);
        assert!(base > 0.0);
        assert_eq!(damped.eval(-0.5, 0.3, 3.0, 0.0), base);
        assert_eq!(damped.eval(-0.5, 0.3, 3.0, 1.0), base / 3.0);
    }

    #[test]
    fn combined_constant_is_the_max() {
        let c = RecruitmentConstants {
            l1_bound: 0.5,
            w11_bound: 1.35,
            sup_bound: 0.9,
            lipschitz_l1: 0.5,
            lipschitz_w11: 1.35,
        };
        assert_eq!(c.combined(), 1.35);
    }
}
