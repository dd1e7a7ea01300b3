//! Simulation and verification engine for a nonlinear size-structured
//! population model whose recruitment carries a distributed delay.
//!
//! The model transports a density `n(t, x)` of individuals of size `x` at a
//! nonlinear growth speed `gamma(x, N)`, removes mass at a mortality rate
//! `mu(x, N)`, and creates new individuals through a recruitment operator
//! that integrates the population over the past delay window `[-tau, 0]`.
//! The environment `N[n](x)` couples the equation to itself through a
//! nonlocal kernel.
//!
//! The crate provides two independent solvers plus the analysis tooling that
//! turns the model's structural theory into executable checks:
//!
//! - [`characteristics`]: method-of-steps fixed-point solver on the
//!   representation formula along characteristic curves;
//! - [`upwind`]: explicit conservative upwind finite-volume scheme, the
//!   cross-validation oracle;
//! - [`semigroup`]: the product-space isomorphism and resolvent formulas of
//!   the delay-semigroup reduction, with quantitative inequality batteries;
//! - [`diagnostics`]: positivity, a-priori growth bounds, history identity
//!   and continuous-dependence checks applied to solver output;
//! - [`checks`]: samplers validating coefficient and kernel hypotheses.
//!
//! Everything is generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`); the `*64` aliases below pick the default.

pub mod characteristics;
pub mod checks;
pub mod coeffs;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod kernels;
pub mod operators;
pub mod quad;
pub mod record;
pub mod scalar;
pub mod semigroup;
pub mod upwind;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default-precision aliases for the main value types.
pub type SizeGrid64 = grid::SizeGrid<f64>;
pub type DelayGrid64 = grid::DelayGrid<f64>;
pub type DensityField64 = field::DensityField<f64>;
pub type HistoryBuffer64 = field::HistoryBuffer<f64>;
pub type ModelCoefficients64 = coeffs::ModelCoefficients<f64>;
pub type EnvironmentKernel64 = kernels::EnvironmentKernel<f64>;
pub type RecruitmentKernel64 = kernels::RecruitmentKernel<f64>;
pub type SolutionRecord64 = record::SolutionRecord<f64>;
pub type ProductElement64 = semigroup::ProductElement<f64>;

/// Single-precision aliases.
pub type SizeGrid32 = grid::SizeGrid<f32>;
pub type DelayGrid32 = grid::DelayGrid<f32>;
pub type DensityField32 = field::DensityField<f32>;
pub type HistoryBuffer32 = field::HistoryBuffer<f32>;
