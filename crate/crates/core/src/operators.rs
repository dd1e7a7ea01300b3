//! The nonlocal environment operator, the delayed recruitment operator, the
//! accumulated environment, and the norms of the underlying function spaces.
//!
//! Quadrature convention: every integral is the composite trapezoid rule on
//! the declared grids. Kernel-specific fast paths (separable recruitment,
//! constant and step environment) evaluate the same weighted sums in factored
//! form; unit tests pin them against the generic triple loop.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::DensityField;
use crate::grid::DelayGrid;
use crate::kernels::{EnvironmentKernel, RecruitmentKernel};
use crate::quad::{central_derivative, trapezoid, trapezoid_weight};
use crate::scalar::Real;

/// Norms used by the engine, each tied to one quadrature formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// L1 norm in size.
    L1,
    /// L1 norm of the value plus L1 norm of the size derivative.
    W11,
    /// Max of nodal absolute values.
    Sup,
    /// Double L1 norm over the delay window and size.
    HistoryL1,
}

/// Environment profile `N[n](x_i)` by trapezoid quadrature in `y`.
///
/// Values above the environment cap are reported by the run diagnostics,
/// never clamped here.
pub fn environment<T: Real>(n: &DensityField<T>, rho: &EnvironmentKernel<T>) -> Vec<T> {
    let grid = n.grid();
    let dx = grid.dx();
    let len = grid.len();
    let values = n.values();
    match rho {
        EnvironmentKernel::Constant { amp } => {
            let total = *amp * trapezoid(values, dx);
            vec![total; len]
        }
        EnvironmentKernel::HierarchyStep { amp } => {
            // suffix of the same weighted sum the generic path computes
            let mut out = vec![T::zero(); len];
            let mut acc = T::zero();
            for i in (0..len).rev() {
                acc += trapezoid_weight(i, len, dx) * values[i];
                out[i] = *amp * acc;
            }
            out
        }
        _ => (0..len)
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                let mut acc = T::zero();
                for (k, &v) in values.iter().enumerate() {
                    acc += trapezoid_weight(k, len, dx) * rho.eval(x, grid.node(k)) * v;
                }
                acc
            })
            .collect(),
    }
}

/// Per-slice environment profiles for a full history window.
pub fn environment_per_slice<T: Real>(
    slices: &[DensityField<T>],
    rho: &EnvironmentKernel<T>,
) -> Vec<Vec<T>> {
    slices.iter().map(|s| environment(s, rho)).collect()
}

/// Accumulated environment table `script_n[j][i]` over the delay window:
/// the integral of the per-slice environment at node `x_i` over lags at and
/// above `sigma_j`. The newest row (`j = p`) is identically zero.
pub fn accumulated_environment_table<T: Real>(
    env_profiles: &[Vec<T>],
    delay: DelayGrid<T>,
) -> Vec<Vec<T>> {
    let p = delay.subintervals();
    assert_eq!(env_profiles.len(), p + 1, "one environment profile per slice");
    let nx = env_profiles[0].len();
    let half_ds = delay.dsigma() * T::lit(0.5);
    let mut table = vec![vec![T::zero(); nx]; p + 1];
    for j in (0..p).rev() {
        for i in 0..nx {
            table[j][i] =
                table[j + 1][i] + half_ds * (env_profiles[j][i] + env_profiles[j + 1][i]);
        }
    }
    table
}

/// Accumulated environment profile at one lag `sigma in [-tau, 0]`.
///
/// The indicator restricting the integral to lags `>= sigma` is resolved at
/// grid nodes: the sum runs over the nodes at or above `sigma`, with
/// trapezoid weights of that subrange.
pub fn accumulated_environment<T: Real>(
    slices: &[DensityField<T>],
    delay: DelayGrid<T>,
    rho: &EnvironmentKernel<T>,
    sigma: T,
) -> Result<Vec<T>> {
    if sigma < -delay.tau() || sigma > T::zero() {
        return Err(Error::Domain(format!(
            "lag {sigma} outside [-{}, 0]",
            delay.tau()
        )));
    }
    expect_complete(slices, delay)?;
    let envs = environment_per_slice(slices, rho);
    let nx = envs[0].len();
    let p = delay.subintervals();
    let ds = delay.dsigma();
    // first node index with sigma_j >= sigma
    let mut j0 = p;
    for j in 0..=p {
        if delay.node(j) >= sigma {
            j0 = j;
            break;
        }
    }
    let mut out = vec![T::zero(); nx];
    if j0 >= p {
        return Ok(out);
    }
    let rows = p + 1 - j0;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for (r, env) in envs[j0..].iter().enumerate() {
            acc += trapezoid_weight(r, rows, ds) * env[i];
        }
        *o = acc;
    }
    Ok(out)
}

fn expect_complete<T: Real>(slices: &[DensityField<T>], delay: DelayGrid<T>) -> Result<()> {
    if slices.len() != delay.len() {
        return Err(Error::IncompleteHistory {
            expected: delay.len(),
            got: slices.len(),
        });
    }
    Ok(())
}

/// Aggregated recruitment profile: the lag integral of the recruitment
/// operator applied to each history slice, by double trapezoid quadrature.
///
/// `slices[j]` must be the density at lag `sigma_j`; an incomplete window is
/// a sequencing bug in the caller and fails hard.
pub fn recruitment<T: Real>(
    slices: &[DensityField<T>],
    delay: DelayGrid<T>,
    kernel: &RecruitmentKernel<T>,
    rho: &EnvironmentKernel<T>,
) -> Result<Vec<T>> {
    expect_complete(slices, delay)?;
    let grid = slices[0].grid();
    let nx = grid.len();
    if matches!(kernel, RecruitmentKernel::Zero) {
        return Ok(vec![T::zero(); nx]);
    }
    let dx = grid.dx();
    let ds = delay.dsigma();
    let rows = delay.len();
    let script_n = if kernel.depends_on_environment() {
        let envs = environment_per_slice(slices, rho);
        Some(accumulated_environment_table(&envs, delay))
    } else {
        None
    };

    match kernel {
        RecruitmentKernel::Separable { parts, .. } => {
            // factored sum: amp * offspring(x) * sum_j w_j lag_j sum_k w_k fert_k n_jk
            let mut lagged = T::zero();
            for (j, slice) in slices.iter().enumerate() {
                let mut fert_mass = T::zero();
                for (k, &v) in slice.values().iter().enumerate() {
                    fert_mass += trapezoid_weight(k, nx, dx) * (parts.fertility)(grid.node(k)) * v;
                }
                lagged += trapezoid_weight(j, rows, ds) * (parts.lag)(delay.node(j)) * fert_mass;
            }
            Ok((0..nx)
                .map(|i| parts.amp * (parts.offspring)(grid.node(i)) * lagged)
                .collect())
        }
        RecruitmentKernel::SeparableEnv {
            parts, suppression, ..
        } => {
            let table = script_n.expect("environment table for env-dependent kernel");
            let mut fert_masses = Vec::with_capacity(rows);
            for slice in slices {
                let mut fert_mass = T::zero();
                for (k, &v) in slice.values().iter().enumerate() {
                    fert_mass += trapezoid_weight(k, nx, dx) * (parts.fertility)(grid.node(k)) * v;
                }
                fert_masses.push(fert_mass);
            }
            Ok((0..nx)
                .map(|i| {
                    let mut acc = T::zero();
                    for j in 0..rows {
                        let damp = T::one() + *suppression * table[j][i];
                        acc += trapezoid_weight(j, rows, ds)
                            * (parts.lag)(delay.node(j))
                            * fert_masses[j]
                            / damp;
                    }
                    parts.amp * (parts.offspring)(grid.node(i)) * acc
                })
                .collect())
        }
        _ => Ok((0..nx)
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                let mut acc = T::zero();
                for (j, slice) in slices.iter().enumerate() {
                    let sigma = delay.node(j);
                    let w_s = trapezoid_weight(j, rows, ds);
                    let ascript = script_n.as_ref().map_or(T::zero(), |t| t[j][i]);
                    let mut inner = T::zero();
                    for (k, &v) in slice.values().iter().enumerate() {
                        inner += trapezoid_weight(k, nx, dx)
                            * kernel.eval(sigma, x, grid.node(k), ascript)
                            * v;
                    }
                    acc += w_s * inner;
                }
                acc
            })
            .collect()),
    }
}

/// L1 norm of nodal samples by trapezoid quadrature.
pub fn l1_norm_values<T: Real>(values: &[T], dx: T) -> T {
    let abs: Vec<T> = values.iter().map(|v| v.abs()).collect();
    trapezoid(&abs, dx)
}

/// L1 norm of the central-difference derivative.
pub fn slope_l1_norm_values<T: Real>(values: &[T], dx: T) -> T {
    l1_norm_values(&central_derivative(values, dx), dx)
}

/// Norm of a single field. `HistoryL1` is a shape mismatch here.
pub fn field_norm<T: Real>(field: &DensityField<T>, kind: NormKind) -> Result<T> {
    let dx = field.grid().dx();
    match kind {
        NormKind::L1 => Ok(l1_norm_values(field.values(), dx)),
        NormKind::W11 => Ok(l1_norm_values(field.values(), dx)
            + slope_l1_norm_values(field.values(), dx)),
        NormKind::Sup => Ok(field.max_abs()),
        NormKind::HistoryL1 => Err(Error::Domain(
            "history norm of a single field: shape mismatch".into(),
        )),
    }
}

/// Double L1 norm of a history window over `[-tau, 0] x [0, x_max]`.
pub fn history_l1_norm<T: Real>(slices: &[DensityField<T>], delay: DelayGrid<T>) -> T {
    let per_slice: Vec<T> = slices
        .iter()
        .map(|s| l1_norm_values(s.values(), s.grid().dx()))
        .collect();
    trapezoid(&per_slice, delay.dsigma())
}

/// Same double L1 norm on raw rows (one row per lag node).
pub fn history_l1_norm_rows<T: Real>(rows: &[Vec<T>], dsigma: T, dx: T) -> T {
    let per_row: Vec<T> = rows.iter().map(|r| l1_norm_values(r, dx)).collect();
    trapezoid(&per_row, dsigma)
}

/// Product-space norm: history L1 plus field L1.
pub fn product_l1_norm<T: Real>(
    slices: &[DensityField<T>],
    delay: DelayGrid<T>,
    field: &DensityField<T>,
) -> T {
    history_l1_norm(slices, delay) + l1_norm_values(field.values(), field.grid().dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::HistoryBuffer;
    use crate::grid::SizeGrid;
    use crate::kernels::{stock_separable, RecruitmentConstants};
    use approx::assert_relative_eq;

    fn grid() -> SizeGrid<f64> {
        SizeGrid::new(40.0, 800).unwrap()
    }

    #[test]
    fn environment_of_zero_is_zero() {
        let n = DensityField::zero(grid());
        let rho = EnvironmentKernel::Gaussian {
            amp: 1.0,
            width: 2.0,
        };
        assert!(environment(&n, &rho).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_kernel_integrates_the_density() {
        // rho = 1, n = e^{-y}: N(x) = 1 - e^{-40} for every x
        let n = DensityField::from_fn(grid(), |x| (-x).exp());
        let rho = EnvironmentKernel::Constant { amp: 1.0 };
        let env = environment(&n, &rho);
        let expected = 1.0 - (-40.0_f64).exp();
        for v in env {
            assert_relative_eq!(v, expected, max_relative = 1e-3);
        }
    }

    #[test]
    fn step_kernel_matches_tail_integral() {
        // rho = 1_{y >= x}, n = e^{-y}: N(x) = e^{-x} - e^{-40}
        let n = DensityField::from_fn(grid(), |x| (-x).exp());
        let rho = EnvironmentKernel::HierarchyStep { amp: 1.0 };
        let env = environment(&n, &rho);
        let g = grid();
        for (i, v) in env.iter().enumerate().step_by(37) {
            let x = g.node(i);
            let expected = (-x).exp() - (-40.0_f64).exp();
            assert_relative_eq!(*v, expected, epsilon = 2e-3);
        }
    }

    #[test]
    fn step_fast_path_matches_generic_quadrature() {
        let n = DensityField::from_fn(grid(), |x| (1.0 + x).recip());
        let fast = environment(&n, &EnvironmentKernel::HierarchyStep { amp: 0.7 });
        let generic = environment(
            &n,
            &EnvironmentKernel::custom(|x, y| if y >= x { 0.7 } else { 0.0 }),
        );
        for (a, b) in fast.iter().zip(&generic) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn environment_is_linear_in_the_density() {
        let g = grid();
        let rho = EnvironmentKernel::Gaussian {
            amp: 0.4,
            width: 3.0,
        };
        let n1 = DensityField::from_fn(g, |x| (-0.5 * x).exp());
        let n2 = DensityField::from_fn(g, |x| x * (-x).exp());
        let combo = DensityField::from_fn(g, |x| 2.0 * (-0.5 * x).exp() + 3.0 * x * (-x).exp());
        let e1 = environment(&n1, &rho);
        let e2 = environment(&n2, &rho);
        let ec = environment(&combo, &rho);
        for i in (0..g.len()).step_by(53) {
            assert_relative_eq!(ec[i], 2.0 * e1[i] + 3.0 * e2[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn recruitment_of_zero_history_is_zero() {
        let delay = DelayGrid::new(1.0, 8).unwrap();
        let h = HistoryBuffer::zero(delay, grid());
        let (parts, constants) = stock_separable(0.5, 0.6, 2.0, 0.25);
        let kernel = RecruitmentKernel::Separable { parts, constants };
        let rho = EnvironmentKernel::Constant { amp: 0.0 };
        let r = recruitment(h.slices(), delay, &kernel, &rho).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn separable_exponential_case_has_closed_form() {
        // beta = e^{-x}, history = e^{-y} at every lag, tau = 1:
        // profile = tau * e^{-x} * (1 - e^{-x_max})
        let delay = DelayGrid::new(1.0, 16).unwrap();
        let h = HistoryBuffer::from_fn(delay, grid(), |_s, x| (-x).exp());
        let kernel = RecruitmentKernel::general(
            |_s, x: f64, _y| (-x).exp(),
            RecruitmentConstants {
                l1_bound: 1.0,
                w11_bound: 2.0,
                sup_bound: 1.0,
                lipschitz_l1: 1.0,
                lipschitz_w11: 2.0,
            },
        );
        let rho = EnvironmentKernel::Constant { amp: 0.0 };
        let r = recruitment(h.slices(), delay, &kernel, &rho).unwrap();
        let g = grid();
        let tail = 1.0 - (-40.0_f64).exp();
        for i in (0..g.len()).step_by(97) {
            assert_relative_eq!(r[i], (-g.node(i)).exp() * tail, max_relative = 1e-3);
        }
    }

    #[test]
    fn separable_fast_path_matches_generic_quadrature() {
        let g = SizeGrid::new(10.0, 60).unwrap();
        let delay = DelayGrid::new(1.0, 6).unwrap();
        let h = HistoryBuffer::from_fn(delay, g, |s: f64, x: f64| (1.0 + s) * x * (-x).exp() + 0.1);
        let (parts, constants) = stock_separable(0.5, 0.6, 2.0, 0.25);
        let fast = RecruitmentKernel::Separable {
            parts: parts.clone(),
            constants,
        };
        let generic =
            RecruitmentKernel::general(move |s, x, y| parts.eval(s, x, y), constants);
        let rho = EnvironmentKernel::Constant { amp: 0.0 };
        let a = recruitment(h.slices(), delay, &fast, &rho).unwrap();
        let b = recruitment(h.slices(), delay, &generic, &rho).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_relative_eq!(u, v, max_relative = 1e-12);
        }
    }

    #[test]
    fn env_dependent_fast_path_matches_generic_quadrature() {
        let g = SizeGrid::new(10.0, 60).unwrap();
        let delay = DelayGrid::new(1.0, 6).unwrap();
        let h = HistoryBuffer::from_fn(delay, g, |s: f64, x: f64| (1.0 + 0.3 * s) * (-0.7 * x).exp());
        let (parts, constants) = stock_separable(0.5, 0.6, 2.0, 0.25);
        let fast = RecruitmentKernel::SeparableEnv {
            parts: parts.clone(),
            suppression: 1.5,
            constants,
        };
        let generic = RecruitmentKernel::general_env(
            move |s, x, y, script_n| parts.eval(s, x, y) / (1.0 + 1.5 * script_n),
            constants,
        );
        let rho = EnvironmentKernel::HierarchyStep { amp: 0.5 };
        let a = recruitment(h.slices(), delay, &fast, &rho).unwrap();
        let b = recruitment(h.slices(), delay, &generic, &rho).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_relative_eq!(u, v, max_relative = 1e-12);
        }
    }

    #[test]
    fn incomplete_history_is_a_hard_error() {
        let delay = DelayGrid::new(1.0, 8).unwrap();
        let slices = vec![DensityField::zero(grid()); 4];
        let kernel = RecruitmentKernel::Zero;
        let rho = EnvironmentKernel::Constant { amp: 0.0 };
        assert!(matches!(
            recruitment(&slices, delay, &kernel, &rho),
            Err(Error::IncompleteHistory { expected: 9, got: 4 })
        ));
    }

    #[test]
    fn accumulated_environment_vanishes_at_lag_zero() {
        let delay = DelayGrid::new(1.0, 8).unwrap();
        let h = HistoryBuffer::from_fn(delay, grid(), |_s, x| (-x).exp());
        let rho = EnvironmentKernel::Constant { amp: 1.0 };
        let at_zero = accumulated_environment(h.slices(), delay, &rho, 0.0).unwrap();
        assert!(at_zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn accumulated_environment_of_constant_history_is_linear_in_lag() {
        let delay = DelayGrid::new(2.0, 10).unwrap();
        let h = HistoryBuffer::from_fn(delay, grid(), |_s, x| (-x).exp());
        let rho = EnvironmentKernel::Constant { amp: 1.0 };
        let profile = environment(h.current(), &rho);
        for j in [0, 3, 7] {
            let sigma = delay.node(j);
            let acc = accumulated_environment(h.slices(), delay, &rho, sigma).unwrap();
            for i in (0..acc.len()).step_by(151) {
                assert_relative_eq!(acc[i], -sigma * profile[i], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn accumulated_environment_matches_hand_trapezoid_on_two_slices() {
        let g = SizeGrid::new(1.0, 2).unwrap();
        let delay = DelayGrid::new(1.0, 1).unwrap();
        let older = DensityField::new(g, vec![2.0, 2.0, 2.0]).unwrap();
        let newer = DensityField::new(g, vec![4.0, 4.0, 4.0]).unwrap();
        let rho = EnvironmentKernel::Constant { amp: 1.0 };
        // N(older) = 2, N(newer) = 4; trapezoid over [-1, 0]: (2 + 4)/2 = 3
        let acc =
            accumulated_environment(&[older, newer], delay, &rho, -1.0).unwrap();
        for v in acc {
            assert_relative_eq!(v, 3.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn accumulated_environment_rejects_out_of_range_lag() {
        let delay = DelayGrid::new(1.0, 4).unwrap();
        let h = HistoryBuffer::zero(delay, grid());
        let rho = EnvironmentKernel::Constant { amp: 1.0 };
        assert!(accumulated_environment(h.slices(), delay, &rho, -1.5).is_err());
        assert!(accumulated_environment(h.slices(), delay, &rho, 0.5).is_err());
    }

    #[test]
    fn norms_of_zero_are_zero_for_every_kind() {
        let f = DensityField::zero(grid());
        for kind in [NormKind::L1, NormKind::W11, NormKind::Sup] {
            assert_eq!(field_norm(&f, kind).unwrap(), 0.0);
        }
        let delay = DelayGrid::new(1.0, 4).unwrap();
        let h = HistoryBuffer::zero(delay, grid());
        assert_eq!(history_l1_norm(h.slices(), delay), 0.0);
    }

    #[test]
    fn exponential_norms_match_closed_forms() {
        // u = e^{-x} on [0, 40]: l1 = 1, w11 = 2 up to trapezoid error
        let f = DensityField::from_fn(grid(), |x| (-x).exp());
        assert_relative_eq!(field_norm(&f, NormKind::L1).unwrap(), 1.0, max_relative = 1e-3);
        assert_relative_eq!(
            field_norm(&f, NormKind::W11).unwrap(),
            2.0,
            max_relative = 2e-3
        );
        assert_relative_eq!(field_norm(&f, NormKind::Sup).unwrap(), 1.0);
    }

    #[test]
    fn product_norm_is_additive() {
        let delay = DelayGrid::new(1.0, 4).unwrap();
        let h = HistoryBuffer::from_fn(delay, grid(), |s, x| (s - x).exp());
        let f = DensityField::from_fn(grid(), |x| x * (-x).exp());
        let total = product_l1_norm(h.slices(), delay, &f);
        assert_relative_eq!(
            total,
            history_l1_norm(h.slices(), delay) + field_norm(&f, NormKind::L1).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn history_norm_of_field_is_shape_mismatch() {
        let f = DensityField::zero(grid());
        assert!(field_norm(&f, NormKind::HistoryL1).is_err());
    }

    #[test]
    fn l1_norm_is_bounded_by_w11_norm() {
        let f = DensityField::from_fn(grid(), |x| (x - 3.0) * (-0.3 * x).exp());
        let l1 = field_norm(&f, NormKind::L1).unwrap();
        let w11 = field_norm(&f, NormKind::W11).unwrap();
        assert!(l1 <= w11);
    }
}
