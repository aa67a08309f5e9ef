//! Dense BFGS quasi-Newton minimizer with backtracking line search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct OptimOptions {
    /// Infinity-norm gradient tolerance.
    pub grad_tol: f64,
    /// Relative objective-change tolerance.
    pub f_rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            grad_tol: 1e-6,
            f_rel_tol: 1e-9,
            max_iterations: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub gradient: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;

/// Minimizes `f` from `x0`. The callback returns the objective and its
/// gradient; line-search trial points that fail to evaluate are treated as
/// infeasible and the step is shrunk.
pub fn minimize<F>(f: F, x0: DVector<f64>, options: &OptimOptions) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    minimize_seeded(f, x0, None, options)
}

/// [`minimize`] with an optional curvature seed: a positive-definite guess
/// of the inverse Hessian at `x0` (e.g. an inverse information matrix),
/// which BFGS then refines.
pub fn minimize_seeded<F>(
    f: F,
    x0: DVector<f64>,
    seed_inverse_hessian: Option<DMatrix<f64>>,
    options: &OptimOptions,
) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    minimize_refreshed(f, |_, _, _| None, x0, seed_inverse_hessian, options)
}

/// BFGS whose inverse metric can be re-seeded after accepted steps.
///
/// `refresh` is called with the just-accepted point, the relative objective
/// change of the step, and the accepted step length; returning a
/// positive-definite inverse-curvature estimate (e.g. the inverse of a
/// score outer product available from the latest evaluation) replaces the
/// running BFGS matrix, otherwise the ordinary secant update is kept.
pub fn minimize_refreshed<F, M>(
    mut f: F,
    mut refresh: M,
    x0: DVector<f64>,
    seed_inverse_hessian: Option<DMatrix<f64>>,
    options: &OptimOptions,
) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
    M: FnMut(&DVector<f64>, f64, f64) -> Option<DMatrix<f64>>,
{
    let n = x0.len();
    let (mut fx, mut grad) = f(&x0)?;
    if !fx.is_finite() {
        return Err(Error::Numerical(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut x = x0;
    let mut first_update = seed_inverse_hessian.is_none();
    let mut inv_hessian = match seed_inverse_hessian {
        Some(h) if h.nrows() == n && h.ncols() == n => h,
        _ => DMatrix::<f64>::identity(n, n),
    };

    for iter in 1..=options.max_iterations {
        if grad.amax() < options.grad_tol {
            return Ok(OptimResult {
                x,
                f: fx,
                gradient: grad,
                converged: true,
                iterations: iter - 1,
            });
        }

        let mut direction = -(&inv_hessian * &grad);
        let mut slope = direction.dot(&grad);
        // The negated form also catches a NaN slope.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(slope < 0.0) {
            // Curvature information went bad; restart from steepest descent.
            inv_hessian = DMatrix::identity(n, n);
            first_update = true;
            direction = -grad.clone();
            slope = direction.dot(&grad);
        }

        // Backtracking Armijo search with quadratic interpolation.
        let mut step = 1.0;
        let mut accepted = None;
        while step >= MIN_STEP {
            let trial = &x + &direction * step;
            match f(&trial) {
                Ok((ft, gt)) if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope => {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                Ok((ft, _)) if ft.is_finite() => {
                    // Minimizer of the quadratic through f(0), f'(0), f(step),
                    // kept within a sane shrink range.
                    let denom = 2.0 * (ft - fx - slope * step);
                    let candidate = if denom > 0.0 { -slope * step * step / denom } else { 0.5 * step };
                    step = candidate.clamp(0.1 * step, 0.5 * step);
                }
                _ => step *= 0.5,
            }
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // No acceptable step along this direction; treat the current
            // point as the (possibly non-converged) answer.
            let converged = grad.amax() < options.grad_tol;
            return Ok(OptimResult {
                x,
                f: fx,
                gradient: grad,
                converged,
                iterations: iter,
            });
        };

        let s = &x_new - &x;
        let y = &g_new - &grad;
        let f_change = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        grad = g_new;

        if grad.amax() < options.grad_tol || f_change < options.f_rel_tol {
            return Ok(OptimResult {
                x,
                f: fx,
                gradient: grad,
                converged: true,
                iterations: iter,
            });
        }

        if let Some(fresh) = refresh(&x, f_change, step) {
            if fresh.nrows() == n && fresh.ncols() == n {
                inv_hessian = fresh;
                first_update = false;
                continue;
            }
        }
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                // Scale the initial inverse Hessian to the problem (Nocedal & Wright 6.20).
                let yy = y.dot(&y);
                if yy > 0.0 {
                    inv_hessian *= sy / yy;
                }
                first_update = false;
            }
            let rho = 1.0 / sy;
            let hy = &inv_hessian * &y;
            let yhy = y.dot(&hy);
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let term = rho * (&s * hy.transpose());
            inv_hessian = &inv_hessian - &term - term.transpose()
                + (rho * rho * yhy + rho) * (&s * s.transpose());
        }
    }

    Ok(OptimResult {
        converged: false,
        iterations: options.max_iterations,
        x,
        f: fx,
        gradient: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_quadratic_bowl() {
        let f = |x: &DVector<f64>| {
            let g = DVector::from_vec(vec![2.0 * (x[0] - 3.0), 8.0 * (x[1] + 1.0)]);
            Ok(((x[0] - 3.0).powi(2) + 4.0 * (x[1] + 1.0).powi(2), g))
        };
        let out = minimize(f, DVector::zeros(2), &OptimOptions::default()).unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.x[0], 3.0, epsilon = 1e-5);
        assert_relative_eq!(out.x[1], -1.0, epsilon = 1e-5);
    }

    #[test]
    fn solves_rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (1.0, 100.0);
            let v = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (a - x[0]) - 4.0 * b * (x[1] - x[0] * x[0]) * x[0],
                2.0 * b * (x[1] - x[0] * x[0]),
            ]);
            Ok((v, g))
        };
        let out = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), &OptimOptions::default()).unwrap();
        assert!(out.converged, "failed after {} iterations", out.iterations);
        assert_relative_eq!(out.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(out.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn reports_non_convergence() {
        // A valley with a slowly decreasing floor never meets the tolerances
        // within one iteration.
        let f = |x: &DVector<f64>| Ok(((1.0 + x[0] * x[0]).sqrt(), x.clone() / (1.0 + x[0] * x[0]).sqrt()));
        let options = OptimOptions {
            max_iterations: 1,
            grad_tol: 1e-12,
            f_rel_tol: 1e-16,
        };
        let out = minimize(f, DVector::from_vec(vec![100.0]), &options).unwrap();
        assert!(!out.converged);
    }
}
