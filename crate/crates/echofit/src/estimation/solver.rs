//! Damped least squares with numeric Jacobians and Jacobian-based
//! covariance.
//!
//! The implementation is a Levenberg–Marquardt-style schedule on a
//! column-scaled normal system: scaling by the Jacobian column norms keeps
//! the linear algebra well conditioned even though parameters span many
//! orders of magnitude (rates in s^-1 next to widths in Hz). Everything is
//! sequential floating point, so identical inputs give bit-identical
//! results.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct SolverOptions {
    pub max_iterations: usize,
    /// Relative parameter-step size below which the fit is converged.
    pub relative_tolerance: f64,
    pub initial_damping: f64,
    /// Multiply the covariance by the reduced chi-square; appropriate when
    /// residuals carry no per-point uncertainties.
    pub scale_covariance: bool,
}

#[derive(Debug)]
pub(crate) struct SolverOutcome {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Relative finite-difference step for parameter j. Falls back to the
/// parameter's initial magnitude so a coordinate passing through zero
/// keeps a sensible scale.
fn diff_step(value: f64, initial_scale: f64) -> f64 {
    let h = 1e-6 * value.abs().max(1e-2 * initial_scale);
    if h > 0.0 {
        h
    } else {
        1e-12
    }
}

/// Jacobian by finite differences, staying inside the bounds: central
/// where possible, one-sided next to a bound, zero for a pinned parameter.
fn jacobian(
    f: &mut dyn FnMut(&[f64], &mut [f64]) -> Result<()>,
    p: &[f64],
    r0: &[f64],
    bounds: &[(f64, f64)],
    scale0: &[f64],
) -> Result<DMatrix<f64>> {
    let (n, k) = (r0.len(), p.len());
    let mut jac = DMatrix::zeros(n, k);
    let mut r_plus = vec![0.0; n];
    let mut r_minus = vec![0.0; n];
    let mut work = p.to_vec();
    for j in 0..k {
        let h = diff_step(p[j], scale0[j]);
        let can_fwd = p[j] + h <= bounds[j].1;
        let can_bwd = p[j] - h >= bounds[j].0;
        let (lo, hi, denom): (&[f64], &[f64], f64) = if can_fwd && can_bwd {
            work[j] = p[j] + h;
            f(&work, &mut r_plus)?;
            work[j] = p[j] - h;
            f(&work, &mut r_minus)?;
            (&r_minus, &r_plus, 2.0 * h)
        } else if can_fwd {
            work[j] = p[j] + h;
            f(&work, &mut r_plus)?;
            (r0, &r_plus, h)
        } else if can_bwd {
            work[j] = p[j] - h;
            f(&work, &mut r_minus)?;
            (&r_minus, r0, h)
        } else {
            work[j] = p[j];
            continue; // parameter pinned between bounds tighter than 2h
        };
        for i in 0..n {
            jac[(i, j)] = (hi[i] - lo[i]) / denom;
        }
        work[j] = p[j];
    }
    Ok(jac)
}

/// Column norms used to scale the normal equations; zero columns get unit
/// scale so they stay inert instead of poisoning the factorization.
fn column_scales(jac: &DMatrix<f64>) -> Vec<f64> {
    (0..jac.ncols())
        .map(|j| {
            let norm = jac.column(j).norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect()
}

fn clamp_to(bounds: &[(f64, f64)], p: &mut [f64]) {
    for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Minimizes the sum of squared residuals produced by `f` over `initial`,
/// clamped to `bounds`. `f` must fill the full residual slice or return an
/// error; trial-point errors are treated as rejected steps, but the
/// initial point must evaluate cleanly.
pub(crate) fn least_squares(
    f: &mut dyn FnMut(&[f64], &mut [f64]) -> Result<()>,
    n_residuals: usize,
    initial: &[f64],
    bounds: &[(f64, f64)],
    options: &SolverOptions,
) -> Result<SolverOutcome> {
    let k = initial.len();
    assert_eq!(bounds.len(), k, "one bound pair per parameter");
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::config(format!(
                "bounds[{j}]: lower {lo} must be below upper {hi}"
            )));
        }
    }
    if n_residuals < k {
        return Err(Error::degenerate(format!(
            "{n_residuals} residuals cannot constrain {k} parameters"
        )));
    }

    let mut p = initial.to_vec();
    clamp_to(bounds, &mut p);
    let scale0: Vec<f64> = p.iter().map(|v| v.abs()).collect();

    let mut r = vec![0.0; n_residuals];
    f(&p, &mut r)?;
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    if !cost.is_finite() {
        return Err(Error::domain("initial residuals are not finite"));
    }

    let mut lambda = options.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut r_trial = vec![0.0; n_residuals];

    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let jac = jacobian(f, &p, &r, bounds, &scale0)?;
        let d = column_scales(&jac);
        // scaled normal system: a = J~' J~ with unit diagonal, g = J~' r
        let mut scaled = jac.clone();
        for j in 0..k {
            let inv = 1.0 / d[j];
            for i in 0..n_residuals {
                scaled[(i, j)] *= inv;
            }
        }
        let a = scaled.transpose() * &scaled;
        let g = scaled.transpose() * DVector::from_column_slice(&r);

        loop {
            let mut m = a.clone();
            for j in 0..k {
                m[(j, j)] += lambda;
            }
            let step = match m.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 4.0;
                    if lambda > 1e12 {
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut trial = p.clone();
            for j in 0..k {
                trial[j] += step[j] / d[j];
            }
            clamp_to(bounds, &mut trial);
            let trial_cost = match f(&trial, &mut r_trial) {
                Ok(()) => {
                    let c: f64 = r_trial.iter().map(|v| v * v).sum();
                    if c.is_finite() {
                        c
                    } else {
                        f64::INFINITY
                    }
                }
                Err(_) => f64::INFINITY,
            };
            if trial_cost <= cost {
                let step_rel = trial
                    .iter()
                    .zip(&p)
                    .zip(&scale0)
                    .map(|((t, c), s)| (t - c).abs() / c.abs().max(1e-2 * s).max(1e-300))
                    .fold(0.0f64, f64::max);
                p = trial;
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                if step_rel < options.relative_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                break 'outer;
            }
        }
        if converged {
            break;
        }
    }

    // covariance from the Jacobian at the final iterate
    let jac = jacobian(f, &p, &r, bounds, &scale0)?;
    let d = column_scales(&jac);
    let mut scaled = jac;
    for j in 0..k {
        let inv = 1.0 / d[j];
        for i in 0..n_residuals {
            scaled[(i, j)] *= inv;
        }
    }
    let a = scaled.transpose() * &scaled;
    let inv = a
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::degenerate(format!("covariance computation failed: {e}")))?;
    let mut covariance = inv;
    for i in 0..k {
        for j in 0..k {
            covariance[(i, j)] /= d[i] * d[j];
        }
    }
    if options.scale_covariance && n_residuals > k {
        covariance *= cost / (n_residuals - k) as f64;
    }

    Ok(SolverOutcome {
        params: p,
        covariance,
        residual_rms: (cost / n_residuals as f64).sqrt(),
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_options() -> SolverOptions {
        SolverOptions {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            initial_damping: 1e-3,
            scale_covariance: false,
        }
    }

    #[test]
    fn recovers_exponential_parameters() {
        // y = 2.5 exp(-t / 3e-7) sampled noiselessly
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 5e-8).collect();
        let y: Vec<f64> = t.iter().map(|&ti| 2.5 * (-ti / 3e-7).exp()).collect();
        let mut f = |p: &[f64], r: &mut [f64]| -> Result<()> {
            for i in 0..t.len() {
                r[i] = p[0] * (-t[i] / p[1]).exp() - y[i];
            }
            Ok(())
        };
        let out = least_squares(
            &mut f,
            t.len(),
            &[1.0, 1e-7],
            &[(1e-12, f64::INFINITY), (1e-12, f64::INFINITY)],
            &default_options(),
        )
        .unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.params[0], 2.5, max_relative = 1e-8);
        assert_relative_eq!(out.params[1], 3e-7, max_relative = 1e-8);
        assert!(out.residual_rms < 1e-8);
    }

    #[test]
    fn exact_initial_guess_converges_immediately() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|&ti| 4.0 * (-0.3 * ti).exp()).collect();
        let mut f = |p: &[f64], r: &mut [f64]| -> Result<()> {
            for i in 0..t.len() {
                r[i] = p[0] * (-p[1] * t[i]).exp() - y[i];
            }
            Ok(())
        };
        let out = least_squares(
            &mut f,
            t.len(),
            &[4.0, 0.3],
            &[(0.0, 10.0), (0.0, 10.0)],
            &default_options(),
        )
        .unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 3);
    }

    #[test]
    fn respects_bounds() {
        // best unconstrained slope is 2, but the upper bound is 1.5
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v).collect();
        let mut f = |p: &[f64], r: &mut [f64]| -> Result<()> {
            for i in 0..x.len() {
                r[i] = p[0] * x[i] - y[i];
            }
            Ok(())
        };
        let out = least_squares(&mut f, x.len(), &[1.0], &[(0.0, 1.5)], &default_options()).unwrap();
        assert_relative_eq!(out.params[0], 1.5, max_relative = 1e-9);
    }

    #[test]
    fn covariance_matches_linear_theory() {
        // weighted line fit: residuals (a + b x - y) / sigma with known sigma
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 1.0 + 0.5 * v).collect();
        let sigma = 0.2;
        let mut f = |p: &[f64], r: &mut [f64]| -> Result<()> {
            for i in 0..x.len() {
                r[i] = (p[0] + p[1] * x[i] - y[i]) / sigma;
            }
            Ok(())
        };
        let out = least_squares(
            &mut f,
            x.len(),
            &[0.5, 0.1],
            &[(f64::NEG_INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)],
            &default_options(),
        )
        .unwrap();
        // analytic covariance of a straight-line fit
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let det = n * sxx - sx * sx;
        let var_b = sigma * sigma * n / det;
        let var_a = sigma * sigma * sxx / det;
        assert_relative_eq!(out.covariance[(0, 0)], var_a, max_relative = 1e-6);
        assert_relative_eq!(out.covariance[(1, 1)], var_b, max_relative = 1e-6);
    }

    #[test]
    fn deterministic_across_runs() {
        let t: Vec<f64> = (0..25).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &ti)| 3.0 * (-0.7 * ti).exp() + if i % 2 == 0 { 0.01 } else { -0.01 })
            .collect();
        let run = || {
            let mut f = |p: &[f64], r: &mut [f64]| -> Result<()> {
                for i in 0..t.len() {
                    r[i] = p[0] * (-p[1] * t[i]).exp() - y[i];
                }
                Ok(())
            };
            least_squares(
                &mut f,
                t.len(),
                &[1.0, 1.0],
                &[(1e-12, 1e6), (1e-12, 1e6)],
                &default_options(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.params, b.params);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.covariance, b.covariance);
    }

    #[test]
    fn rejects_underdetermined_problems() {
        let mut f = |_: &[f64], r: &mut [f64]| -> Result<()> {
            r[0] = 0.0;
            Ok(())
        };
        let err = least_squares(
            &mut f,
            1,
            &[1.0, 1.0],
            &[(0.0, 1.0); 2],
            &default_options(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("cannot constrain"));
    }

    #[test]
    fn flags_non_convergence_at_iteration_cap() {
        // pathological zig-zag residual with a tight iteration budget
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|&v| (3.0 * v).sin() + 0.001 * v).collect();
        let mut f = |p: &[f64], r: &mut [f64]| -> Result<()> {
            for i in 0..x.len() {
                r[i] = (p[0] * x[i]).sin() + p[1] * x[i] - y[i];
            }
            Ok(())
        };
        let opts = SolverOptions {
            max_iterations: 2,
            ..default_options()
        };
        let out = least_squares(
            &mut f,
            x.len(),
            &[1.0, 1.0],
            &[(0.1, 10.0), (-10.0, 10.0)],
            &opts,
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
