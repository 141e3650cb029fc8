//! Synthetic measurement noise for fit validation.
//!
//! Every sample is perturbed as `y' = y*(1 + eps) + eta` with independent
//! Gaussian draws `eps ~ N(0, relative_sigma^2)` and `eta ~ N(0,
//! floor_sigma^2)`, and the per-point uncertainty is recorded as
//! `sigma = sqrt((y*relative_sigma)^2 + floor_sigma^2)` — exactly the
//! standard deviation of the perturbation, so downstream inverse-variance
//! weighting is statistically calibrated. Output is deterministic per seed
//! and identical across platforms.

use crate::config::NoiseSpec;
use crate::curve::{Curve, Pe3Surface};
use crate::rng::Rng;

/// Noise draws come from a reserved substream so that a simulation sharing
/// the same user seed (the Monte Carlo engine uses substreams 0..n_traj)
/// can never hand correlated randomness to its own noise stage.
fn noise_stream(seed: u64) -> Rng {
    Rng::substream(seed, u64::MAX)
}

fn perturb(values: &[f64], spec: &NoiseSpec, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let mut noisy = Vec::with_capacity(values.len());
    let mut sigma = Vec::with_capacity(values.len());
    for &y in values {
        // both draws are consumed unconditionally so that the stream
        // position does not depend on which sigmas are zero
        let eps = rng.normal() * spec.relative_sigma;
        let eta = rng.normal() * spec.floor_sigma;
        noisy.push(y * (1.0 + eps) + eta);
        sigma.push(((y * spec.relative_sigma).powi(2) + spec.floor_sigma.powi(2)).sqrt());
    }
    (noisy, sigma)
}

/// Applies the noise model to a curve, filling in the `sigma` column.
///
/// A noiseless spec returns the curve untouched (existing `sigma`
/// preserved); otherwise any prior `sigma` is replaced by the noise model's
/// own uncertainty. With `floor_sigma = 0`, points whose `y` is exactly
/// zero receive `sigma = 0`; purely multiplicative noise genuinely assigns
/// them zero variance.
pub fn add_noise(curve: &Curve, spec: &NoiseSpec, seed: u64) -> Curve {
    if spec.is_noiseless() {
        return curve.clone();
    }
    let mut rng = noise_stream(seed);
    let (y, sigma) = perturb(&curve.y, spec, &mut rng);
    Curve {
        x: curve.x.clone(),
        y,
        sigma: Some(sigma),
        axis_kind: curve.axis_kind,
    }
}

/// [`add_noise`] for a stimulated-echo surface.
pub fn add_noise_surface(surface: &Pe3Surface, spec: &NoiseSpec, seed: u64) -> Pe3Surface {
    if spec.is_noiseless() {
        return surface.clone();
    }
    let mut rng = noise_stream(seed);
    let (intensity, sigma) = perturb(&surface.intensity, spec, &mut rng);
    Pe3Surface {
        t12: surface.t12,
        t23_grid: surface.t23_grid.clone(),
        intensity,
        sigma: Some(sigma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::AxisKind;

    fn flat_curve(n: usize, y: f64) -> Curve {
        Curve::new(
            (0..n).map(|i| i as f64).collect(),
            vec![y; n],
            None,
            AxisKind::TimeDelay,
        )
        .unwrap()
    }

    #[test]
    fn zero_spec_returns_identical_curve() {
        let c = flat_curve(10, 0.5);
        let out = add_noise(&c, &NoiseSpec::default(), 42);
        assert_eq!(out, c);
        assert!(out.sigma.is_none());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let c = flat_curve(100, 0.5);
        let spec = NoiseSpec {
            relative_sigma: 0.05,
            floor_sigma: 1e-3,
        };
        let a = add_noise(&c, &spec, 42);
        let b = add_noise(&c, &spec, 42);
        for (ya, yb) in a.y.iter().zip(&b.y) {
            assert_eq!(ya.to_bits(), yb.to_bits());
        }
        let other = add_noise(&c, &spec, 43);
        assert!(a.y.iter().zip(&other.y).any(|(p, q)| p != q));
    }

    #[test]
    fn relative_noise_has_declared_spread() {
        let c = flat_curve(10_000, 1.0);
        let spec = NoiseSpec {
            relative_sigma: 0.05,
            floor_sigma: 0.0,
        };
        let out = add_noise(&c, &spec, 7);
        let rel: Vec<f64> = out
            .y
            .iter()
            .zip(&c.y)
            .map(|(yp, y)| (yp - y) / y)
            .collect();
        let mean = rel.iter().sum::<f64>() / rel.len() as f64;
        let var = rel.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rel.len() - 1) as f64;
        let std = var.sqrt();
        assert!(
            (std - 0.05).abs() < 0.05 * 0.05,
            "sample std {std} not within 5% of 0.05"
        );
    }

    #[test]
    fn sigma_column_follows_the_model() {
        let c = Curve::new(
            vec![0.0, 1.0, 2.0],
            vec![2.0, 0.5, 0.0],
            None,
            AxisKind::TimeDelay,
        )
        .unwrap();
        let spec = NoiseSpec {
            relative_sigma: 0.1,
            floor_sigma: 0.02,
        };
        let out = add_noise(&c, &spec, 1);
        let sigma = out.sigma.unwrap();
        for (s, y) in sigma.iter().zip(&c.y) {
            let expect = ((y * 0.1).powi(2) + 0.02f64.powi(2)).sqrt();
            approx::assert_relative_eq!(*s, expect, max_relative = 1e-15);
        }
    }

    #[test]
    fn floor_only_noise_is_additive() {
        let c = flat_curve(10_000, 0.0);
        let spec = NoiseSpec {
            relative_sigma: 0.0,
            floor_sigma: 0.5,
        };
        let out = add_noise(&c, &spec, 3);
        let mean = out.y.iter().sum::<f64>() / out.y.len() as f64;
        let var = out.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>()
            / (out.y.len() - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 0.5).abs() < 0.02, "std {}", var.sqrt());
        assert!(out.sigma.unwrap().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn surface_noise_is_deterministic_and_scaled() {
        let s = Pe3Surface::new(
            50e-9,
            vec![1e-6, 1e-5, 1e-4],
            vec![0.8, 0.6, 0.4],
            None,
        )
        .unwrap();
        let spec = NoiseSpec {
            relative_sigma: 0.05,
            floor_sigma: 0.0,
        };
        let a = add_noise_surface(&s, &spec, 11);
        let b = add_noise_surface(&s, &spec, 11);
        assert_eq!(a, b);
        let sig = a.sigma.unwrap();
        for (s_i, y) in sig.iter().zip(&s.intensity) {
            approx::assert_relative_eq!(*s_i, 0.05 * y, max_relative = 1e-15);
        }
        let clean = add_noise_surface(&s, &NoiseSpec::default(), 11);
        assert_eq!(clean, s);
    }
}
