//! Forward simulation of the three experiments: hole-burning spectra,
//! two-pulse echo decays, stimulated-echo surfaces — plus a Monte Carlo
//! sudden-jump engine that provides an independent check on the analytic
//! spectral-diffusion model.

use crate::curve::{AxisKind, Curve, HoleComponents, HoleSpectrum, Pe3Surface};
use crate::error::{Error, Result};
use crate::lineshape::{voigt_fwhm, voigt_peak_normalized};
use crate::physics::{
    activation_linewidth, linewidth_to_t2, shb_linewidth_from_sd_model,
    spectral_diffusion_linewidth, DephasingParams, Environment,
};
use crate::rng::Rng;

/// sqrt(2 ln 2): half-width of a unit-sigma Gaussian.
const SQRT_2_LN_2: f64 = 1.177_410_022_515_474_7;

fn check_time_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config(format!("{name}: empty grid")));
    }
    if !(grid[0].is_finite() && grid[0] >= 0.0) {
        return Err(Error::config(format!(
            "{name}[0]: must be >= 0 s, got {}",
            grid[0]
        )));
    }
    for i in 1..grid.len() {
        if !grid[i].is_finite() || grid[i] <= grid[i - 1] {
            return Err(Error::config(format!(
                "{name}[{i}]: grid must be finite and strictly increasing"
            )));
        }
    }
    Ok(())
}

/// Homogeneous linewidth a hole-burning measurement integrates over.
///
/// Holes live long enough for spectral diffusion to saturate, so when the
/// diffusion parameterization is active (gamma1 > 0) the effective width is
/// Gamma_0 + Gamma_1. With gamma1 = 0, only the field/temperature model
/// remains and the activation linewidth applies.
pub fn shb_effective_linewidth(params: &DephasingParams, env: &Environment) -> Result<f64> {
    if params.gamma1 > 0.0 {
        Ok(shb_linewidth_from_sd_model(params))
    } else {
        activation_linewidth(params, env)
    }
}

/// Gaussian standard deviation of the laser-jitter contribution to a hole:
/// burn and read each jitter, so the hole carries FWHM sqrt(2)*laser_fwhm.
/// Estimation inverts the same convention when deconvolving hole widths.
pub(crate) fn hole_jitter_sigma(laser_fwhm: f64) -> f64 {
    std::f64::consts::SQRT_2 * laser_fwhm / (2.0 * SQRT_2_LN_2)
}

/// Simulates a hole-burning transmission spectrum on a symmetric detuning
/// grid.
///
/// The central hole is a Lorentzian of FWHM 2*Gamma_h convolved with the
/// laser-jitter Gaussian; side holes are scaled copies at +-shf_slope*B.
/// At B = 0 the side holes coincide with the central one and are merged
/// into it (single-component spectrum).
pub fn simulate_shb_spectrum(
    params: &DephasingParams,
    env: &Environment,
    grid: &[f64],
) -> Result<HoleSpectrum> {
    params.validate()?;
    env.validate()?;
    if grid.len() < 2 {
        return Err(Error::config("detuning grid needs at least 2 points"));
    }
    for i in 0..grid.len() {
        if !grid[i].is_finite() {
            return Err(Error::config(format!("grid[{i}]: not finite")));
        }
        if i > 0 && grid[i] <= grid[i - 1] {
            return Err(Error::config(format!(
                "grid[{i}]: must be strictly increasing"
            )));
        }
    }
    let span = grid[grid.len() - 1].abs().max(grid[0].abs());
    for i in 0..grid.len() {
        let mirror = grid[grid.len() - 1 - i];
        if (grid[i] + mirror).abs() > 1e-9 * span {
            return Err(Error::config(format!(
                "grid[{i}]: asymmetric grid ({} does not mirror {})",
                grid[i], mirror
            )));
        }
    }

    let gamma_h = shb_effective_linewidth(params, env)?;
    if gamma_h <= 0.0 {
        return Err(Error::degenerate(
            "effective homogeneous linewidth is zero; nothing to burn",
        ));
    }
    let sigma = hole_jitter_sigma(params.laser_fwhm);
    let offset = params.shf_slope * env.field_b;
    let merged = offset == 0.0;
    let depth = if merged { 0.0 } else { params.side_hole_depth };

    let mut y = Vec::with_capacity(grid.len());
    for &d in grid {
        let mut v = voigt_peak_normalized(d, sigma, gamma_h)?;
        if depth > 0.0 {
            v += depth * voigt_peak_normalized(d - offset, sigma, gamma_h)?;
            v += depth * voigt_peak_normalized(d + offset, sigma, gamma_h)?;
        }
        y.push(v);
    }
    let components = HoleComponents {
        central_fwhm: voigt_fwhm(sigma, gamma_h)?,
        side_offset: if merged { 0.0 } else { offset },
        side_depth: depth,
    };
    HoleSpectrum::new(grid.to_vec(), y, Some(components))
}

/// Echo-envelope modulation factor M(t12) in (0, 1]: a single sideband at
/// f_m = mod_slope*B, damped by site-to-site frequency spread.
fn modulation_factor(params: &DephasingParams, field_b: f64, t: f64) -> f64 {
    if params.mod_depth == 0.0 || field_b == 0.0 {
        return 1.0;
    }
    let f_m = params.mod_slope * field_b;
    let s = (std::f64::consts::PI * f_m * t).sin();
    let damp = (-2.0 * std::f64::consts::PI.powi(2) * params.mod_damp_sigma.powi(2) * t * t).exp();
    1.0 - params.mod_depth * s * s * damp
}

/// Simulates a two-pulse-echo decay: I(t12) = exp(-4 t12 / T2) * M(t12)
/// with T2 from the activation linewidth at the given field and
/// temperature, normalized to I(0) = 1.
pub fn simulate_2pe_decay(
    params: &DephasingParams,
    env: &Environment,
    t12_grid: &[f64],
) -> Result<Curve> {
    params.validate()?;
    env.validate()?;
    check_time_grid("t12_grid", t12_grid)?;
    let gamma_h = activation_linewidth(params, env)?;
    let t2 = linewidth_to_t2(gamma_h)?;
    let y = t12_grid
        .iter()
        .map(|&t| (-4.0 * t / t2).exp() * modulation_factor(params, env.field_b, t))
        .collect();
    Curve::new(t12_grid.to_vec(), y, None, AxisKind::TimeDelay)
}

/// Stimulated-echo intensity at fixed pulse delay `t12` over a grid of
/// waiting times:
///
/// I(t23) = exp(-2 t23 / T1) * exp(-4 pi t12 Gamma_h(t23))
///
/// with the time-dependent linewidth from the spectral-diffusion model, so
/// I(t23=0) = exp(-4 pi t12 Gamma_0).
pub fn simulate_3pe_surface(
    params: &DephasingParams,
    t12: f64,
    t23_grid: &[f64],
) -> Result<Pe3Surface> {
    params.validate()?;
    if !(t12.is_finite() && t12 > 0.0) {
        return Err(Error::config(format!("t12: must be > 0 s, got {t12}")));
    }
    check_time_grid("t23_grid", t23_grid)?;
    let mut intensity = Vec::with_capacity(t23_grid.len());
    for &t23 in t23_grid {
        let gamma = spectral_diffusion_linewidth(params, t23)?;
        let decay = (-2.0 * t23 / params.t1).exp();
        let dephase = (-4.0 * std::f64::consts::PI * t12 * gamma).exp();
        intensity.push(decay * dephase);
    }
    Pe3Surface::new(t12, t23_grid.to_vec(), intensity, None)
}

/// Hole FWHM versus relative excitation power, following the saturation
/// law FWHM(P) = FWHM(0) * sqrt(1 + P / P_sat). FWHM(0) is the same Voigt
/// width [`simulate_shb_spectrum`] reports.
pub fn simulate_power_broadening_series(
    params: &DephasingParams,
    env: &Environment,
    powers: &[f64],
    p_sat: f64,
) -> Result<Curve> {
    params.validate()?;
    env.validate()?;
    if !(p_sat.is_finite() && p_sat > 0.0) {
        return Err(Error::config(format!(
            "p_sat: must be > 0, got {p_sat}"
        )));
    }
    check_time_grid("powers", powers)?;
    let gamma_h = shb_effective_linewidth(params, env)?;
    let fwhm0 = voigt_fwhm(hole_jitter_sigma(params.laser_fwhm), gamma_h)?;
    let y = powers
        .iter()
        .map(|&p| fwhm0 * (1.0 + p / p_sat).sqrt())
        .collect();
    Curve::new(powers.to_vec(), y, None, AxisKind::Power)
}

/// One emitter's piecewise-constant detuning history: jump times and the
/// detuning in force after each jump (`dets[0]` before any jump).
struct JumpPath {
    times: Vec<f64>,
    dets: Vec<f64>,
}

impl JumpPath {
    /// Samples jumps at Poisson rate `rate` over [0, total]; detunings are
    /// Lorentzian-distributed with FWHM `fwhm` (half-width fwhm/2).
    fn sample(rng: &mut Rng, rate: f64, fwhm: f64, total: f64) -> JumpPath {
        let hwhm = 0.5 * fwhm;
        let mut times = Vec::new();
        let mut dets = vec![rng.cauchy(hwhm)];
        if rate > 0.0 {
            let mut t = 0.0;
            loop {
                t -= rng.uniform_open().ln() / rate;
                if t >= total {
                    break;
                }
                times.push(t);
                dets.push(rng.cauchy(hwhm));
            }
        }
        JumpPath { times, dets }
    }

    /// Integral of the detuning over [a, b] (Hz * s).
    fn integrate(&self, a: f64, b: f64) -> f64 {
        // segment k spans [times[k-1], times[k]) with detuning dets[k]
        let first = self.times.partition_point(|&t| t <= a);
        let mut acc = 0.0;
        let mut lo = a;
        let mut k = first;
        while k < self.times.len() && self.times[k] < b {
            acc += self.dets[k] * (self.times[k] - lo);
            lo = self.times[k];
            k += 1;
        }
        acc + self.dets[k] * (b - lo)
    }
}

/// Monte Carlo sudden-jump model of the stimulated echo: an independent
/// check on the closed-form spectral-diffusion law.
///
/// Each trajectory draws a detuning history whose value jumps at Poisson
/// rate R to fresh Lorentzian (FWHM Gamma_1) values. The echo amplitude is
/// exp(i * 2 pi * [integral of detuning over (0, t12) minus integral over
/// (t12 + t23, 2 t12 + t23)]); intensity is the squared modulus of the
/// trajectory average times exp(-2 t23 / T1) * exp(-4 pi t12 Gamma_0).
///
/// Deterministic for a fixed seed; trajectory i uses an independent
/// substream derived from (seed, i), so results do not depend on
/// evaluation order. One history serves every t23 on the grid, which makes
/// the sampled surface smooth in t23 and stable under grid refinement.
pub fn mc_sudden_jump_echo(
    params: &DephasingParams,
    env: &Environment,
    t12: f64,
    t23_grid: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<Pe3Surface> {
    params.validate()?;
    env.validate()?;
    if n_traj == 0 {
        return Err(Error::config("n_traj: must be >= 1"));
    }
    if !(t12.is_finite() && t12 > 0.0) {
        return Err(Error::config(format!("t12: must be > 0 s, got {t12}")));
    }
    check_time_grid("t23_grid", t23_grid)?;

    let t23_max = t23_grid[t23_grid.len() - 1];
    let total = 2.0 * t12 + t23_max;
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut re = vec![0.0f64; t23_grid.len()];
    let mut im = vec![0.0f64; t23_grid.len()];
    for i in 0..n_traj {
        let mut rng = Rng::substream(seed, i as u64);
        let path = JumpPath::sample(&mut rng, params.rate_r, params.gamma1, total);
        let phase_a = path.integrate(0.0, t12);
        for (j, &t23) in t23_grid.iter().enumerate() {
            let phase_b = path.integrate(t12 + t23, 2.0 * t12 + t23);
            let dphi = two_pi * (phase_a - phase_b);
            re[j] += dphi.cos();
            im[j] += dphi.sin();
        }
    }

    let n = n_traj as f64;
    let mut intensity = Vec::with_capacity(t23_grid.len());
    for (j, &t23) in t23_grid.iter().enumerate() {
        let coherence = (re[j] / n).powi(2) + (im[j] / n).powi(2);
        let decay = (-2.0 * t23 / params.t1).exp();
        let dephase = (-4.0 * std::f64::consts::PI * t12 * params.gamma0).exp();
        intensity.push(coherence * decay * dephase);
    }
    Pe3Surface::new(t12, t23_grid.to_vec(), intensity, None)
}
