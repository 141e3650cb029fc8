//! Closed-form dephasing and linewidth models for rare-earth ions in glass.
//!
//! Everything here is a pure function of [`DephasingParams`] and
//! [`Environment`]; no I/O, no state. All frequencies are Hz, times are
//! seconds, fields are tesla, temperatures are kelvin. Megahertz and
//! microseconds exist only at I/O boundaries.

use crate::error::{Error, Result};

/// Bohr magneton (J/T), CODATA 2018.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;

/// Boltzmann constant (J/K), exact since the 2019 SI redefinition.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Coldest accepted temperature (K). The activation law diverges at T = 0,
/// which is rejected outright instead of special-cased.
pub const MIN_TEMPERATURE: f64 = 1e-3;

/// All model parameters of the dephasing description in one validated record.
///
/// The power-law prefactor `a` and exponent `mu` describe coupling to
/// tunneling modes (TLS) in the glass: Gamma_TLS0(T) = a*T^(1+mu). The pair
/// (`gamma_tls1`, `g_eff`) describes the magnetic-field-quenchable part.
/// (`gamma0`, `gamma1`, `rate_r`, `t1`) parameterize spectral diffusion as
/// seen by stimulated echoes. The remaining fields describe superhyperfine
/// structure and instrument effects.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DephasingParams {
    /// Power-law prefactor (Hz K^-(1+mu)).
    pub a: f64,
    /// TLS density-of-states exponent; the linewidth scales as T^(1+mu).
    pub mu: f64,
    /// Field-quenchable linewidth Gamma_TLS1 (Hz).
    pub gamma_tls1: f64,
    /// Effective g-factor of the spin system (dimensionless).
    pub g_eff: f64,
    /// Intrinsic homogeneous linewidth Gamma_0 (Hz).
    pub gamma0: f64,
    /// Maximum spectral-diffusion broadening Gamma_1 (Hz).
    pub gamma1: f64,
    /// Spectral-diffusion rate R (s^-1).
    pub rate_r: f64,
    /// Excited-state lifetime T_1 (s).
    pub t1: f64,
    /// Superhyperfine side-hole splitting coefficient (Hz/T).
    pub shf_slope: f64,
    /// Echo-modulation frequency coefficient (Hz/T).
    pub mod_slope: f64,
    /// Echo-modulation depth, in [0, 1].
    pub mod_depth: f64,
    /// Site-to-site spread of the sideband frequency (Hz); damps the
    /// modulation with a Gaussian envelope.
    pub mod_damp_sigma: f64,
    /// Side-hole depth relative to the central hole, in [0, 1].
    pub side_hole_depth: f64,
    /// Laser frequency-fluctuation width, FWHM (Hz).
    pub laser_fwhm: f64,
}

impl Default for DephasingParams {
    /// Defaults follow the fitted values for the erbium-doped silicate
    /// fiber at 500 mK: a T^1.4 power law, g_eff = 5, Gamma_0 = 0.4 MHz,
    /// Gamma_1 = 1.3 MHz, R = 0.026 us^-1, T_1 = 6.7 ms, side-hole slope
    /// 12.3 MHz/T, modulation slope 10.6 MHz/T.
    fn default() -> Self {
        DephasingParams {
            a: 1.1e6,
            mu: 0.4,
            gamma_tls1: 6.0e6,
            g_eff: 5.0,
            gamma0: 0.4e6,
            gamma1: 1.3e6,
            rate_r: 2.6e4,
            t1: 6.7e-3,
            shf_slope: 12.3e6,
            mod_slope: 10.6e6,
            mod_depth: 0.5,
            mod_damp_sigma: 5.0e6,
            side_hole_depth: 0.2,
            laser_fwhm: 0.5e6,
        }
    }
}

impl DephasingParams {
    /// Returns every invariant violation, prefixed with `prefix` (e.g.
    /// "params."), so config validation can report all of them at once.
    pub fn validation_errors(&self, prefix: &str) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |name: &str, ok: bool, msg: &str| {
            if !ok {
                errs.push(format!("{prefix}{name}: {msg}"));
            }
        };
        check("a", self.a.is_finite() && self.a > 0.0, "must be > 0");
        check("mu", self.mu.is_finite() && self.mu >= 0.0, "must be >= 0");
        check(
            "gamma_tls1",
            self.gamma_tls1.is_finite() && self.gamma_tls1 >= 0.0,
            "must be >= 0",
        );
        check(
            "g_eff",
            self.g_eff.is_finite() && self.g_eff >= 0.0,
            "must be >= 0",
        );
        check(
            "gamma0",
            self.gamma0.is_finite() && self.gamma0 >= 0.0,
            "must be >= 0",
        );
        check(
            "gamma1",
            self.gamma1.is_finite() && self.gamma1 >= 0.0,
            "must be >= 0",
        );
        check(
            "rate_r",
            self.rate_r.is_finite() && self.rate_r >= 0.0,
            "must be >= 0",
        );
        check("t1", self.t1.is_finite() && self.t1 > 0.0, "must be > 0");
        check(
            "shf_slope",
            self.shf_slope.is_finite() && self.shf_slope >= 0.0,
            "must be >= 0",
        );
        check(
            "mod_slope",
            self.mod_slope.is_finite() && self.mod_slope >= 0.0,
            "must be >= 0",
        );
        check(
            "mod_depth",
            self.mod_depth.is_finite() && (0.0..=1.0).contains(&self.mod_depth),
            "must be in [0, 1]",
        );
        check(
            "mod_damp_sigma",
            self.mod_damp_sigma.is_finite() && self.mod_damp_sigma >= 0.0,
            "must be >= 0",
        );
        check(
            "side_hole_depth",
            self.side_hole_depth.is_finite() && (0.0..=1.0).contains(&self.side_hole_depth),
            "must be in [0, 1]",
        );
        check(
            "laser_fwhm",
            self.laser_fwhm.is_finite() && self.laser_fwhm >= 0.0,
            "must be >= 0",
        );
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors("");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// External conditions of a measurement: applied field and temperature.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// Applied magnetic field (T), >= 0.
    pub field_b: f64,
    /// Sample temperature (K), >= [`MIN_TEMPERATURE`].
    pub temperature: f64,
}

impl Environment {
    pub fn new(field_b: f64, temperature: f64) -> Result<Self> {
        let env = Environment {
            field_b,
            temperature,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validation_errors(&self, prefix: &str) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.field_b.is_finite() && self.field_b >= 0.0) {
            errs.push(format!("{prefix}field_b: must be >= 0"));
        }
        if !(self.temperature.is_finite() && self.temperature >= MIN_TEMPERATURE) {
            errs.push(format!(
                "{prefix}temperature: must be >= {MIN_TEMPERATURE} K"
            ));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors("");
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Decoherence time from a homogeneous linewidth: T_2 = 1/(pi Gamma_h).
pub fn linewidth_to_t2(gamma_h: f64) -> Result<f64> {
    if !(gamma_h.is_finite() && gamma_h > 0.0) {
        return Err(Error::domain(format!(
            "linewidth must be > 0 Hz, got {gamma_h}"
        )));
    }
    Ok(1.0 / (std::f64::consts::PI * gamma_h))
}

/// Homogeneous linewidth from a decoherence time: Gamma_h = 1/(pi T_2).
pub fn t2_to_linewidth(t2: f64) -> Result<f64> {
    if !(t2.is_finite() && t2 > 0.0) {
        return Err(Error::domain(format!("T2 must be > 0 s, got {t2}")));
    }
    Ok(1.0 / (std::f64::consts::PI * t2))
}

/// Decoherence time from the fitted two-pulse-echo decay constant: T_2 = 4 tau.
pub fn t2_from_decay_constant(tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::domain(format!(
            "decay constant must be > 0 s, got {tau}"
        )));
    }
    Ok(4.0 * tau)
}

/// Field-independent TLS linewidth Gamma_TLS0(T) = a T^(1+mu).
pub fn tls_powerlaw_linewidth(a: f64, mu: f64, temperature: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::domain(format!("prefactor a must be > 0, got {a}")));
    }
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::domain(format!("exponent mu must be >= 0, got {mu}")));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::domain(format!(
            "temperature must be > 0 K, got {temperature}"
        )));
    }
    Ok(a * temperature.powf(1.0 + mu))
}

/// Thermal activation law for the field-dependent homogeneous linewidth:
///
/// Gamma_h(B, T) = a T^(1+mu) + Gamma_TLS1 exp(-g_eff beta B / k T)
///
/// Monotone non-increasing in B; the B -> infinity limit is the pure
/// power-law term.
pub fn activation_linewidth(params: &DephasingParams, env: &Environment) -> Result<f64> {
    if !(env.temperature.is_finite() && env.temperature >= MIN_TEMPERATURE) {
        return Err(Error::domain(format!(
            "temperature must be >= {MIN_TEMPERATURE} K, got {}",
            env.temperature
        )));
    }
    if !(env.field_b.is_finite() && env.field_b >= 0.0) {
        return Err(Error::domain(format!(
            "field must be >= 0 T, got {}",
            env.field_b
        )));
    }
    let base = tls_powerlaw_linewidth(params.a, params.mu, env.temperature)?;
    let zeeman = params.g_eff * BOHR_MAGNETON * env.field_b;
    let thermal = BOLTZMANN * env.temperature;
    Ok(base + params.gamma_tls1 * (-zeeman / thermal).exp())
}

/// Time-dependent homogeneous linewidth probed by a stimulated echo with
/// waiting time `t23`:
///
/// Gamma_h(t23) = Gamma_0 + (Gamma_1 / 2) [1 - exp(-R t23)]
///
/// Gamma_0 at t23 = 0, saturating towards Gamma_0 + Gamma_1/2.
pub fn spectral_diffusion_linewidth(params: &DephasingParams, t23: f64) -> Result<f64> {
    if !(t23.is_finite() && t23 >= 0.0) {
        return Err(Error::domain(format!(
            "waiting time must be >= 0 s, got {t23}"
        )));
    }
    Ok(params.gamma0 + 0.5 * params.gamma1 * (1.0 - (-params.rate_r * t23).exp()))
}

/// Side-hole offset from the central hole: linear in field, `slope * B`.
pub fn superhyperfine_splitting(slope: f64, field_b: f64) -> Result<f64> {
    if !(slope.is_finite() && slope > 0.0) {
        return Err(Error::domain(format!("slope must be > 0 Hz/T, got {slope}")));
    }
    if !(field_b.is_finite() && field_b >= 0.0) {
        return Err(Error::domain(format!("field must be >= 0 T, got {field_b}")));
    }
    Ok(slope * field_b)
}

/// Linewidth a hole-burning measurement sees once spectral diffusion has
/// saturated (R t23 >> 1): Gamma_0 + Gamma_1.
pub fn shb_linewidth_from_sd_model(params: &DephasingParams) -> f64 {
    params.gamma0 + params.gamma1
}
