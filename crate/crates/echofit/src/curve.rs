//! Sampled-data containers shared by the simulators, the fitters, and the
//! file formats: 1-D curves, stimulated-echo surfaces, and hole spectra.

use crate::error::{Error, Result};

/// What the abscissa of a [`Curve`] means, and therefore its unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// Pulse delay or waiting time (s).
    TimeDelay,
    /// Offset from line center (Hz).
    Detuning,
    /// Applied magnetic field (T).
    Field,
    /// Sample temperature (K).
    Temperature,
    /// Excitation power relative to saturation (dimensionless).
    Power,
}

impl AxisKind {
    /// Unit string for file metadata.
    pub fn unit(self) -> &'static str {
        match self {
            AxisKind::TimeDelay => "s",
            AxisKind::Detuning => "Hz",
            AxisKind::Field => "T",
            AxisKind::Temperature => "K",
            AxisKind::Power => "relative",
        }
    }

    /// Stable lowercase name used in file metadata; inverse of [`AxisKind::parse`].
    pub fn name(self) -> &'static str {
        match self {
            AxisKind::TimeDelay => "time_delay",
            AxisKind::Detuning => "detuning",
            AxisKind::Field => "field",
            AxisKind::Temperature => "temperature",
            AxisKind::Power => "power",
        }
    }

    pub fn parse(s: &str) -> Result<AxisKind> {
        match s {
            "time_delay" => Ok(AxisKind::TimeDelay),
            "detuning" => Ok(AxisKind::Detuning),
            "field" => Ok(AxisKind::Field),
            "temperature" => Ok(AxisKind::Temperature),
            "power" => Ok(AxisKind::Power),
            other => Err(Error::config(format!(
                "unknown axis kind {other:?}; expected one of \
                 time_delay, detuning, field, temperature, power"
            ))),
        }
    }
}

/// A sampled 1-D dataset: strictly increasing abscissa, matching ordinates,
/// optional per-point 1-sigma uncertainties.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Per-point 1-sigma uncertainties; all > 0 when present.
    pub sigma: Option<Vec<f64>>,
    pub axis_kind: AxisKind,
}

/// Checks that `x` is finite and strictly increasing; reports the first
/// offending index under `name`.
fn check_strictly_increasing(name: &str, x: &[f64], errs: &mut Vec<String>) {
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            errs.push(format!("{name}[{i}]: not finite"));
            return;
        }
    }
    for i in 1..x.len() {
        if x[i] <= x[i - 1] {
            errs.push(format!(
                "{name}[{i}]: not strictly increasing ({} after {})",
                x[i],
                x[i - 1]
            ));
            return;
        }
    }
}

fn check_finite(name: &str, v: &[f64], errs: &mut Vec<String>) {
    if let Some(i) = v.iter().position(|p| !p.is_finite()) {
        errs.push(format!("{name}[{i}]: not finite"));
    }
}

fn check_sigma(name: &str, len: usize, sigma: &Option<Vec<f64>>, errs: &mut Vec<String>) {
    if let Some(s) = sigma {
        if s.len() != len {
            errs.push(format!("{name}: length {} != {} points", s.len(), len));
        }
        if let Some(i) = s.iter().position(|&p| !(p.is_finite() && p > 0.0)) {
            errs.push(format!("{name}[{i}]: must be > 0, got {}", s[i]));
        }
    }
}

impl Curve {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>, axis_kind: AxisKind) -> Result<Curve> {
        let mut errs = Vec::new();
        if x.is_empty() {
            errs.push("x: empty".into());
        }
        if x.len() != y.len() {
            errs.push(format!("y: length {} != {} points", y.len(), x.len()));
        }
        check_strictly_increasing("x", &x, &mut errs);
        check_finite("y", &y, &mut errs);
        check_sigma("sigma", x.len(), &sigma, &mut errs);
        if errs.is_empty() {
            Ok(Curve {
                x,
                y,
                sigma,
                axis_kind,
            })
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Indices of points with x inside the closed interval [lo, hi].
    pub fn window_indices(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.x
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= lo && x <= hi)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stimulated-echo intensity versus waiting time at one fixed pulse delay.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pe3Surface {
    /// Delay between the first two pulses (s), > 0.
    pub t12: f64,
    /// Waiting times between second and third pulse (s), strictly
    /// increasing, all >= 0.
    pub t23_grid: Vec<f64>,
    /// Echo peak intensity, dimensionless.
    pub intensity: Vec<f64>,
    /// Optional per-point 1-sigma uncertainties, all > 0.
    pub sigma: Option<Vec<f64>>,
}

impl Pe3Surface {
    pub fn new(
        t12: f64,
        t23_grid: Vec<f64>,
        intensity: Vec<f64>,
        sigma: Option<Vec<f64>>,
    ) -> Result<Pe3Surface> {
        let mut errs = Vec::new();
        if !(t12.is_finite() && t12 > 0.0) {
            errs.push(format!("t12: must be > 0 s, got {t12}"));
        }
        if t23_grid.is_empty() {
            errs.push("t23_grid: empty".into());
        }
        if !t23_grid.is_empty() && t23_grid[0] < 0.0 {
            errs.push(format!("t23_grid[0]: must be >= 0 s, got {}", t23_grid[0]));
        }
        check_strictly_increasing("t23_grid", &t23_grid, &mut errs);
        if intensity.len() != t23_grid.len() {
            errs.push(format!(
                "intensity: length {} != {} points",
                intensity.len(),
                t23_grid.len()
            ));
        }
        check_finite("intensity", &intensity, &mut errs);
        check_sigma("sigma", t23_grid.len(), &sigma, &mut errs);
        if errs.is_empty() {
            Ok(Pe3Surface {
                t12,
                t23_grid,
                intensity,
                sigma,
            })
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn len(&self) -> usize {
        self.t23_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t23_grid.is_empty()
    }
}

/// The generating three-hole structure of a [`HoleSpectrum`]: known for
/// simulated spectra, absent for data read back from noisy files.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleComponents {
    /// FWHM of the central hole (Hz), laser jitter included.
    pub central_fwhm: f64,
    /// Side-hole offset from center (Hz); 0 means no side holes.
    pub side_offset: f64,
    /// Side-hole depth relative to the central hole, in [0, 1].
    pub side_depth: f64,
}

/// A hole-burning transmission spectrum: transmission change versus
/// detuning from the burn frequency.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HoleSpectrum {
    /// Detuning grid (Hz), strictly increasing, centered on 0.
    pub detuning: Vec<f64>,
    /// Transmission change, dimensionless; peaks at zero detuning for
    /// noiseless simulated spectra.
    pub transmission_change: Vec<f64>,
    /// Generating hole structure when known.
    pub components: Option<HoleComponents>,
}

impl HoleSpectrum {
    pub fn new(
        detuning: Vec<f64>,
        transmission_change: Vec<f64>,
        components: Option<HoleComponents>,
    ) -> Result<HoleSpectrum> {
        let mut errs = Vec::new();
        if detuning.is_empty() {
            errs.push("detuning: empty".into());
        }
        check_strictly_increasing("detuning", &detuning, &mut errs);
        if transmission_change.len() != detuning.len() {
            errs.push(format!(
                "transmission_change: length {} != {} points",
                transmission_change.len(),
                detuning.len()
            ));
        }
        check_finite("transmission_change", &transmission_change, &mut errs);
        if errs.is_empty() {
            Ok(HoleSpectrum {
                detuning,
                transmission_change,
                components,
            })
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// View as a generic curve (detuning axis) for noise injection and
    /// serialization. The component annotation is carried separately.
    pub fn to_curve(&self) -> Curve {
        Curve {
            x: self.detuning.clone(),
            y: self.transmission_change.clone(),
            sigma: None,
            axis_kind: AxisKind::Detuning,
        }
    }

    /// Rebuilds a spectrum from a detuning-axis curve (e.g. after noise or
    /// file round-trip); component truth is unknown at that point.
    pub fn from_curve(curve: &Curve) -> Result<HoleSpectrum> {
        if curve.axis_kind != AxisKind::Detuning {
            return Err(Error::config(format!(
                "hole spectrum needs a detuning axis, got {}",
                curve.axis_kind.name()
            )));
        }
        HoleSpectrum::new(curve.x.clone(), curve.y.clone(), None)
    }

    pub fn len(&self) -> usize {
        self.detuning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detuning.is_empty()
    }
}
