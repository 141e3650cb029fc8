//! Declarative experiment configurations.
//!
//! A configuration is a strict JSON description of one simulated run: the
//! pulse sequence, the dephasing parameters, the sample environment, the
//! measurement grid, the synthetic-noise level, and the random seed.
//! Parsing validates everything up front and reports every problem at once
//! (with field paths such as `params.gamma1`), so any configuration that
//! parses is guaranteed to simulate. Unknown keys are rejected: a config
//! file is meant to be a machine-checkable record of what was run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{DephasingParams, Environment};

/// Pulse sequence selected by a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    /// Spectral-hole-burning transmission spectrum over a detuning grid.
    Shb,
    /// Two-pulse photon-echo decay over a pulse-delay grid.
    Pe2,
    /// Three-pulse (stimulated) echo over a waiting-time grid.
    Pe3,
    /// Monte Carlo sudden-jump stimulated echo over a waiting-time grid.
    Mc3pe,
    /// Hole width versus burn power at fixed environment.
    PowerSeries,
}

impl SequenceKind {
    /// Configuration-file name of the sequence (`shb`, `pe2`, ...).
    pub fn name(&self) -> &'static str {
        match self {
            SequenceKind::Shb => "shb",
            SequenceKind::Pe2 => "pe2",
            SequenceKind::Pe3 => "pe3",
            SequenceKind::Mc3pe => "mc3pe",
            SequenceKind::PowerSeries => "power_series",
        }
    }

    /// Whether the sequence needs a pulse separation `t12`.
    pub fn needs_t12(&self) -> bool {
        matches!(self, SequenceKind::Pe3 | SequenceKind::Mc3pe)
    }
}

/// Spacing rule for a [`GridSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    Linear,
    Log,
}

/// Evenly spaced measurement grid, linear or logarithmic, endpoints
/// included. Units follow the sequence: seconds for echo delays, Hz for
/// detunings, and relative power for power series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: GridSpacing,
}

impl GridSpec {
    fn validation_errors(&self, prefix: &str) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.start.is_finite() && self.stop.is_finite()) {
            errs.push(format!(
                "{prefix}: start and stop must be finite, got {} and {}",
                self.start, self.stop
            ));
            return errs;
        }
        if self.count < 2 {
            errs.push(format!(
                "{prefix}.count: need at least 2 grid points, got {}",
                self.count
            ));
        }
        if self.start >= self.stop {
            errs.push(format!(
                "{prefix}: start must be below stop, got {} >= {}",
                self.start, self.stop
            ));
        }
        if self.spacing == GridSpacing::Log && self.start <= 0.0 {
            errs.push(format!(
                "{prefix}: log spacing requires start > 0, got {}",
                self.start
            ));
        }
        errs
    }

    /// Materializes the grid. Endpoints are reproduced exactly; interior
    /// points interpolate linearly in the value or in its logarithm.
    pub fn points(&self) -> Vec<f64> {
        let n = self.count;
        let (a, b) = match self.spacing {
            GridSpacing::Linear => (self.start, self.stop),
            GridSpacing::Log => (self.start.ln(), self.stop.ln()),
        };
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.start;
                }
                if i == n - 1 {
                    return self.stop;
                }
                let t = i as f64 / (n - 1) as f64;
                let v = a * (1.0 - t) + b * t;
                match self.spacing {
                    GridSpacing::Linear => v,
                    GridSpacing::Log => v.exp(),
                }
            })
            .collect()
    }
}

/// Synthetic measurement-noise level: `y' = y*(1 + eps) + eta` with
/// `eps ~ N(0, relative_sigma^2)` and `eta ~ N(0, floor_sigma^2)`.
/// `floor_sigma` is in the units of the observable (relative intensity for
/// echoes and holes). Both zero means noiseless.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub relative_sigma: f64,
    pub floor_sigma: f64,
}

impl NoiseSpec {
    pub fn is_noiseless(&self) -> bool {
        self.relative_sigma == 0.0 && self.floor_sigma == 0.0
    }

    fn validation_errors(&self, prefix: &str) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("relative_sigma", self.relative_sigma),
            ("floor_sigma", self.floor_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("{prefix}.{name}: must be >= 0, got {v}"));
            }
        }
        errs
    }
}

/// One simulated experiment, ready to run.
///
/// `t12` (s) is required by the `pe3` and `mc3pe` sequences, `n_traj` by
/// `mc3pe`, and `p_sat` (same relative unit as the power grid) by
/// `power_series`; each is rejected on sequences that do not use it, so a
/// config never carries silently ignored settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sequence: SequenceKind,
    #[serde(default)]
    pub params: DephasingParams,
    pub env: Environment,
    pub grid: GridSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t12: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sat: Option<f64>,
    /// Free-form labels copied verbatim into output-file comments
    /// (sample lot, optical depth, wavelength, ...). Not interpreted.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl ExperimentConfig {
    /// Collects every validation problem, each tagged with its field path.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        errs.extend(self.params.validation_errors("params."));
        errs.extend(self.env.validation_errors("env."));
        errs.extend(self.grid.validation_errors("grid"));
        errs.extend(self.noise.validation_errors("noise"));

        let seq = self.sequence;
        match (seq.needs_t12(), self.t12) {
            (true, None) => errs.push(format!(
                "t12: required for sequence \"{}\" (first-to-second pulse separation, s)",
                seq.name()
            )),
            (true, Some(v)) if !(v.is_finite() && v > 0.0) => {
                errs.push(format!("t12: must be > 0 s, got {v}"));
            }
            (false, Some(_)) => errs.push(format!(
                "t12: not used by sequence \"{}\"; remove it",
                seq.name()
            )),
            _ => {}
        }
        match (seq == SequenceKind::Mc3pe, self.n_traj) {
            (true, None) => {
                errs.push("n_traj: required for sequence \"mc3pe\" (trajectory count)".to_string());
            }
            (true, Some(0)) => errs.push("n_traj: must be >= 1".to_string()),
            (false, Some(_)) => errs.push(format!(
                "n_traj: not used by sequence \"{}\"; remove it",
                seq.name()
            )),
            _ => {}
        }
        match (seq == SequenceKind::PowerSeries, self.p_sat) {
            (true, None) => errs.push(
                "p_sat: required for sequence \"power_series\" (saturation power, grid units)"
                    .to_string(),
            ),
            (true, Some(v)) if !(v.is_finite() && v > 0.0) => {
                errs.push(format!("p_sat: must be > 0, got {v}"));
            }
            (false, Some(_)) => errs.push(format!(
                "p_sat: not used by sequence \"{}\"; remove it",
                seq.name()
            )),
            _ => {}
        }

        // per-sequence grid constraints, checked only when the grid itself
        // is well-formed so the messages do not pile up
        if self.grid.validation_errors("grid").is_empty() {
            match seq {
                SequenceKind::Shb => {
                    if self.grid.spacing != GridSpacing::Linear
                        || self.grid.start != -self.grid.stop
                    {
                        errs.push(
                            "grid: shb needs a linear detuning grid symmetric about zero \
                             (start = -stop)"
                                .to_string(),
                        );
                    }
                }
                SequenceKind::Pe2 | SequenceKind::Pe3 | SequenceKind::Mc3pe => {
                    if self.grid.start < 0.0 {
                        errs.push(format!(
                            "grid.start: delays must be >= 0 s, got {}",
                            self.grid.start
                        ));
                    }
                }
                SequenceKind::PowerSeries => {
                    if self.grid.start < 0.0 {
                        errs.push(format!(
                            "grid.start: powers must be >= 0, got {}",
                            self.grid.start
                        ));
                    }
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Parses and fully validates a configuration from JSON text.
///
/// Syntax and schema problems come back with the line and column from the
/// JSON parser; semantic problems come back as one list containing every
/// violated constraint.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| Error::config(format!("config parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
