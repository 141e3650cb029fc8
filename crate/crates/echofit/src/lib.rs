//! Forward simulation and parameter estimation for optical-coherence
//! spectroscopy of rare-earth-doped fibers.
//!
//! The crate models the homogeneous linewidth of an erbium-doped glass
//! fiber under magnetic field and temperature (power-law TLS dephasing,
//! thermally activated field quenching, spectral diffusion), simulates the
//! three measurements that probe it — hole-burning spectra, two-pulse echo
//! decays, stimulated-echo surfaces — and recovers the model parameters
//! from sampled data by weighted nonlinear least squares with 2-sigma
//! uncertainties. A Monte Carlo sudden-jump engine provides an independent
//! cross-check of the closed-form spectral-diffusion law, and a small CLI
//! wires simulate -> noise -> fit -> report pipelines driven by JSON
//! configs.
//!
//! Internal units are strictly SI: Hz, seconds, tesla, kelvin.
//! Megahertz and microseconds appear only at the I/O boundary.

pub mod cli;
pub mod config;
pub mod curve;
pub mod dataio;
pub mod error;
pub mod estimation;
pub mod lineshape;
pub mod noise;
pub mod physics;
pub mod rng;
pub mod sequences;

pub use curve::{AxisKind, Curve, HoleComponents, HoleSpectrum, Pe3Surface};
pub use error::{Error, Result};
pub use estimation::{
    consistency_report, default_2pe_window, fit_3pe_surface, fit_activation,
    fit_exponential_decay, fit_hole_profile, fit_linear, fit_modulation_frequency, fit_powerlaw,
    ConsistencyReport, FitOptions, FitResult,
};
pub use physics::{DephasingParams, Environment};
pub use sequences::{
    mc_sudden_jump_echo, simulate_2pe_decay, simulate_3pe_surface,
    simulate_power_broadening_series, simulate_shb_spectrum,
};
