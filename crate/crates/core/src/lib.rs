//! Frequency-domain identification of half-order (Warburg) impedance models
//! for Li-ion batteries.
//!
//! The crate covers the whole chain from excitation design to circuit values:
//!
//! * [`signal`]: odd random-phase multisines, periodic Gaussian noise, RMS scaling.
//! * [`spectra`]: 1/N-normalized DFT, per-period spectra with errors-in-variables
//!   noise covariances, nonparametric impedance.
//! * [`model`]: Randles circuit, Warburg element, rational model in `sqrt(s)`,
//!   Coulomb counting.
//! * [`simulator`]: steady-state frequency-domain simulation plus SNR-controlled noise.
//! * [`estimator`]: equation-error regression, TLS via SVD, iterated weighted TLS,
//!   optionally noise-compensated.
//! * [`ecmfit`]: Randles parameters from the estimated coefficients.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ecmfit;
pub mod error;
pub mod estimator;
pub mod model;
pub mod signal;
pub mod simulator;
pub mod spectra;

mod fft;

pub use ecmfit::{fit_randles, fit_randles_from, init_from_coefficients, EcmFitResult};
pub use error::{Error, Result};
pub use estimator::{
    build_regressor, equation_error_sigma, parametric_impedance, relative_error_curve, tls_solve,
    wtls_estimate, EstimateResult, EstimationConfig, Regressor,
};
pub use model::{
    coulomb_count, eval_rational, randles_impedance, randles_to_rational, resonance_frequency,
    warburg_impedance, HalfOrderRational, RandlesParams, SocTrace,
};
pub use num_complex::Complex64;
pub use signal::{
    design_odd_quasilog, generate_periodic_noise, scale_to_rms, synthesize_multisine,
    MultisineSpec, SignalKind, TimeRecord,
};
pub use simulator::{add_noise, simulate_response, NoiseSpec};
pub use spectra::{dft, nonparametric_impedance, per_period_spectra, ImpedancePoint, SpectralSet};
