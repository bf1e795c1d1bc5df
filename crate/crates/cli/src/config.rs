//! Run configuration. Every section is optional; the defaults reproduce the
//! reference simulation (200 s period, 200 Hz, five periods, 0.5 A RMS).

use std::path::Path;

use fracimp_core::simulator::Excitation;
use fracimp_core::{design_odd_quasilog, EstimationConfig, MultisineSpec, RandlesParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: String,
    pub excitation: ExcitationConfig,
    pub cell: RandlesParams,
    pub acquisition: Acquisition,
    pub noise: NoiseConfig,
    pub soc: Option<SocConfig>,
    pub estimation: EstimationConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            excitation: ExcitationConfig::default(),
            cell: RandlesParams {
                r_s: 0.551,
                r_ct: 0.119,
                c_dl: 1.464,
                sigma_w: 0.0346,
                ocv: RandlesParams::DEFAULT_OCV,
            },
            acquisition: Acquisition::default(),
            noise: NoiseConfig::default(),
            soc: None,
            estimation: EstimationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExcitationConfig {
    /// Odd random-phase multisine on a quasi-logarithmic grid.
    Multisine {
        period_s: f64,
        f_min_hz: f64,
        f_max_hz: f64,
        points_per_decade: u32,
        /// Phase seed; `--seed` is used when absent.
        #[serde(default)]
        phase_seed: Option<u64>,
    },
    /// Periodic Gaussian noise.
    Noise { period_s: f64 },
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig::Multisine {
            period_s: 200.0,
            f_min_hz: 0.005,
            f_max_hz: 80.0,
            points_per_decade: 23,
            phase_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Acquisition {
    pub sample_rate_hz: f64,
    pub periods: usize,
    pub rms_a: f64,
}

impl Default for Acquisition {
    fn default() -> Self {
        Self {
            sample_rate_hz: 200.0,
            periods: 5,
            rms_a: 0.5,
        }
    }
}

/// Missing SNRs mean a noiseless channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub current_snr: Option<f64>,
    pub voltage_snr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocConfig {
    pub initial_percent: f64,
    pub capacity_ah: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Log-spaced points of the parametric Bode/Nyquist curves.
    pub grid_points: usize,
    pub fit_max_iter: usize,
    pub fit_tol: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            grid_points: 200,
            fit_max_iter: 100,
            fit_tol: 1e-12,
        }
    }
}

impl RunConfig {
    /// Reads and validates a config file, or returns the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                serde_json::from_str::<RunConfig>(&text).map_err(CliError::json(p))?
            }
            None => RunConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(&self.schema_version)?;
        self.cell.validate()?;
        let acq = &self.acquisition;
        if !(acq.sample_rate_hz.is_finite() && acq.sample_rate_hz > 0.0) {
            return Err(CliError::Usage(
                "acquisition.sample_rate_hz must be positive".into(),
            ));
        }
        if acq.periods == 0 {
            return Err(CliError::Usage(
                "acquisition.periods must be at least 1".into(),
            ));
        }
        if !(acq.rms_a.is_finite() && acq.rms_a > 0.0) {
            return Err(CliError::Usage("acquisition.rms_a must be positive".into()));
        }
        for snr in [self.noise.current_snr, self.noise.voltage_snr]
            .into_iter()
            .flatten()
        {
            if !(snr.is_finite() && snr > 0.0) {
                return Err(CliError::Usage(format!("SNR must be positive, got {snr}")));
            }
        }
        if self.output.grid_points < 2 {
            return Err(CliError::Usage(
                "output.grid_points must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// The multisine this config describes, scaled to the configured RMS.
    pub fn multisine(&self, seed: u64) -> Result<Option<MultisineSpec>> {
        match self.excitation {
            ExcitationConfig::Multisine {
                period_s,
                f_min_hz,
                f_max_hz,
                points_per_decade,
                phase_seed,
            } => {
                let spec = design_odd_quasilog(
                    period_s,
                    f_min_hz,
                    f_max_hz,
                    points_per_decade,
                    phase_seed.unwrap_or(seed),
                )?;
                Ok(Some(spec.scaled_to_rms(self.acquisition.rms_a)?))
            }
            ExcitationConfig::Noise { .. } => Ok(None),
        }
    }

    pub fn excitation(&self, seed: u64) -> Result<Excitation> {
        Ok(match (&self.excitation, self.multisine(seed)?) {
            (_, Some(spec)) => Excitation::Multisine(spec),
            (ExcitationConfig::Noise { period_s }, None) => Excitation::Noise {
                period_s: *period_s,
            },
            (ExcitationConfig::Multisine { .. }, None) => unreachable!(),
        })
    }
}

pub fn check_schema(version: &str) -> Result<()> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unsupported schema_version {version:?}, expected {SCHEMA_VERSION:?}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"acquisition": {"fs": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(
            r#"{"excitation": {"kind": "noise", "period_s": 1, "x": 2}}"#
        )
        .is_err());
    }

    #[test]
    fn noise_excitation_parses() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"excitation": {"kind": "noise", "period_s": 20}}"#).unwrap();
        assert!(
            matches!(cfg.excitation(0).unwrap(), Excitation::Noise { period_s } if period_s == 20.0)
        );
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let cfg: RunConfig = serde_json::from_str(r#"{"schema_version": "2"}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_multisine_has_configured_rms() {
        let spec = RunConfig::default().multisine(1).unwrap().unwrap();
        assert!((spec.rms() - 0.5).abs() < 1e-12);
    }
}
