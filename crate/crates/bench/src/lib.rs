//! Shared inputs for the benchmarks: the reference cell sampled at 200 Hz for
//! five 200 s periods.

use fracimp_core::simulator::{Excitation, Experiment, Measurement};
use fracimp_core::{design_odd_quasilog, EstimationConfig, MultisineSpec, RandlesParams};

pub fn cell() -> RandlesParams {
    RandlesParams::new(0.551, 0.119, 1.464, 0.0346, 3.6).expect("valid cell")
}

pub fn multisine() -> MultisineSpec {
    design_odd_quasilog(200.0, 0.005, 80.0, 23, 2023).expect("valid design")
}

pub fn experiment(excitation: Excitation, snr: f64) -> Experiment {
    Experiment {
        cell: cell(),
        excitation,
        rms_a: 0.5,
        sample_rate_hz: 200.0,
        periods: 5,
        current_snr: Some(snr),
        voltage_snr: Some(snr),
    }
}

pub fn multisine_measurement(seed: u64) -> Measurement {
    experiment(Excitation::Multisine(multisine()), 50.0)
        .run(seed)
        .expect("simulation")
}

pub fn noise_measurement(seed: u64) -> Measurement {
    experiment(Excitation::Noise { period_s: 200.0 }, 50.0)
        .run(seed)
        .expect("simulation")
}

pub fn multisine_config() -> EstimationConfig {
    EstimationConfig::default().with_mask(multisine().excited_bins())
}

/// Bins 1..=16000 cover 5 mHz to 80 Hz at a 200 s period.
pub fn noise_config() -> EstimationConfig {
    EstimationConfig {
        noise_compensation: true,
        ..EstimationConfig::default().with_window(1, 16_000)
    }
}
