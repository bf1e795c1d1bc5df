//! Steady-state voltage response of an LTI impedance plus measurement noise.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::model::{randles_impedance, RandlesParams};
use crate::signal::{
    generate_periodic_noise, scale_to_rms, synthesize_multisine, MultisineSpec, SignalKind,
    TimeRecord,
};

/// Additive white Gaussian noise at a given signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// RMS of the noiseless (mean-removed) signal over the noise standard deviation.
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr: f64, seed: u64) -> Result<Self> {
        if !(snr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "SNR must be positive, got {snr}"
            )));
        }
        Ok(Self { snr, seed })
    }
}

/// Periodic steady-state response of the Randles cell to `current`.
pub fn simulate_response(p: &RandlesParams, current: &TimeRecord) -> Result<TimeRecord> {
    simulate_with(|w| randles_impedance(p, w), p.ocv, current)
}

/// Periodic steady-state response for an arbitrary impedance `z(omega)`.
///
/// One period is transformed, multiplied bin by bin and transformed back; the
/// DC bin is set to `ocv` and `z` is never evaluated at zero frequency. At the
/// Nyquist bin only `Re z` is applied so that the output stays real.
pub fn simulate_with<F>(z: F, ocv: f64, current: &TimeRecord) -> Result<TimeRecord>
where
    F: Fn(f64) -> Result<Complex64>,
{
    check_periodic(current)?;
    let m = current.samples_per_period();
    let period_s = current.period_s();
    let spectrum = fft::forward(current.period(0));

    let mut response = vec![Complex64::new(0.0, 0.0); m];
    response[0] = Complex64::new(ocv, 0.0);
    for k in 1..=m / 2 {
        let zk = z(TAU * k as f64 / period_s)?;
        if 2 * k == m {
            response[k] = spectrum[k] * zk.re;
        } else {
            response[k] = spectrum[k] * zk;
            response[m - k] = response[k].conj();
        }
    }
    let one_period = fft::inverse_real(&response);

    let mut samples = Vec::with_capacity(current.len());
    for _ in 0..current.periods() {
        samples.extend_from_slice(&one_period);
    }
    current
        .with_samples(samples)
        .map(|r| r.with_kind(SignalKind::Voltage))
}

fn check_periodic(record: &TimeRecord) -> Result<()> {
    let first = record.period(0);
    let scale = first.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for p in 1..record.periods() {
        let dev = record
            .period(p)
            .iter()
            .zip(first)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if dev > 1e-9 * scale {
            return Err(Error::NonPeriodic(format!(
                "period {p} deviates from period 0 by {dev:e}"
            )));
        }
    }
    Ok(())
}

/// Standard deviation that [`add_noise`] uses for `record`.
pub fn noise_sigma(record: &TimeRecord, snr: f64) -> f64 {
    let mean = record.mean();
    let ac_rms = (record
        .samples()
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<f64>()
        / record.len() as f64)
        .sqrt();
    ac_rms / snr
}

/// Adds i.i.d. `N(0, (RMS_ac / snr)^2)` samples; the RMS excludes the mean.
pub fn add_noise(record: &TimeRecord, spec: &NoiseSpec) -> Result<TimeRecord> {
    if !(spec.snr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "SNR must be positive, got {}",
            spec.snr
        )));
    }
    let sigma = noise_sigma(record, spec.snr);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = record
        .samples()
        .iter()
        .map(|&x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    record.with_samples(samples)
}

/// Excitation used by [`Experiment`].
#[derive(Debug, Clone, PartialEq)]
pub enum Excitation {
    Multisine(MultisineSpec),
    /// Periodic Gaussian noise, redrawn for every run.
    Noise {
        period_s: f64,
    },
}

impl Excitation {
    pub fn period_s(&self) -> f64 {
        match self {
            Excitation::Multisine(spec) => spec.period_s,
            Excitation::Noise { period_s } => *period_s,
        }
    }
}

/// A complete synthetic measurement: excitation, cell, sampling and noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub cell: RandlesParams,
    pub excitation: Excitation,
    pub rms_a: f64,
    pub sample_rate_hz: f64,
    pub periods: usize,
    pub current_snr: Option<f64>,
    pub voltage_snr: Option<f64>,
}

/// Noisy current and voltage of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub current: TimeRecord,
    pub voltage: TimeRecord,
}

impl Experiment {
    /// Simulates one realization. All randomness derives from `seed`.
    pub fn run(&self, seed: u64) -> Result<Measurement> {
        let excitation = match &self.excitation {
            Excitation::Multisine(spec) => {
                synthesize_multisine(spec, self.sample_rate_hz, self.periods)?
            }
            Excitation::Noise { period_s } => generate_periodic_noise(
                *period_s,
                self.sample_rate_hz,
                self.periods,
                derive_seed(seed, 0),
            )?,
        };
        let current = scale_to_rms(&excitation, self.rms_a)?;
        let voltage = simulate_response(&self.cell, &current)?;
        let current = match self.current_snr {
            Some(snr) => add_noise(&current, &NoiseSpec::new(snr, derive_seed(seed, 1))?)?,
            None => current,
        };
        let voltage = match self.voltage_snr {
            Some(snr) => add_noise(&voltage, &NoiseSpec::new(snr, derive_seed(seed, 2))?)?,
            None => voltage,
        };
        Ok(Measurement { current, voltage })
    }
}

/// SplitMix64 mix of a run seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::design_odd_quasilog;
    use crate::spectra::dft;

    fn cell() -> RandlesParams {
        RandlesParams::new(0.551, 0.119, 1.464, 0.0346, 3.6).unwrap()
    }

    fn multisine_current(periods: usize) -> TimeRecord {
        let spec = design_odd_quasilog(20.0, 0.05, 20.0, 10, 4).unwrap();
        scale_to_rms(&synthesize_multisine(&spec, 100.0, periods).unwrap(), 0.5).unwrap()
    }

    #[test]
    fn resistor_response() {
        let i = multisine_current(2);
        let v = simulate_with(|_| Ok(Complex64::new(0.551, 0.0)), 3.6, &i).unwrap();
        assert_eq!(v.kind(), SignalKind::Voltage);
        for (vi, ii) in v.samples().iter().zip(i.samples()) {
            assert!((vi - (3.6 + 0.551 * ii)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_current_gives_ocv() {
        let i = TimeRecord::new(vec![0.0; 64], 8.0, 2, 4.0, SignalKind::Current).unwrap();
        let v = simulate_response(&cell(), &i).unwrap();
        assert!(v.samples().iter().all(|x| (x - 3.6).abs() < 1e-14));
    }

    #[test]
    fn single_sine_gain_and_phase() {
        let (k, alpha, phi, period) = (3u64, 0.4, 0.7, 10.0);
        let spec = MultisineSpec::new(period, vec![k], vec![alpha], vec![phi]).unwrap();
        let i = synthesize_multisine(&spec, 50.0, 1).unwrap();
        let v = simulate_response(&cell(), &i).unwrap();
        let w = TAU * k as f64 / period;
        let z = randles_impedance(&cell(), w).unwrap();
        for (n, x) in v.samples().iter().enumerate() {
            let t = n as f64 / 50.0;
            let expected = 3.6 + alpha * z.norm() * (w * t + phi + z.arg()).sin();
            assert!((x - expected).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn response_is_periodic_and_band_limited() {
        let i = multisine_current(3);
        let v = simulate_response(&cell(), &i).unwrap();
        let rms = v.rms();
        let m = v.samples_per_period();
        for p in 1..3 {
            let dev = v
                .period(p)
                .iter()
                .zip(v.period(0))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10 * rms);
        }
        let spec = design_odd_quasilog(20.0, 0.05, 20.0, 10, 4).unwrap();
        let x = dft(v.samples()).unwrap();
        let n = x.len();
        let allowed: std::collections::BTreeSet<usize> = spec
            .harmonics
            .iter()
            .flat_map(|&h| [3 * h as usize, n - 3 * h as usize])
            .chain([0])
            .collect();
        for (k, xk) in x.iter().enumerate() {
            if !allowed.contains(&k) {
                assert!(xk.norm() < 1e-12 * rms, "bin {k}");
            }
        }
        assert!(m > 0);
    }

    #[test]
    fn linearity() {
        let i1 = multisine_current(1);
        let i2 = generate_periodic_noise(20.0, 100.0, 1, 3).unwrap();
        let (a, b) = (0.7, -1.3);
        let mix = i1
            .with_samples(
                i1.samples()
                    .iter()
                    .zip(i2.samples())
                    .map(|(x, y)| a * x + b * y)
                    .collect(),
            )
            .unwrap();
        let v1 = simulate_response(&cell(), &i1).unwrap();
        let v2 = simulate_response(&cell(), &i2).unwrap();
        let vm = simulate_response(&cell(), &mix).unwrap();
        let scale = vm
            .samples()
            .iter()
            .map(|x| (x - 3.6).abs())
            .fold(0.0, f64::max);
        for n in 0..vm.len() {
            let lhs = vm.samples()[n] - 3.6;
            let rhs = a * (v1.samples()[n] - 3.6) + b * (v2.samples()[n] - 3.6);
            assert!((lhs - rhs).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn non_periodic_current_rejected() {
        let mut xs: Vec<f64> = multisine_current(2).into_samples();
        xs[2500] += 0.1;
        let i = TimeRecord::new(xs, 100.0, 2, 20.0, SignalKind::Current).unwrap();
        assert!(matches!(
            simulate_response(&cell(), &i),
            Err(Error::NonPeriodic(_))
        ));
    }

    #[test]
    fn noise_levels() {
        let i = multisine_current(1);
        let out = add_noise(&i, &NoiseSpec::new(1e12, 1).unwrap()).unwrap();
        for (a, b) in out.samples().iter().zip(i.samples()) {
            assert!((a - b).abs() <= 1e-9 * i.rms());
        }
        let unit = scale_to_rms(&i, 1.0).unwrap();
        assert!((noise_sigma(&unit, 50.0) - 0.02).abs() < 1e-12);
        assert!(NoiseSpec::new(0.0, 1).is_err());
    }

    #[test]
    fn empirical_noise_sigma() {
        // sd of the sample sd over 1e6 draws is ~0.07 %, so 1 % is loose.
        let i = generate_periodic_noise(100.0, 10_000.0, 1, 2).unwrap();
        let v = i
            .with_samples(i.samples().iter().map(|x| 4.0 + x).collect())
            .unwrap();
        let out = add_noise(&v, &NoiseSpec::new(50.0, 77).unwrap()).unwrap();
        let diffs: Vec<f64> = out
            .samples()
            .iter()
            .zip(v.samples())
            .map(|(a, b)| a - b)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let target = noise_sigma(&v, 50.0);
        assert!((sd / target - 1.0).abs() < 0.01, "{sd} vs {target}");
    }

    #[test]
    fn experiment_is_deterministic() {
        let exp = Experiment {
            cell: cell(),
            excitation: Excitation::Noise { period_s: 10.0 },
            rms_a: 0.5,
            sample_rate_hz: 20.0,
            periods: 3,
            current_snr: Some(50.0),
            voltage_snr: Some(50.0),
        };
        let a = exp.run(5).unwrap();
        let b = exp.run(5).unwrap();
        let c = exp.run(6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.current, c.current);
    }
}
