//! Spectra of periodic records and the nonparametric impedance estimate.
//!
//! Every transform uses `X(k) = (1/N) sum_n x(n) exp(-j 2 pi k n / N)`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::signal::TimeRecord;

/// 1/N-normalized DFT, bins `0..N`.
pub fn dft(samples: &[f64]) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    Ok(fft::forward(samples))
}

/// Sample covariances of the period spectra around their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariances {
    pub var_current: Vec<f64>,
    pub var_voltage: Vec<f64>,
    /// `E{N_V N_I^*}` per bin.
    pub covar_vi: Vec<Complex64>,
}

/// Per-period and averaged spectra of a current/voltage pair, bins `0..=M/2`
/// of a one-period DFT (`M` samples per period). Bin `k` sits at `k / T_p` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSet {
    pub freq_hz: Vec<f64>,
    pub mean_current: Vec<Complex64>,
    pub mean_voltage: Vec<Complex64>,
    pub per_period_current: Vec<Vec<Complex64>>,
    pub per_period_voltage: Vec<Vec<Complex64>>,
    /// `None` when fewer than two periods were recorded.
    pub noise: Option<NoiseCovariances>,
    pub periods: usize,
    pub period_s: f64,
    pub samples_per_period: usize,
}

impl SpectralSet {
    /// Builds a set from per-period spectra, computing means and covariances.
    pub fn from_periods(
        per_period_current: Vec<Vec<Complex64>>,
        per_period_voltage: Vec<Vec<Complex64>>,
        period_s: f64,
        samples_per_period: usize,
    ) -> Result<Self> {
        let periods = per_period_current.len();
        if periods == 0 || periods != per_period_voltage.len() {
            return Err(Error::MetadataMismatch(format!(
                "{} current periods, {} voltage periods",
                periods,
                per_period_voltage.len()
            )));
        }
        let bins = per_period_current[0].len();
        if per_period_current
            .iter()
            .chain(&per_period_voltage)
            .any(|s| s.len() != bins)
        {
            return Err(Error::MetadataMismatch("ragged period spectra".into()));
        }

        let mean = |spectra: &[Vec<Complex64>]| -> Vec<Complex64> {
            (0..bins)
                .map(|k| spectra.iter().map(|s| s[k]).sum::<Complex64>() / periods as f64)
                .collect()
        };
        let mean_current = mean(&per_period_current);
        let mean_voltage = mean(&per_period_voltage);

        let noise = (periods >= 2).then(|| {
            let scale = 1.0 / (periods - 1) as f64;
            let mut var_current = vec![0.0; bins];
            let mut var_voltage = vec![0.0; bins];
            let mut covar_vi = vec![Complex64::new(0.0, 0.0); bins];
            for k in 0..bins {
                for p in 0..periods {
                    let di = per_period_current[p][k] - mean_current[k];
                    let dv = per_period_voltage[p][k] - mean_voltage[k];
                    var_current[k] += di.norm_sqr();
                    var_voltage[k] += dv.norm_sqr();
                    covar_vi[k] += dv * di.conj();
                }
                var_current[k] *= scale;
                var_voltage[k] *= scale;
                covar_vi[k] *= scale;
            }
            NoiseCovariances {
                var_current,
                var_voltage,
                covar_vi,
            }
        });

        Ok(Self {
            freq_hz: (0..bins).map(|k| k as f64 / period_s).collect(),
            mean_current,
            mean_voltage,
            per_period_current,
            per_period_voltage,
            noise,
            periods,
            period_s,
            samples_per_period,
        })
    }

    pub fn bins(&self) -> usize {
        self.freq_hz.len()
    }

    pub fn omega(&self, bin: usize) -> f64 {
        TAU * bin as f64 / self.period_s
    }

    /// Last bin strictly below Nyquist.
    pub fn max_estimation_bin(&self) -> usize {
        (self.samples_per_period - 1) / 2
    }

    /// Flattened view for JSON export.
    pub fn export(&self) -> SpectralExport {
        let line = |s: &[Complex64]| -> Vec<SpectralLine> {
            self.freq_hz
                .iter()
                .zip(s)
                .map(|(&freq_hz, z)| SpectralLine {
                    freq_hz,
                    re: z.re,
                    im: z.im,
                })
                .collect()
        };
        SpectralExport {
            periods: self.periods,
            period_s: self.period_s,
            mean_current: line(&self.mean_current),
            mean_voltage: line(&self.mean_voltage),
            var_current: self.noise.as_ref().map(|n| n.var_current.clone()),
            var_voltage: self.noise.as_ref().map(|n| n.var_voltage.clone()),
            covar_vi: self.noise.as_ref().map(|n| line(&n.covar_vi)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub freq_hz: f64,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralExport {
    pub periods: usize,
    pub period_s: f64,
    pub mean_current: Vec<SpectralLine>,
    pub mean_voltage: Vec<SpectralLine>,
    pub var_current: Option<Vec<f64>>,
    pub var_voltage: Option<Vec<f64>>,
    pub covar_vi: Option<Vec<SpectralLine>>,
}

/// Splits both records into their periods and transforms each one.
pub fn per_period_spectra(current: &TimeRecord, voltage: &TimeRecord) -> Result<SpectralSet> {
    if !current.same_geometry(voltage) {
        return Err(Error::MetadataMismatch(format!(
            "current ({} samples, {} periods, {} Hz, {} s) vs voltage ({} samples, {} periods, {} Hz, {} s)",
            current.len(),
            current.periods(),
            current.sample_rate_hz(),
            current.period_s(),
            voltage.len(),
            voltage.periods(),
            voltage.sample_rate_hz(),
            voltage.period_s()
        )));
    }
    let m = current.samples_per_period();
    let keep = m / 2 + 1;
    let spectra = |rec: &TimeRecord| -> Vec<Vec<Complex64>> {
        (0..rec.periods())
            .map(|p| {
                let mut x = fft::forward(rec.period(p));
                x.truncate(keep);
                x
            })
            .collect()
    };
    SpectralSet::from_periods(spectra(current), spectra(voltage), current.period_s(), m)
}

/// One point of an impedance curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedancePoint {
    pub freq_hz: f64,
    pub z: Complex64,
}

impl ImpedancePoint {
    pub fn omega(&self) -> f64 {
        TAU * self.freq_hz
    }

    pub fn magnitude(&self) -> f64 {
        self.z.norm()
    }

    pub fn phase_deg(&self) -> f64 {
        self.z.arg().to_degrees()
    }
}

/// `V(k) / I(k)` of the averaged spectra at the excited bins; DC is never reported.
pub fn nonparametric_impedance(
    spectra: &SpectralSet,
    excited_bins: &[usize],
) -> Result<Vec<ImpedancePoint>> {
    if let Some(&k) = excited_bins.iter().find(|&&k| k >= spectra.bins()) {
        return Err(Error::InvalidArgument(format!(
            "bin {k} beyond the last stored bin {}",
            spectra.bins() - 1
        )));
    }
    let bins: Vec<usize> = excited_bins.iter().copied().filter(|&k| k > 0).collect();
    let peak = bins
        .iter()
        .map(|&k| spectra.mean_current[k].norm())
        .fold(0.0, f64::max);
    let mut out = Vec::with_capacity(bins.len());
    for k in bins {
        let i = spectra.mean_current[k];
        if i.norm() <= 1e-12 * peak || i.norm() == 0.0 {
            log::warn!("skipping bin {k}: current spectrum vanishes");
            continue;
        }
        out.push(ImpedancePoint {
            freq_hz: spectra.freq_hz[k],
            z: spectra.mean_voltage[k] / i,
        });
    }
    Ok(out)
}

/// Bins whose mean current magnitude exceeds `factor` times the median magnitude
/// over bins `1..=max_estimation_bin`.
pub fn detect_excited_bins(spectra: &SpectralSet, factor: f64) -> Vec<usize> {
    let top = spectra.max_estimation_bin();
    if top < 1 {
        return Vec::new();
    }
    let mut mags: Vec<f64> = (1..=top).map(|k| spectra.mean_current[k].norm()).collect();
    mags.sort_by(|a, b| a.total_cmp(b));
    let median = mags[mags.len() / 2];
    (1..=top)
        .filter(|&k| spectra.mean_current[k].norm() > factor * median)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_periodic_noise, SignalKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn direct_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, &xi)| {
                        let ang = -TAU * ((k * i) % n) as f64 / n as f64;
                        xi * Complex64::new(ang.cos(), ang.sin())
                    })
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect()
    }

    fn record(samples: Vec<f64>, fs: f64, periods: usize, kind: SignalKind) -> TimeRecord {
        let period_s = samples.len() as f64 / periods as f64 / fs;
        TimeRecord::new(samples, fs, periods, period_s, kind).unwrap()
    }

    #[test]
    fn dft_of_constant() {
        let x = dft(&[3.5; 12]).unwrap();
        assert!((x[0] - Complex64::new(3.5, 0.0)).norm() < 1e-15);
        assert!(x[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn dft_of_sine() {
        let n = 16;
        let xs: Vec<f64> = (0..n).map(|i| (TAU * i as f64 / n as f64).sin()).collect();
        let x = dft(&xs).unwrap();
        assert!((x[1] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((x[n - 1] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        for (k, xk) in x.iter().enumerate() {
            if k != 1 && k != n - 1 {
                assert!(xk.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [8, 15, 64] {
            let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let fast = dft(&xs).unwrap();
            let slow = direct_dft(&xs);
            let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() <= 1e-12 * scale);
            }
        }
        assert!(dft(&[]).is_err());
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = dft(&xs).unwrap();
        let time = xs.iter().map(|v| v * v).sum::<f64>() / xs.len() as f64;
        let freq = x.iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!((time - freq).abs() <= 1e-10 * time);
    }

    #[test]
    fn noiseless_periods_have_zero_variance() {
        let i = generate_periodic_noise(1.0, 32.0, 4, 1).unwrap();
        let v = i
            .with_samples(i.samples().iter().map(|x| 0.3 * x + 1.0).collect())
            .unwrap();
        let s = per_period_spectra(&i, &v).unwrap();
        let noise = s.noise.as_ref().unwrap();
        assert!(noise.var_current.iter().all(|&x| x < 1e-30));
        assert!(noise.var_voltage.iter().all(|&x| x < 1e-30));
        assert_eq!(s.bins(), 17);
    }

    #[test]
    fn self_covariance_equals_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..96).map(|_| StandardNormal.sample(&mut rng)).collect();
        let i = record(xs.clone(), 8.0, 3, SignalKind::Current);
        let v = record(xs, 8.0, 3, SignalKind::Voltage);
        let s = per_period_spectra(&i, &v).unwrap();
        let noise = s.noise.unwrap();
        for k in 0..s.freq_hz.len() {
            assert!((noise.covar_vi[k].re - noise.var_current[k]).abs() < 1e-15);
            assert!(noise.covar_vi[k].im.abs() < 1e-15);
        }
    }

    #[test]
    fn mean_is_average_of_periods_and_cauchy_schwarz_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..120).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..120).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = per_period_spectra(
            &record(a, 10.0, 4, SignalKind::Current),
            &record(b, 10.0, 4, SignalKind::Voltage),
        )
        .unwrap();
        let noise = s.noise.as_ref().unwrap();
        for k in 0..s.bins() {
            let avg: Complex64 = s.per_period_current.iter().map(|p| p[k]).sum::<Complex64>() / 4.0;
            assert!((avg - s.mean_current[k]).norm() < 1e-15);
            assert!(noise.var_current[k] >= 0.0 && noise.var_voltage[k] >= 0.0);
            assert!(
                noise.covar_vi[k].norm_sqr()
                    <= noise.var_current[k] * noise.var_voltage[k] * (1.0 + 1e-12)
            );
        }
    }

    #[test]
    fn white_noise_bin_variance() {
        // E[sigma_I^2(k)] = sigma^2 / M under the 1/M normalization.
        let (m, periods, sigma, trials) = (64usize, 4usize, 0.7, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bins = m / 2 + 1;
        let mut acc = vec![0.0; bins];
        for _ in 0..trials {
            let xs: Vec<f64> = (0..m * periods)
                .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let rec = record(xs, 64.0, periods, SignalKind::Current);
            let s = per_period_spectra(&rec, &rec).unwrap();
            for (a, v) in acc.iter_mut().zip(&s.noise.unwrap().var_current) {
                *a += v / trials as f64;
            }
        }
        let expected = sigma * sigma / m as f64;
        // Interior bins: 600 complex dof per bin, sd ~ 4%. DC/Nyquist are real
        // (300 dof) but have the same expectation.
        for (k, v) in acc.iter().enumerate() {
            assert!(
                (v / expected - 1.0).abs() < 0.2,
                "bin {k}: {v} vs {expected}"
            );
        }
        let pooled = acc[1..bins - 1].iter().sum::<f64>() / (bins - 2) as f64;
        assert!((pooled / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn mean_spectrum_variance_scales_inverse_with_periods() {
        let m = 128usize;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut points = Vec::new();
        for periods in [2usize, 4, 8, 16] {
            let mut acc = 0.0;
            let trials = 40;
            for _ in 0..trials {
                let xs: Vec<f64> = (0..m * periods)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let rec = record(xs, 128.0, periods, SignalKind::Current);
                let s = per_period_spectra(&rec, &rec).unwrap();
                acc += s.mean_current[1..m / 2]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>();
            }
            points.push(((periods as f64).ln(), (acc / trials as f64).ln()));
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.0).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn mismatched_records_rejected() {
        let i = record(vec![1.0; 16], 8.0, 2, SignalKind::Current);
        let v = record(vec![1.0; 16], 8.0, 4, SignalKind::Voltage);
        assert!(matches!(
            per_period_spectra(&i, &v),
            Err(Error::MetadataMismatch(_))
        ));
    }

    #[test]
    fn single_period_has_no_covariances() {
        let i = record(vec![1.0, 2.0, 3.0, 4.0], 4.0, 1, SignalKind::Current);
        let s = per_period_spectra(&i, &i).unwrap();
        assert!(s.noise.is_none());
    }

    #[test]
    fn nonparametric_constant_impedance_and_scaling() {
        let i = generate_periodic_noise(1.0, 32.0, 2, 2).unwrap();
        let v = i
            .with_samples(i.samples().iter().map(|x| 2.0 * x).collect())
            .unwrap();
        let s = per_period_spectra(&i, &v).unwrap();
        let bins: Vec<usize> = (0..=16).collect();
        let z = nonparametric_impedance(&s, &bins).unwrap();
        assert_eq!(z.len(), 16, "DC excluded");
        assert!(z
            .iter()
            .all(|p| (p.z - Complex64::new(2.0, 0.0)).norm() < 1e-12));

        let i3 = i
            .with_samples(i.samples().iter().map(|x| -3.0 * x).collect())
            .unwrap();
        let v3 = v
            .with_samples(v.samples().iter().map(|x| -3.0 * x).collect())
            .unwrap();
        let z3 = nonparametric_impedance(&per_period_spectra(&i3, &v3).unwrap(), &bins).unwrap();
        for (a, b) in z.iter().zip(&z3) {
            assert!((a.z - b.z).norm() < 1e-12);
        }
    }

    #[test]
    fn nonparametric_skips_dead_bins() {
        let xs: Vec<f64> = (0..8).map(|n| (TAU * n as f64 / 8.0).sin()).collect();
        let i = record(xs.clone(), 8.0, 1, SignalKind::Current);
        let s = per_period_spectra(&i, &i).unwrap();
        let z = nonparametric_impedance(&s, &[1, 2, 3]).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].freq_hz, 1.0);
        assert!(nonparametric_impedance(&s, &[9]).is_err());
    }
}
