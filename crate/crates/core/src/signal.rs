//! Excitation design and synthesis.
//!
//! All random draws use [`ChaCha8Rng`] seeded through `SeedableRng::seed_from_u64`,
//! so every stochastic output is reproducible from its `u64` seed. Gaussian
//! samples come from `rand_distr::StandardNormal`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when comparing a frequency against a band edge.
const BAND_EPS: f64 = 1e-9;

/// Blueprint of a multisine `i(t) = sum_k a_k sin(2 pi k t / T_p + phi_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMultisineSpec", deny_unknown_fields)]
pub struct MultisineSpec {
    pub period_s: f64,
    pub harmonics: Vec<u64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMultisineSpec {
    period_s: f64,
    harmonics: Vec<u64>,
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl TryFrom<RawMultisineSpec> for MultisineSpec {
    type Error = Error;

    fn try_from(raw: RawMultisineSpec) -> Result<Self> {
        MultisineSpec::new(raw.period_s, raw.harmonics, raw.amplitudes, raw.phases)
    }
}

impl MultisineSpec {
    pub fn new(
        period_s: f64,
        harmonics: Vec<u64>,
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        if !(period_s.is_finite() && period_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "period must be positive, got {period_s}"
            )));
        }
        if harmonics.is_empty() {
            return Err(Error::InvalidArgument("empty harmonic set".into()));
        }
        if harmonics.len() != amplitudes.len() || harmonics.len() != phases.len() {
            return Err(Error::InvalidArgument(format!(
                "{} harmonics, {} amplitudes, {} phases",
                harmonics.len(),
                amplitudes.len(),
                phases.len()
            )));
        }
        if harmonics[0] == 0 {
            return Err(Error::InvalidArgument("DC cannot be excited".into()));
        }
        if harmonics.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "harmonics must be strictly increasing".into(),
            ));
        }
        if let Some(a) = amplitudes.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "amplitudes must be strictly positive, got {a}"
            )));
        }
        if let Some(p) = phases.iter().find(|p| !(**p >= 0.0 && **p < TAU)) {
            return Err(Error::InvalidArgument(format!(
                "phases must lie in [0, 2pi), got {p}"
            )));
        }
        Ok(Self {
            period_s,
            harmonics,
            amplitudes,
            phases,
        })
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.harmonics
            .iter()
            .map(|&h| h as f64 / self.period_s)
            .collect()
    }

    /// Excited bins of a one-period DFT (equal to the harmonic numbers).
    pub fn excited_bins(&self) -> Vec<usize> {
        self.harmonics.iter().map(|&h| h as usize).collect()
    }

    /// RMS of the continuous-time multisine, `sqrt(sum a_k^2 / 2)`.
    pub fn rms(&self) -> f64 {
        (self.amplitudes.iter().map(|a| a * a).sum::<f64>() / 2.0).sqrt()
    }

    /// Rescales the amplitudes so that [`MultisineSpec::rms`] equals `target`.
    pub fn scaled_to_rms(&self, target: f64) -> Result<Self> {
        if !(target.is_finite() && target > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "RMS target must be positive, got {target}"
            )));
        }
        let gain = target / self.rms();
        Ok(Self {
            amplitudes: self.amplitudes.iter().map(|a| a * gain).collect(),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Current,
    Voltage,
}

/// A uniformly sampled record spanning an integer number of periods.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRecord {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    periods: usize,
    period_s: f64,
    kind: SignalKind,
}

/// Number of samples in one period; errors unless `period_s * fs` is a positive integer.
pub fn samples_per_period(period_s: f64, sample_rate_hz: f64) -> Result<usize> {
    if !(period_s.is_finite() && period_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "period must be positive, got {period_s}"
        )));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let exact = period_s * sample_rate_hz;
    let m = exact.round();
    if m < 1.0 || (exact - m).abs() > 1e-9 * m.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "period_s * sample_rate_hz = {exact} is not a positive integer"
        )));
    }
    Ok(m as usize)
}

impl TimeRecord {
    pub fn new(
        samples: Vec<f64>,
        sample_rate_hz: f64,
        periods: usize,
        period_s: f64,
        kind: SignalKind,
    ) -> Result<Self> {
        if periods == 0 {
            return Err(Error::InvalidArgument(
                "at least one period required".into(),
            ));
        }
        let m = samples_per_period(period_s, sample_rate_hz)?;
        if samples.len() != m * periods {
            return Err(Error::MetadataMismatch(format!(
                "{} samples, expected {} periods x {} samples",
                samples.len(),
                periods,
                m
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            periods,
            period_s,
            kind,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples_per_period(&self) -> usize {
        self.samples.len() / self.periods
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Samples of period `p` (zero-based).
    pub fn period(&self, p: usize) -> &[f64] {
        let m = self.samples_per_period();
        &self.samples[p * m..(p + 1) * m]
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Same metadata, new samples (length must match).
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(
            samples,
            self.sample_rate_hz,
            self.periods,
            self.period_s,
            self.kind,
        )
    }

    pub fn with_kind(mut self, kind: SignalKind) -> Self {
        self.kind = kind;
        self
    }

    /// True when `other` shares sample rate, period count and period length.
    pub fn same_geometry(&self, other: &TimeRecord) -> bool {
        self.periods == other.periods
            && self.samples.len() == other.samples.len()
            && rel_close(self.sample_rate_hz, other.sample_rate_hz)
            && rel_close(self.period_s, other.period_s)
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn nearest_odd(h: f64) -> i64 {
    2 * ((h - 1.0) / 2.0).round() as i64 + 1
}

/// Odd random-phase multisine on a quasi-logarithmic harmonic grid.
///
/// The ideal grid `f_min * 10^(i / points_per_decade)` is mapped to harmonic
/// numbers, each rounded to the nearest odd integer (nudged back into the band
/// when rounding overshoots an edge) and duplicates dropped. Amplitudes are 1.
pub fn design_odd_quasilog(
    period_s: f64,
    f_min: f64,
    f_max: f64,
    points_per_decade: u32,
    seed: u64,
) -> Result<MultisineSpec> {
    if !(period_s.is_finite() && period_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "period must be positive, got {period_s}"
        )));
    }
    if points_per_decade == 0 {
        return Err(Error::InvalidArgument(
            "points_per_decade must be >= 1".into(),
        ));
    }
    if !(f_min.is_finite() && f_max.is_finite()) || f_min * period_s < 1.0 - BAND_EPS {
        return Err(Error::InvalidArgument(format!(
            "f_min = {f_min} Hz is below the fundamental {} Hz",
            1.0 / period_s
        )));
    }
    if f_max < f_min {
        return Err(Error::InvalidArgument(format!(
            "f_max = {f_max} Hz is below f_min = {f_min} Hz"
        )));
    }

    let lo = f_min * period_s * (1.0 - BAND_EPS);
    let hi = f_max * period_s * (1.0 + BAND_EPS);
    let ppd = points_per_decade as f64;
    let steps = ((f_max / f_min).log10() * ppd + BAND_EPS).floor() as i64;

    let mut selected = BTreeSet::new();
    for i in 0..=steps {
        let ideal = f_min * period_s * 10f64.powf(i as f64 / ppd);
        let mut k = nearest_odd(ideal);
        if (k as f64) < lo {
            k += 2;
        }
        if (k as f64) > hi {
            k -= 2;
        }
        if k >= 1 && (k as f64) >= lo && (k as f64) <= hi {
            selected.insert(k as u64);
        }
    }
    if selected.is_empty() {
        return Err(Error::NoExcitableHarmonic {
            f_min_hz: f_min,
            f_max_hz: f_max,
        });
    }

    let harmonics: Vec<u64> = selected.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = harmonics
        .iter()
        .map(|_| {
            let p = rng.random::<f64>() * TAU;
            if p >= TAU {
                0.0
            } else {
                p
            }
        })
        .collect();
    let amplitudes = vec![1.0; harmonics.len()];
    MultisineSpec::new(period_s, harmonics, amplitudes, phases)
}

/// Samples the multisine at `t = n / fs` for `periods` whole periods.
pub fn synthesize_multisine(
    spec: &MultisineSpec,
    sample_rate_hz: f64,
    periods: usize,
) -> Result<TimeRecord> {
    let nyquist_hz = sample_rate_hz / 2.0;
    for &h in &spec.harmonics {
        let freq_hz = h as f64 / spec.period_s;
        if freq_hz >= nyquist_hz {
            return Err(Error::Nyquist {
                harmonic: h,
                freq_hz,
                nyquist_hz,
            });
        }
    }
    let m = samples_per_period(spec.period_s, sample_rate_hz)?;

    // Phase index (h * n) mod m keeps the record exactly periodic.
    let one_period: Vec<f64> = (0..m as u64)
        .map(|n| {
            spec.harmonics
                .iter()
                .zip(&spec.amplitudes)
                .zip(&spec.phases)
                .map(|((&h, &a), &phi)| {
                    let idx = (h % m as u64) * n % m as u64;
                    a * (TAU * idx as f64 / m as f64 + phi).sin()
                })
                .sum()
        })
        .collect();

    let samples = tile(&one_period, periods);
    TimeRecord::new(
        samples,
        sample_rate_hz,
        periods,
        spec.period_s,
        SignalKind::Current,
    )
}

/// One period of zero-mean white Gaussian noise, repeated `periods` times.
pub fn generate_periodic_noise(
    period_s: f64,
    sample_rate_hz: f64,
    periods: usize,
    seed: u64,
) -> Result<TimeRecord> {
    let m = samples_per_period(period_s, sample_rate_hz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut one_period: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let mean = one_period.iter().sum::<f64>() / m as f64;
    one_period.iter_mut().for_each(|x| *x -= mean);
    TimeRecord::new(
        tile(&one_period, periods),
        sample_rate_hz,
        periods,
        period_s,
        SignalKind::Current,
    )
}

/// Scales `record` so that its RMS equals `rms_target`.
pub fn scale_to_rms(record: &TimeRecord, rms_target: f64) -> Result<TimeRecord> {
    if !(rms_target.is_finite() && rms_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "RMS target must be positive, got {rms_target}"
        )));
    }
    let rms = record.rms();
    if rms == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let gain = rms_target / rms;
    record.with_samples(record.samples().iter().map(|x| x * gain).collect())
}

fn tile(one_period: &[f64], periods: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(one_period.len() * periods);
    for _ in 0..periods {
        out.extend_from_slice(one_period);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft;
    use proptest::prelude::*;

    /// Independent reading of the rounding rule: for each grid point pick the
    /// closest odd k inside the band by exhaustive search (ties go up).
    fn brute_force_grid(period_s: f64, f_min: f64, f_max: f64, ppd: u32) -> Vec<u64> {
        let k_lo = (f_min * period_s - 1e-9).ceil() as u64;
        let k_hi = (f_max * period_s + 1e-9).floor() as u64;
        let odd: Vec<u64> = (k_lo..=k_hi).filter(|k| k % 2 == 1).collect();
        let mut out = BTreeSet::new();
        let mut i = 0;
        loop {
            let f = f_min * 10f64.powf(i as f64 / ppd as f64);
            if f > f_max * (1.0 + 1e-9) {
                break;
            }
            let h = f * period_s;
            let best = odd
                .iter()
                .copied()
                .min_by(|a, b| {
                    let da = (*a as f64 - h).abs();
                    let db = (*b as f64 - h).abs();
                    da.partial_cmp(&db).unwrap().then(b.cmp(a))
                })
                .unwrap();
            out.insert(best);
            i += 1;
        }
        out.into_iter().collect()
    }

    #[test]
    fn quasilog_matches_brute_force() {
        let spec = design_odd_quasilog(10.0, 0.1, 1.0, 5, 1).unwrap();
        let oracle = brute_force_grid(10.0, 0.1, 1.0, 5);
        assert_eq!(spec.harmonics, oracle);
        assert_eq!(spec.harmonics, vec![1, 3, 7, 9]);
        for (period, lo, hi, ppd) in [(200.0, 0.005, 80.0, 23), (50.0, 0.1, 9.0, 11)] {
            let spec = design_odd_quasilog(period, lo, hi, ppd, 3).unwrap();
            assert_eq!(spec.harmonics, brute_force_grid(period, lo, hi, ppd));
        }
    }

    #[test]
    fn quasilog_76_lines_over_measurement_band() {
        // 1/180 Hz is the 5.6 mHz band edge before rounding.
        let spec = design_odd_quasilog(180.0, 1.0 / 180.0, 80.0, 23, 0).unwrap();
        assert_eq!(spec.harmonics.len(), 76);
        assert_eq!(spec.harmonics[0], 1);
        assert!(*spec.harmonics.last().unwrap() as f64 / 180.0 <= 80.0);
    }

    #[test]
    fn collapsed_band_gives_fundamental() {
        let spec = design_odd_quasilog(200.0, 0.005, 0.005, 10, 0).unwrap();
        assert_eq!(spec.harmonics, vec![1]);
        assert_eq!(spec.amplitudes, vec![1.0]);
    }

    #[test]
    fn band_without_odd_harmonic_is_rejected() {
        // Only harmonic 2 lies in [0.2, 0.2] Hz for a 10 s period.
        let err = design_odd_quasilog(10.0, 0.2, 0.2, 10, 0).unwrap_err();
        assert!(matches!(err, Error::NoExcitableHarmonic { .. }));
        assert!(err
            .to_string()
            .contains("no excitable odd harmonic in band"));
        assert!(design_odd_quasilog(10.0, 0.05, 1.0, 10, 0).is_err());
    }

    #[test]
    fn phases_are_seeded() {
        let a = design_odd_quasilog(200.0, 0.005, 80.0, 10, 7).unwrap();
        let b = design_odd_quasilog(200.0, 0.005, 80.0, 10, 7).unwrap();
        let c = design_odd_quasilog(200.0, 0.005, 80.0, 10, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.phases, c.phases);
        assert!(a.phases.iter().all(|p| (0.0..TAU).contains(p)));
    }

    #[test]
    fn single_sine_samples() {
        let spec = MultisineSpec::new(1.0, vec![1], vec![1.0], vec![0.0]).unwrap();
        let rec = synthesize_multisine(&spec, 8.0, 1).unwrap();
        assert_eq!(rec.len(), 8);
        for (n, x) in rec.samples().iter().enumerate() {
            assert!((x - (TAU * n as f64 / 8.0).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn two_sines_superpose() {
        let both = MultisineSpec::new(2.0, vec![1, 3], vec![0.7, 0.2], vec![0.3, 1.9]).unwrap();
        let s1 = MultisineSpec::new(2.0, vec![1], vec![0.7], vec![0.3]).unwrap();
        let s3 = MultisineSpec::new(2.0, vec![3], vec![0.2], vec![1.9]).unwrap();
        let r = synthesize_multisine(&both, 16.0, 2).unwrap();
        let r1 = synthesize_multisine(&s1, 16.0, 2).unwrap();
        let r3 = synthesize_multisine(&s3, 16.0, 2).unwrap();
        for i in 0..r.len() {
            assert!((r.samples()[i] - r1.samples()[i] - r3.samples()[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn simulation_protocol_length() {
        let spec = design_odd_quasilog(200.0, 0.005, 80.0, 23, 0).unwrap();
        let rec = synthesize_multisine(&spec, 200.0, 5).unwrap();
        assert_eq!(rec.len(), 200_000);
    }

    #[test]
    fn nyquist_violation_names_harmonic() {
        let spec = MultisineSpec::new(1.0, vec![1, 5], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        match synthesize_multisine(&spec, 8.0, 1) {
            Err(Error::Nyquist { harmonic, .. }) => assert_eq!(harmonic, 5),
            other => panic!("expected Nyquist error, got {other:?}"),
        }
    }

    #[test]
    fn multisine_spectrum_support() {
        let spec = design_odd_quasilog(10.0, 0.1, 4.0, 8, 11).unwrap();
        let periods = 3;
        let rec = synthesize_multisine(&spec, 20.0, periods).unwrap();
        let x = fft::forward(rec.samples());
        let n = x.len();
        let max = spec.amplitudes.iter().cloned().fold(0.0, f64::max);
        let mut excited = BTreeSet::new();
        for &h in &spec.harmonics {
            excited.insert(periods * h as usize);
            excited.insert(n - periods * h as usize);
        }
        for (k, xk) in x.iter().enumerate() {
            if excited.contains(&k) {
                assert!(xk.norm() > 0.1 * max / 2.0);
            } else {
                assert!(xk.norm() < 1e-10 * max, "bin {k}: {}", xk.norm());
            }
        }
    }

    #[test]
    fn odd_design_never_even() {
        for seed in 0..5 {
            for ppd in [3, 10, 40] {
                let spec = design_odd_quasilog(100.0, 0.01, 20.0, ppd, seed).unwrap();
                assert!(spec.harmonics.iter().all(|h| h % 2 == 1));
                assert!(spec.harmonics.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn periodic_noise_tiles_and_is_zero_mean() {
        let rec = generate_periodic_noise(2.0, 50.0, 3, 5).unwrap();
        let m = rec.samples_per_period();
        assert_eq!(rec.len(), 3 * m);
        assert_eq!(rec.period(0), rec.period(1));
        assert_eq!(rec.period(0), rec.period(2));
        let mean: f64 = rec.period(0).iter().sum::<f64>() / m as f64;
        assert!(mean.abs() < 1e-15);
    }

    #[test]
    fn periodic_noise_unit_variance() {
        // Sample variance of 40 000 N(0,1) draws has sd sqrt(2/M) ~ 0.7%;
        // 5% is a > 7 sigma bound.
        let rec = generate_periodic_noise(200.0, 200.0, 1, 42).unwrap();
        let m = rec.len() as f64;
        let var = rec.samples().iter().map(|x| x * x).sum::<f64>() / (m - 1.0);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn periodic_noise_spectrum_on_period_multiples() {
        let periods = 4;
        let rec = generate_periodic_noise(1.0, 64.0, periods, 9).unwrap();
        let x = fft::forward(rec.samples());
        let peak = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (k, xk) in x.iter().enumerate() {
            if k % periods != 0 {
                assert!(xk.norm() < 1e-12 * peak);
            }
        }
    }

    #[test]
    fn rms_scaling_examples() {
        let rec =
            TimeRecord::new(vec![2.0, -2.0, 2.0, -2.0], 4.0, 1, 1.0, SignalKind::Current).unwrap();
        let scaled = scale_to_rms(&rec, 0.5).unwrap();
        assert_eq!(scaled.samples(), &[0.5, -0.5, 0.5, -0.5]);
        let same = scale_to_rms(&rec, 2.0).unwrap();
        assert_eq!(same.samples(), rec.samples());

        let sine = MultisineSpec::new(1.0, vec![1], vec![1.0], vec![0.0]).unwrap();
        let rec = synthesize_multisine(&sine, 64.0, 1).unwrap();
        let scaled = scale_to_rms(&rec, 0.5).unwrap();
        let peak = scaled.samples().iter().cloned().fold(0.0, f64::max);
        assert!((peak - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((sine.scaled_to_rms(0.5).unwrap().amplitudes[0] - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rms_scaling_rejects_zero_signal() {
        let rec = TimeRecord::new(vec![0.0; 4], 4.0, 1, 1.0, SignalKind::Current).unwrap();
        assert_eq!(scale_to_rms(&rec, 1.0), Err(Error::ZeroSignal));
    }

    #[test]
    fn record_length_is_checked() {
        assert!(TimeRecord::new(vec![0.0; 7], 4.0, 2, 1.0, SignalKind::Current).is_err());
        assert!(TimeRecord::new(vec![0.0; 8], 4.0, 2, 1.0, SignalKind::Current).is_ok());
        assert!(TimeRecord::new(vec![0.0; 8], 4.0, 2, 1.1, SignalKind::Current).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = MultisineSpec::new(10.0, vec![1, 3], vec![1.0, 0.5], vec![0.0, 1.0]).unwrap();
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(json["period_s"], 10.0);
        assert_eq!(json["harmonics"], serde_json::json!([1, 3]));
        let back: MultisineSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
        let bad = serde_json::json!({"period_s": 1.0, "harmonics": [3, 1], "amplitudes": [1.0, 1.0], "phases": [0.0, 0.0]});
        assert!(serde_json::from_value::<MultisineSpec>(bad).is_err());
    }

    proptest! {
        #[test]
        fn rms_scaling_is_idempotent(
            xs in prop::collection::vec(-10.0f64..10.0, 16),
            target in 0.01f64..5.0,
        ) {
            prop_assume!(xs.iter().any(|x| x.abs() > 1e-3));
            let rec = TimeRecord::new(xs, 16.0, 1, 1.0, SignalKind::Voltage).unwrap();
            let once = scale_to_rms(&rec, target).unwrap();
            let twice = scale_to_rms(&once, target).unwrap();
            prop_assert!((once.rms() - target).abs() <= 1e-14 * target);
            for (a, b) in once.samples().iter().zip(twice.samples()) {
                prop_assert!((a - b).abs() <= 1e-13 * target.max(a.abs()));
            }
        }
    }
}
