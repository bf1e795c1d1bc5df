use num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward transform with the 1/N normalization used throughout the crate.
pub(crate) fn forward(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if n == 0 {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|x| *x *= scale);
    buf
}

/// Inverse of [`forward`]: `x(n) = sum_k X(k) exp(+j 2 pi k n / N)`, real part kept.
pub(crate) fn inverse_real(spectrum: &[Complex64]) -> Vec<f64> {
    let n = spectrum.len();
    let mut buf = spectrum.to_vec();
    if n == 0 {
        return Vec::new();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.into_iter().map(|x| x.re).collect()
}
