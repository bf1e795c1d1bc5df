//! Equation-error estimation of the half-order rational model.
//!
//! For every selected bin `k` with `q_k = sqrt(j w_k)` the equation error is
//!
//! ```text
//! E(k) = sum_{n=1}^{Na} a_n q_k^n V(k) - sum_{n=0}^{Nb} b_n q_k^n I(k) + sum_{r=0}^{Nr} c_r q_k^r
//! ```
//!
//! which is linear in `theta = [a_1..a_Na, b_0..b_Nb, c_0..c_Nr]`. Stacking the
//! real and imaginary parts of `E = K theta` keeps `theta` real; the minimizer of
//! `||K theta||` under `||theta|| = 1` is the right singular vector of the
//! smallest singular value. Weighted TLS repeats this with every row divided by
//! the equation-error standard deviation evaluated at the previous estimate.
//!
//! Row weighting alone leaves a noise bias in the homogeneous problem whenever
//! the weighted column-noise covariance `C` is far from a multiple of the
//! identity, which is the case for broadband noise excitation. With
//! `noise_compensation` set, each reweighted step instead minimizes
//! `theta' K'K theta / theta' C theta`, with `C` built from the same sample
//! covariances.

use std::f64::consts::{FRAC_PI_4, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_rational, sqrt_jw, HalfOrderRational};
use crate::spectra::{ImpedancePoint, SpectralSet};

/// Model orders, frequency window and iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub n_a: usize,
    pub n_b: usize,
    /// Order of the transient polynomial in `sqrt(j w)`.
    pub n_r: usize,
    pub k_min: usize,
    /// Defaults to the last bin below Nyquist.
    pub k_max: Option<usize>,
    /// Explicit bins to use; intersected with `[k_min, k_max]`.
    pub bin_mask: Option<Vec<usize>>,
    pub iterations: usize,
    pub column_scaling: bool,
    /// Solve the reweighted steps as a generalized TLS problem against the
    /// noise covariance of the regressor columns.
    pub noise_compensation: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            n_a: 3,
            n_b: 3,
            n_r: 1,
            k_min: 1,
            k_max: None,
            bin_mask: None,
            iterations: 10,
            column_scaling: true,
            noise_compensation: false,
        }
    }
}

impl EstimationConfig {
    pub fn with_mask(mut self, bins: Vec<usize>) -> Self {
        self.bin_mask = Some(bins);
        self
    }

    pub fn with_window(mut self, k_min: usize, k_max: usize) -> Self {
        self.k_min = k_min;
        self.k_max = Some(k_max);
        self
    }

    pub fn n_params(&self) -> usize {
        self.n_a + self.n_b + 1 + self.n_r + 1
    }

    /// Bins used for estimation, in increasing order.
    pub fn selected_bins(&self, spectra: &SpectralSet) -> Result<Vec<usize>> {
        if self.n_a == 0 {
            return Err(Error::InvalidArgument("n_a must be at least 1".into()));
        }
        let top = spectra.max_estimation_bin();
        let k_max = self.k_max.unwrap_or(top);
        if self.k_min < 1 || self.k_min > k_max || k_max > top {
            return Err(Error::InvalidArgument(format!(
                "bin window [{}, {}] outside [1, {}]",
                self.k_min, k_max, top
            )));
        }
        let bins: Vec<usize> = match &self.bin_mask {
            Some(mask) => {
                let mut m: Vec<usize> = mask
                    .iter()
                    .copied()
                    .filter(|k| (self.k_min..=k_max).contains(k))
                    .collect();
                m.sort_unstable();
                m.dedup();
                m
            }
            None => (self.k_min..=k_max).collect(),
        };
        if bins.is_empty() {
            return Err(Error::EmptyBinSelection);
        }
        Ok(bins)
    }
}

/// `(j w)^(n/2)` on the principal branch.
fn half_power(omega: f64, n: usize) -> Complex64 {
    Complex64::from_polar(omega.powf(n as f64 / 2.0), n as f64 * FRAC_PI_4)
}

/// Complex regression matrix, one row per selected bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub matrix: DMatrix<Complex64>,
    pub bins: Vec<usize>,
    pub omegas: Vec<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub n_r: usize,
}

impl Regressor {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `E = K theta` for a real parameter vector.
    pub fn equation_error(&self, theta: &[f64]) -> Vec<Complex64> {
        (0..self.rows())
            .map(|r| {
                (0..self.cols())
                    .map(|c| self.matrix[(r, c)] * theta[c])
                    .sum()
            })
            .collect()
    }

    /// Copy with every row multiplied by `weights[row]`.
    pub fn weighted(&self, weights: &[f64]) -> Regressor {
        let mut out = self.clone();
        for (r, &w) in weights.iter().enumerate() {
            out.matrix.row_mut(r).scale_mut(w);
        }
        out
    }
}

/// Columns `[q^n V, n = 1..Na | -q^n I, n = 0..Nb | q^r, r = 0..Nr]`.
pub fn build_regressor(spectra: &SpectralSet, cfg: &EstimationConfig) -> Result<Regressor> {
    let bins = cfg.selected_bins(spectra)?;
    let cols = cfg.n_params();
    let omegas: Vec<f64> = bins.iter().map(|&k| spectra.omega(k)).collect();
    let mut matrix = DMatrix::<Complex64>::zeros(bins.len(), cols);
    for (row, (&k, &w)) in bins.iter().zip(&omegas).enumerate() {
        let v = spectra.mean_voltage[k];
        let i = spectra.mean_current[k];
        let mut col = 0;
        for n in 1..=cfg.n_a {
            matrix[(row, col)] = half_power(w, n) * v;
            col += 1;
        }
        for n in 0..=cfg.n_b {
            matrix[(row, col)] = -half_power(w, n) * i;
            col += 1;
        }
        for r in 0..=cfg.n_r {
            matrix[(row, col)] = half_power(w, r);
            col += 1;
        }
    }
    Ok(Regressor {
        matrix,
        bins,
        omegas,
        n_a: cfg.n_a,
        n_b: cfg.n_b,
        n_r: cfg.n_r,
    })
}

/// Estimated model with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    #[serde(flatten)]
    pub rational: HalfOrderRational,
    /// Transient polynomial `c_0..c_Nr`, on the same scale as `a_1 = 1`.
    #[serde(rename = "c")]
    pub transient: Vec<f64>,
    /// `sum_k |E(k)|^2 / sigma_E(k)^2` at the returned parameters.
    pub weighted_cost: f64,
    pub iterations_run: usize,
    /// Per-bin sigma_E of the last weighting (all ones when unweighted).
    pub sigma_e: Vec<f64>,
    pub bins: Vec<usize>,
    /// Weighted cost after each solve, starting with the unweighted one.
    pub cost_history: Vec<f64>,
    /// Smallest two singular values nearly coincide.
    pub ambiguous: bool,
}

impl EstimateResult {
    /// `[a.., b.., c..]` in regressor column order.
    pub fn theta(&self) -> Vec<f64> {
        self.rational
            .a
            .iter()
            .chain(&self.rational.b)
            .chain(&self.transient)
            .copied()
            .collect()
    }
}

struct Solution {
    theta: Vec<f64>,
    ambiguous: bool,
}

fn solve_homogeneous(
    reg: &Regressor,
    weights: &[f64],
    column_scaling: bool,
    noise: Option<&DMatrix<f64>>,
) -> Result<Solution> {
    let rows = reg.rows();
    let cols = reg.cols();
    if 2 * rows < cols {
        return Err(Error::Underdetermined {
            rows: 2 * rows,
            cols,
        });
    }
    let mut stacked = DMatrix::<f64>::zeros(2 * rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let z = reg.matrix[(r, c)] * weights[r];
            stacked[(r, c)] = z.re;
            stacked[(rows + r, c)] = z.im;
        }
    }
    let mut scale = vec![1.0; cols];
    if column_scaling {
        for (c, s) in scale.iter_mut().enumerate() {
            let norm = stacked.column(c).norm();
            if norm > 0.0 {
                *s = 1.0 / norm;
                stacked.column_mut(c).scale_mut(*s);
            }
        }
    }

    if stacked.iter().any(|x| !x.is_finite()) {
        return Err(Error::Linalg("non-finite regression matrix".into()));
    }
    if let Some(noise) = noise {
        let mut c = noise.clone();
        for i in 0..cols {
            for j in 0..cols {
                c[(i, j)] *= scale[i] * scale[j];
            }
        }
        if let Some(phi) = generalized_null_vector(&stacked, &c) {
            let theta: Vec<f64> = phi.iter().zip(&scale).map(|(p, s)| p * s).collect();
            return normalize(theta, false);
        }
        log::debug!("noise covariance unusable; falling back to plain TLS");
    }
    let svd = stacked.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Linalg("SVD did not return right singular vectors".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let smallest = order[0];
    let ambiguous = order.len() > 1 && {
        let (s1, s2) = (sv[order[0]], sv[order[1]]);
        s2 - s1 <= 1e-8 * s2
    };
    if ambiguous {
        log::warn!("TLS solution is not unique: two smallest singular values coincide");
    }

    let theta: Vec<f64> = (0..cols).map(|c| v_t[(smallest, c)] * scale[c]).collect();
    normalize(theta, ambiguous)
}

fn normalize(theta: Vec<f64>, ambiguous: bool) -> Result<Solution> {
    let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a1 = theta[0];
    if a1.abs() < 1e-10 * norm || a1 == 0.0 {
        return Err(Error::Normalization);
    }
    Ok(Solution {
        theta: theta.iter().map(|x| x / a1).collect(),
        ambiguous,
    })
}

/// Minimizer of `phi' K'K phi / phi' C phi`, or `None` when the problem is
/// degenerate (exact data or no noise information).
///
/// With `K = QR` this is the dominant eigenvector of `R^-T C R^-1`, mapped back
/// through `R^-1`.
fn generalized_null_vector(k: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<Vec<f64>> {
    let r = k.clone().qr().r();
    let diag: Vec<f64> = r.diagonal().iter().map(|d| d.abs()).collect();
    let d_max = diag.iter().copied().fold(0.0, f64::max);
    let d_min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(d_min > 1e-10 * d_max) {
        return None;
    }
    let r_inv = r.try_inverse()?;
    let m = r_inv.transpose() * c * &r_inv;
    let eig = ((&m + m.transpose()) * 0.5).symmetric_eigen();
    let (top, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return None;
    }
    let phi = r_inv * eig.eigenvectors.column(top);
    Some(phi.iter().copied().collect())
}

/// Real Gram matrix of the weighted row noise, so that
/// `theta' C theta = sum_k w_k^2 sigma_E(k)^2` for real `theta`.
fn noise_gram(spectra: &SpectralSet, reg: &Regressor, weights: &[f64]) -> Result<DMatrix<f64>> {
    let noise = spectra
        .noise
        .as_ref()
        .ok_or(Error::CovariancesUnavailable)?;
    let cols = reg.cols();
    let n_v = reg.n_a;
    let n_i = reg.n_b + 1;
    let mut gram = DMatrix::<f64>::zeros(cols, cols);
    for (row, (&k, &w)) in reg.bins.iter().zip(&reg.omegas).enumerate() {
        // Row noise is [g_V N_V, g_I N_I, 0].
        let g: Vec<Complex64> = (1..=n_v)
            .map(|n| half_power(w, n))
            .chain((0..n_i).map(|n| -half_power(w, n)))
            .collect();
        let (var_v, var_i, cov) = (
            noise.var_voltage[k],
            noise.var_current[k],
            noise.covar_vi[k],
        );
        let w2 = weights[row] * weights[row];
        for i in 0..g.len() {
            for j in 0..g.len() {
                let moment = match (i < n_v, j < n_v) {
                    (true, true) => Complex64::new(var_v, 0.0),
                    (false, false) => Complex64::new(var_i, 0.0),
                    (true, false) => cov.conj(),
                    (false, true) => cov,
                };
                gram[(i, j)] += w2 * (g[i].conj() * g[j] * moment).re;
            }
        }
    }
    Ok(gram)
}

fn split_theta(reg: &Regressor, theta: &[f64]) -> (HalfOrderRational, Vec<f64>) {
    let nb = reg.n_b + 1;
    let a = theta[..reg.n_a].to_vec();
    let b = theta[reg.n_a..reg.n_a + nb].to_vec();
    let c = theta[reg.n_a + nb..].to_vec();
    (HalfOrderRational { a, b }, c)
}

fn weighted_cost(reg: &Regressor, theta: &[f64], sigma_e: &[f64]) -> f64 {
    reg.equation_error(theta)
        .iter()
        .zip(sigma_e)
        .map(|(e, s)| e.norm_sqr() / (s * s))
        .sum()
}

/// Unweighted TLS estimate normalized to `a_1 = 1`.
pub fn tls_solve(reg: &Regressor, cfg: &EstimationConfig) -> Result<EstimateResult> {
    let ones = vec![1.0; reg.rows()];
    weighted_tls_solve(reg, &ones, cfg.column_scaling)
}

/// TLS with every row divided by `sigma_e[row]`.
pub fn weighted_tls_solve(
    reg: &Regressor,
    sigma_e: &[f64],
    column_scaling: bool,
) -> Result<EstimateResult> {
    if sigma_e.len() != reg.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} rows",
            sigma_e.len(),
            reg.rows()
        )));
    }
    if let Some(s) = sigma_e.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sigma_E must be positive and finite, got {s}"
        )));
    }
    weighted_solve(reg, sigma_e, column_scaling, None)
}

fn weighted_solve(
    reg: &Regressor,
    sigma_e: &[f64],
    column_scaling: bool,
    spectra: Option<&SpectralSet>,
) -> Result<EstimateResult> {
    // Only relative weights matter; keep the largest at 1.
    let s_min = sigma_e.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = sigma_e.iter().map(|s| s_min / s).collect();
    let gram = spectra.map(|s| noise_gram(s, reg, &weights)).transpose()?;
    let sol = solve_homogeneous(reg, &weights, column_scaling, gram.as_ref())?;
    let cost = weighted_cost(reg, &sol.theta, sigma_e);
    let (rational, transient) = split_theta(reg, &sol.theta);
    Ok(EstimateResult {
        rational,
        transient,
        weighted_cost: cost,
        iterations_run: 0,
        sigma_e: sigma_e.to_vec(),
        bins: reg.bins.clone(),
        cost_history: vec![cost],
        ambiguous: sol.ambiguous,
    })
}

/// Per-bin `sigma_E(k)` at the parameters of `theta`, over the bins `cfg` selects.
///
/// `sigma_E^2 = |A|^2 s_V^2 + |B|^2 s_I^2 - 2 Re{A s_VI^2 B^*}` with
/// `A = sum_{n>=1} a_n q^n` and `B = sum_{n>=0} b_n q^n`. Round-off negatives
/// are clamped to zero; no flooring happens here.
pub fn equation_error_sigma(
    spectra: &SpectralSet,
    theta: &EstimateResult,
    cfg: &EstimationConfig,
) -> Result<Vec<f64>> {
    let noise = spectra
        .noise
        .as_ref()
        .ok_or(Error::CovariancesUnavailable)?;
    let bins = cfg.selected_bins(spectra)?;
    Ok(bins
        .iter()
        .map(|&k| {
            let q = sqrt_jw(spectra.omega(k));
            let a = theta.rational.denominator(q);
            let b = theta.rational.numerator(q);
            let var = a.norm_sqr() * noise.var_voltage[k] + b.norm_sqr() * noise.var_current[k]
                - 2.0 * (a * noise.covar_vi[k] * b.conj()).re;
            var.max(0.0).sqrt()
        })
        .collect())
}

/// Floors `sigma` at `1e-8 * median`, or `1e-8 * max` when the median is zero.
///
/// Noiseless data gives all zeros; only relative weights matter, so that case
/// becomes uniform unit weights and keeps the weighted cost finite.
pub fn floor_sigma(sigma: &[f64]) -> Vec<f64> {
    let mut sorted = sigma.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let max = sorted.last().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return vec![1.0; sigma.len()];
    }
    let reference = if median > 0.0 { median } else { max };
    let floor = 1e-8 * reference;
    sigma.iter().map(|&s| s.max(floor)).collect()
}

/// Iterated weighted TLS: an unweighted start followed by `cfg.iterations`
/// reweighted solves.
pub fn wtls_estimate(spectra: &SpectralSet, cfg: &EstimationConfig) -> Result<EstimateResult> {
    let reg = build_regressor(spectra, cfg)?;
    let mut result = tls_solve(&reg, cfg)?;
    if cfg.iterations == 0 {
        return Ok(result);
    }
    if spectra.noise.is_none() {
        return Err(Error::CovariancesUnavailable);
    }
    let mut history = result.cost_history.clone();
    for it in 1..=cfg.iterations {
        let sigma = floor_sigma(&equation_error_sigma(spectra, &result, cfg)?);
        let next = if cfg.noise_compensation {
            weighted_solve(&reg, &sigma, cfg.column_scaling, Some(spectra))?
        } else {
            weighted_tls_solve(&reg, &sigma, cfg.column_scaling)?
        };
        history.push(next.weighted_cost);
        result = EstimateResult {
            iterations_run: it,
            ..next
        };
    }
    result.cost_history = history;
    Ok(result)
}

/// Evaluates the estimated rational model; the transient term is left out.
pub fn parametric_impedance(
    result: &EstimateResult,
    omegas: &[f64],
) -> Result<Vec<ImpedancePoint>> {
    omegas
        .iter()
        .map(|&w| {
            Ok(ImpedancePoint {
                freq_hz: w / TAU,
                z: eval_rational(&result.rational, w)?,
            })
        })
        .collect()
}

/// Relative modulus error at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub freq_hz: f64,
    pub rel_error: f64,
}

/// `|Z_ref - Z_est| / |Z_ref|` point by point on a shared grid.
pub fn relative_error_curve(
    reference: &[ImpedancePoint],
    estimate: &[ImpedancePoint],
) -> Result<Vec<ErrorPoint>> {
    if reference.len() != estimate.len() {
        return Err(Error::GridMismatch(format!(
            "{} reference points vs {} estimated points",
            reference.len(),
            estimate.len()
        )));
    }
    let mut out = Vec::with_capacity(reference.len());
    for (r, e) in reference.iter().zip(estimate) {
        if (r.freq_hz - e.freq_hz).abs() > 1e-9 * r.freq_hz.abs().max(e.freq_hz.abs()) {
            return Err(Error::GridMismatch(format!(
                "{} Hz vs {} Hz",
                r.freq_hz, e.freq_hz
            )));
        }
        let mag = r.z.norm();
        if mag == 0.0 {
            log::warn!(
                "reference impedance vanishes at {} Hz; point skipped",
                r.freq_hz
            );
            continue;
        }
        out.push(ErrorPoint {
            freq_hz: r.freq_hz,
            rel_error: (r.z - e.z).norm() / mag,
        });
    }
    Ok(out)
}

/// `n` log-spaced angular frequencies between `f_lo` and `f_hi` (Hz).
pub fn log_omega_grid(f_lo: f64, f_hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![TAU * f_lo],
        _ => (0..n)
            .map(|i| TAU * f_lo * (f_hi / f_lo).powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}
