//! Randles circuit, Warburg element and the rational model in `sqrt(s)`.
//!
//! `sqrt(j w)` is always the principal branch `sqrt(w) exp(j pi/4)`; the
//! model layer is only ever evaluated at `w > 0`.

use std::f64::consts::{FRAC_PI_4, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeRecord;

/// Randles cell: `R_S` in series with `C_DL // (R_CT + Z_W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandlesParams {
    #[serde(rename = "r_s_ohm")]
    pub r_s: f64,
    #[serde(rename = "r_ct_ohm")]
    pub r_ct: f64,
    #[serde(rename = "c_dl_farad")]
    pub c_dl: f64,
    #[serde(rename = "sigma_w_ohm_per_sqrt_s")]
    pub sigma_w: f64,
    #[serde(rename = "ocv_v", default = "default_ocv")]
    pub ocv: f64,
}

fn default_ocv() -> f64 {
    RandlesParams::DEFAULT_OCV
}

impl RandlesParams {
    /// Placeholder OCV level; it never reaches the impedance.
    pub const DEFAULT_OCV: f64 = 3.6;

    /// Checked constructor: the four circuit elements must be strictly positive.
    pub fn new(r_s: f64, r_ct: f64, c_dl: f64, sigma_w: f64, ocv: f64) -> Result<Self> {
        let p = Self {
            r_s,
            r_ct,
            c_dl,
            sigma_w,
            ocv,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r_s", self.r_s),
            ("r_ct", self.r_ct),
            ("c_dl", self.c_dl),
            ("sigma_w", self.sigma_w),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !self.ocv.is_finite() {
            return Err(Error::InvalidArgument("ocv must be finite".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.r_s, self.r_ct, self.c_dl, self.sigma_w]
    }
}

/// `sqrt(j w)` on the principal branch.
pub fn sqrt_jw(omega: f64) -> Complex64 {
    Complex64::from_polar(omega.sqrt(), FRAC_PI_4)
}

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveFrequency(omega))
    }
}

/// `Z(jw) = R_S + 1 / (1 / (R_CT + sigma sqrt(2) / sqrt(jw)) + jw C_DL)`.
pub fn randles_impedance(p: &RandlesParams, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    let q = sqrt_jw(omega);
    let faradaic = p.r_ct + p.sigma_w * SQRT_2 / q;
    Ok(p.r_s + 1.0 / (1.0 / faradaic + q * q * p.c_dl))
}

/// `Z_W(w) = (1 - j) sigma / sqrt(w)`.
pub fn warburg_impedance(sigma_w: f64, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    Ok(Complex64::new(1.0, -1.0) * (sigma_w / omega.sqrt()))
}

/// Peak of the charge-transfer semicircle, `1 / (R_CT C_DL)` rad/s.
pub fn resonance_frequency(p: &RandlesParams) -> f64 {
    1.0 / (p.r_ct * p.c_dl)
}

/// Rational model `sum_n b_n q^n / sum_n a_n q^n` in `q = sqrt(s)`.
///
/// `a` holds `a_1..a_Na` (there is no `a_0`), `b` holds `b_0..b_Nb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfOrderRational {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl HalfOrderRational {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidArgument(
                "rational model needs at least one a and one b coefficient".into(),
            ));
        }
        if a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self { a, b })
    }

    pub fn n_a(&self) -> usize {
        self.a.len()
    }

    /// Highest numerator power (`b` holds `n_b + 1` entries).
    pub fn n_b(&self) -> usize {
        self.b.len() - 1
    }

    /// Rescaled so that `a_1 = 1`.
    pub fn normalized(&self) -> Result<Self> {
        let a1 = self.a[0];
        let scale = self
            .a
            .iter()
            .chain(&self.b)
            .map(|c| c.abs())
            .fold(0.0, f64::max);
        if a1.abs() <= 1e-10 * scale || a1 == 0.0 {
            return Err(Error::Normalization);
        }
        Ok(Self {
            a: self.a.iter().map(|c| c / a1).collect(),
            b: self.b.iter().map(|c| c / a1).collect(),
        })
    }

    /// Denominator `A(q) = sum_{n>=1} a_n q^n`.
    pub fn denominator(&self, q: Complex64) -> Complex64 {
        horner(&self.a, q) * q
    }

    /// Numerator `B(q) = sum_{n>=0} b_n q^n`.
    pub fn numerator(&self, q: Complex64) -> Complex64 {
        horner(&self.b, q)
    }
}

fn horner(coeffs: &[f64], q: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * q + c)
}

/// Exact coefficient map of the Randles circuit (orders 3/3, `a_1 = 1`).
pub fn randles_to_rational(p: &RandlesParams) -> HalfOrderRational {
    let w = p.sigma_w * SQRT_2;
    HalfOrderRational {
        a: vec![1.0, w * p.c_dl, p.r_ct * p.c_dl],
        b: vec![
            w,
            p.r_s + p.r_ct,
            p.r_s * w * p.c_dl,
            p.r_s * p.r_ct * p.c_dl,
        ],
    }
}

pub fn eval_rational(r: &HalfOrderRational, omega: f64) -> Result<Complex64> {
    check_omega(omega)?;
    let q = sqrt_jw(omega);
    let den = r.denominator(q);
    if den.norm() < 1e-30 {
        return Err(Error::Pole { omega });
    }
    Ok(r.numerator(q) / den)
}

/// State-of-charge trajectory obtained by Coulomb counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocTrace {
    /// SOC at `t = n / fs` for `n = 0..=N`; the last point closes the record.
    pub soc_percent: Vec<f64>,
    pub initial_soc: f64,
    pub capacity_ah: f64,
    /// Some point left `[0, 100] %`. Values are never clamped.
    pub out_of_range: bool,
}

impl SocTrace {
    pub fn final_soc(&self) -> f64 {
        *self.soc_percent.last().unwrap_or(&self.initial_soc)
    }
}

/// `SOC(t) = SOC_0 + 100 / (3600 C) * int_0^t i`, cumulative trapezoidal rule.
///
/// The record is periodic, so the closing sample at `t = T` is taken as the
/// first sample; a record of duration `T` yields `N + 1` SOC points.
pub fn coulomb_count(current: &TimeRecord, initial_soc: f64, capacity_ah: f64) -> Result<SocTrace> {
    if !(capacity_ah.is_finite() && capacity_ah > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "capacity must be positive, got {capacity_ah} Ah"
        )));
    }
    let x = current.samples();
    let dt = 1.0 / current.sample_rate_hz();
    let gain = 100.0 / (3600.0 * capacity_ah);
    let mut soc = Vec::with_capacity(x.len() + 1);
    soc.push(initial_soc);
    let mut charge = 0.0;
    for n in 0..x.len() {
        let next = if n + 1 < x.len() { x[n + 1] } else { x[0] };
        charge += 0.5 * (x[n] + next) * dt;
        soc.push(initial_soc + gain * charge);
    }
    let out_of_range = soc.iter().any(|s| !(0.0..=100.0).contains(s));
    if out_of_range {
        log::warn!("state of charge leaves [0, 100] %");
    }
    Ok(SocTrace {
        soc_percent: soc,
        initial_soc,
        capacity_ah,
        out_of_range,
    })
}
