//! Randles circuit values from estimated rational coefficients.
//!
//! The six coefficients `a_2, a_3, b_0..b_3` over-determine the four circuit
//! elements. The fit minimizes relative coefficient residuals over
//! log-parameters with damped Gauss-Newton.

use std::f64::consts::SQRT_2;

use nalgebra::{Matrix6x4, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HalfOrderRational, RandlesParams};

const MAX_HALVINGS: usize = 30;
const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmFitResult {
    pub params: RandlesParams,
    /// Root-sum-square of the six relative coefficient residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm at the start and after each accepted step.
    pub residual_history: Vec<f64>,
}

fn check_orders(r: &HalfOrderRational) -> Result<HalfOrderRational> {
    if r.a.len() != 3 || r.b.len() != 4 {
        return Err(Error::InconsistentCoefficients(format!(
            "expected orders (3, 3), got ({}, {})",
            r.a.len(),
            r.b.len().saturating_sub(1)
        )));
    }
    r.normalized()
}

/// Closed-form inversion using `b_0`, `a_2`, `a_3` and `b_1` only.
pub fn init_from_coefficients(r: &HalfOrderRational) -> Result<RandlesParams> {
    let r = check_orders(r)?;
    let (a2, a3) = (r.a[1], r.a[2]);
    let (b0, b1) = (r.b[0], r.b[1]);
    for (name, v) in [("b_0", b0), ("a_2", a2), ("a_3", a3), ("b_1", b1)] {
        if !(v > 0.0) {
            return Err(Error::InconsistentCoefficients(format!(
                "{name} = {v} is not positive"
            )));
        }
    }
    let sigma_w = b0 / SQRT_2;
    let c_dl = a2 / b0;
    let r_ct = a3 * b0 / a2;
    let r_s = b1 - r_ct;
    if !(r_s > 0.0) {
        return Err(Error::InconsistentCoefficients(format!(
            "R_S = b_1 - R_CT = {r_s} is not positive"
        )));
    }
    Ok(RandlesParams {
        r_s,
        r_ct,
        c_dl,
        sigma_w,
        ocv: RandlesParams::DEFAULT_OCV,
    })
}

struct Problem {
    target: [f64; 6],
    weight: [f64; 6],
}

impl Problem {
    fn new(r: &HalfOrderRational) -> Self {
        let target = [r.a[1], r.a[2], r.b[0], r.b[1], r.b[2], r.b[3]];
        let weight = target.map(|c| c.abs().max(WEIGHT_FLOOR));
        Self { target, weight }
    }

    /// Model coefficients and their derivatives with respect to the log-parameters
    /// `[ln R_S, ln R_CT, ln C_DL, ln sigma]`.
    fn model(x: &Vector4<f64>) -> ([f64; 6], [[f64; 4]; 6]) {
        let (rs, rct, c, s) = (x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp());
        let w = SQRT_2 * s;
        let g = [w * c, rct * c, w, rs + rct, rs * w * c, rs * rct * c];
        let jac = [
            [0.0, 0.0, g[0], g[0]],
            [0.0, g[1], g[1], 0.0],
            [0.0, 0.0, 0.0, g[2]],
            [rs, rct, 0.0, 0.0],
            [g[4], 0.0, g[4], g[4]],
            [g[5], g[5], g[5], 0.0],
        ];
        (g, jac)
    }

    fn residual(&self, x: &Vector4<f64>) -> Vector6<f64> {
        let (g, _) = Self::model(x);
        Vector6::from_fn(|i, _| (g[i] - self.target[i]) / self.weight[i])
    }

    fn jacobian(&self, x: &Vector4<f64>) -> Matrix6x4<f64> {
        let (_, jac) = Self::model(x);
        Matrix6x4::from_fn(|i, j| jac[i][j] / self.weight[i])
    }
}

fn to_log(p: &RandlesParams) -> Vector4<f64> {
    Vector4::new(p.r_s.ln(), p.r_ct.ln(), p.c_dl.ln(), p.sigma_w.ln())
}

fn from_log(x: &Vector4<f64>, ocv: f64) -> RandlesParams {
    RandlesParams {
        r_s: x[0].exp(),
        r_ct: x[1].exp(),
        c_dl: x[2].exp(),
        sigma_w: x[3].exp(),
        ocv,
    }
}

/// Fits the Randles parameters, starting from [`init_from_coefficients`].
pub fn fit_randles(r: &HalfOrderRational, max_iter: usize, tol: f64) -> Result<EcmFitResult> {
    let start = init_from_coefficients(r)?;
    fit_randles_from(r, &start, max_iter, tol)
}

/// Damped Gauss-Newton from a caller-supplied start.
///
/// Each iteration solves the linearized least-squares problem, then halves the
/// step (at most 30 times) until the residual norm does not increase. Stops when
/// the step norm drops below `tol` or after `max_iter` iterations.
pub fn fit_randles_from(
    r: &HalfOrderRational,
    start: &RandlesParams,
    max_iter: usize,
    tol: f64,
) -> Result<EcmFitResult> {
    let r = check_orders(r)?;
    start.validate()?;
    let problem = Problem::new(&r);
    let mut x = to_log(start);
    let mut norm = problem.residual(&x).norm();
    let mut history = vec![norm];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let f = problem.residual(&x);
        let jac = problem.jacobian(&x);
        let step = jac
            .svd(true, true)
            .solve(&(-f), 1e-14)
            .map_err(|e| Error::Linalg(e.to_string()))?;
        if step.norm() < tol {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = x + step * t;
            let trial_norm = problem.residual(&trial).norm();
            if trial_norm.is_finite() && trial_norm <= norm {
                accepted = Some((trial, trial_norm));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, trial_norm)) => {
                let moved = (trial - x).norm();
                x = trial;
                norm = trial_norm;
                history.push(norm);
                if moved < tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // No descent along the Gauss-Newton direction: numerical minimum.
                converged = true;
                break;
            }
        }
    }

    Ok(EcmFitResult {
        params: from_log(&x, start.ocv),
        residual_norm: norm,
        iterations,
        converged,
        residual_history: history,
    })
}
