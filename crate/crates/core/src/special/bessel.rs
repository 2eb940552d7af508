use super::{ln_gamma, ScaledSum};
use crate::error::{Result, ZlpError};

const SERIES_CAP: usize = 200_000;

/// `ln I_nu(kappa)` for the modified Bessel function of the first kind.
///
/// Uses the ascending series (with a running log scale) for moderate
/// arguments and the exponentially scaled large-argument expansion once
/// `kappa >= max(30, nu^2)`, where that expansion converges to full precision
/// before its terms start growing again.
pub fn log_bessel_i(nu: f64, kappa: f64) -> Result<f64> {
    Ok(log_bessel_i_scaled(nu, kappa)? + kappa)
}

/// `ln(e^{-kappa} I_nu(kappa))`, the exponentially scaled form.
pub fn log_bessel_i_scaled(nu: f64, kappa: f64) -> Result<f64> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(ZlpError::Domain(format!("Bessel order must be >= 0, got {nu}")));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(ZlpError::Domain(format!("Bessel argument must be > 0, got {kappa}")));
    }
    if kappa >= 30f64.max(nu * nu) {
        if let Some(v) = asymptotic_scaled(nu, kappa) {
            return Ok(v);
        }
    }
    Ok(series(nu, kappa)? - kappa)
}

fn series(nu: f64, kappa: f64) -> Result<f64> {
    let q = 0.25 * kappa * kappa;
    let mut acc = ScaledSum::new(1.0);
    let peak = (0.5 * kappa).ceil() as usize;
    for k in 1..SERIES_CAP {
        let kf = k as f64;
        acc.push_ratio(q / (kf * (nu + kf)));
        if k > peak && acc.relative_term() < 1e-17 {
            return Ok(nu * (0.5 * kappa).ln() - ln_gamma(nu + 1.0) + acc.ln());
        }
    }
    Err(ZlpError::NonConvergence { what: "Bessel I series", iterations: SERIES_CAP })
}

/// `e^z / sqrt(2 pi z) * sum_k (-1)^k a_k(nu) / z^k`; `None` if the terms
/// start growing before reaching machine precision.
fn asymptotic_scaled(nu: f64, z: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..500 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * z);
        if next == 0.0 {
            break;
        }
        if next.abs() > term.abs() && (odd * odd) > mu {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    if sum <= 0.0 {
        return None;
    }
    Some(-0.5 * (2.0 * std::f64::consts::PI * z).ln() + sum.ln())
}
