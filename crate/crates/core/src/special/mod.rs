//! Special functions behind the Fisher-zoom marginals.
//!
//! Everything here works in log space: the marginal CDFs and their
//! normalizers overflow `f64` long before the concentrations the flows are
//! expected to handle.

mod bessel;
mod beta;
mod kummer;
mod newton;
pub(crate) mod quadrature;

pub use bessel::{log_bessel_i, log_bessel_i_scaled};
pub use beta::{ln_reg_inc_beta, ln_reg_inc_beta_pair, reg_inc_beta};
pub use kummer::{log_kummer_1f1, log_kummer_1f1_scaled};
pub use newton::{invert_monotone_logit, solve_increasing, LogitNewtonConfig, LOGIT_BOUND};

/// Natural log of the gamma function for positive arguments.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a slice; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + e^{-w})`.
#[inline]
pub fn sigmoid(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 - e^x)` for `x <= 0`.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^x - 1)` for `x >= 0`.
#[inline]
pub fn ln_expm1(x: f64) -> f64 {
    if x < 1.0 {
        x.exp_m1().ln()
    } else {
        x + log1m_exp(-x)
    }
}

/// Log of the binomial coefficient.
#[inline]
pub fn ln_binomial(n: u32, k: u32) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln C(n, k)` for `k = 0..=n`, from the product recurrence (relative error
/// `O(k ε)`, far below the `lgamma` route for `n` in the hundreds).
pub fn ln_binomial_row(n: u32) -> Vec<f64> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = 1.0f64;
    let mut log_offset = 0.0f64;
    for k in 0..=n {
        row.push(log_offset + c.ln());
        c *= (n - k) as f64 / (k + 1) as f64;
        if c > 1e250 {
            c /= 1e250;
            log_offset += 1e250f64.ln();
        }
    }
    row
}

/// Running sum of positive terms with an explicit log scale, for series whose
/// partial sums overflow `f64`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaledSum {
    log_scale: f64,
    sum: f64,
    term: f64,
}

const RESCALE: f64 = 1e250;

impl ScaledSum {
    pub(crate) fn new(first_term: f64) -> Self {
        Self { log_scale: 0.0, sum: first_term, term: first_term }
    }

    /// Multiply the running term by `ratio` and add it.
    #[inline]
    pub(crate) fn push_ratio(&mut self, ratio: f64) -> f64 {
        self.term *= ratio;
        self.sum += self.term;
        if self.sum > RESCALE {
            self.sum /= RESCALE;
            self.term /= RESCALE;
            self.log_scale += RESCALE.ln();
        }
        self.term
    }

    #[inline]
    pub(crate) fn relative_term(&self) -> f64 {
        self.term / self.sum
    }

    pub(crate) fn ln(&self) -> f64 {
        self.log_scale + self.sum.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_helpers_match_direct_evaluation() {
        assert!((log_add_exp(1.0, 2.0) - (1f64.exp() + 2f64.exp()).ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
        assert!((softplus(0.3) - (1.0 + 0.3f64.exp()).ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((log1m_exp(-0.1) - (1.0 - (-0.1f64).exp()).ln()).abs() < 1e-14);
        assert!((ln_expm1(3.0) - (3f64.exp() - 1.0).ln()).abs() < 1e-14);
        assert!((ln_expm1(1e-10) - (1e-10f64).ln()).abs() < 1e-9);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
        assert!((ln_binomial(5, 2) - 10f64.ln()).abs() < 1e-14);
        let row = ln_binomial_row(5);
        assert_eq!(row.len(), 6);
        assert!((row[2] - 10f64.ln()).abs() < 1e-15);
        assert_eq!(row[0], 0.0);
        let big = ln_binomial_row(2000);
        assert!((big[1000] - ln_binomial(2000, 1000)).abs() < 1e-9);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn scaled_sum_survives_overflow() {
        // sum_k x^k / k! for x = 1000 is e^1000
        let x = 1000.0;
        let mut s = ScaledSum::new(1.0);
        for k in 1..5000 {
            s.push_ratio(x / k as f64);
        }
        assert!((s.ln() - 1000.0).abs() < 1e-10);
    }
}
